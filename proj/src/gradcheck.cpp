// Copyright Contributors to the mm3dgs Project
// SPDX-License-Identifier: Apache-2.0

#include "mm3dgs/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>

namespace mm3dgs {

GradcheckScene make_gradcheck_scene(uint64_t seed, int max_gaussians, int image_size) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double a, double b) { return a + (b - a) * unit(rng); };

  GradcheckScene s;
  const double f = image_size;
  s.intrinsics = {f, f, image_size / 2.0, image_size / 2.0, image_size, image_size};
  s.camera = Pose(so3_exp(Vec3(uniform(-0.2, 0.2), uniform(-0.2, 0.2), uniform(-0.2, 0.2))),
                  Vec3(uniform(-0.3, 0.3), uniform(-0.3, 0.3), uniform(-0.3, 0.3)));

  for (int attempt = 0;; ++attempt) {
    const int n = 5 + static_cast<int>(unit(rng) * (max_gaussians - 4));
    std::vector<int> rank(std::min(n, max_gaussians));
    std::iota(rank.begin(), rank.end(), 0);
    std::shuffle(rank.begin(), rank.end(), rng);
    std::vector<Gaussian3D> gs;
    for (int i : rank) {
      const double z = 1.5 + 0.06 * i;
      const double half = 0.4 * z;  // within the central 80% of the view
      const Vec3 local(uniform(-half, half), uniform(-half, half), z);
      Gaussian3D g;
      g.mu = s.camera.apply(local);
      g.rot = Quat(uniform(-1, 1), uniform(-1, 1), uniform(-1, 1), uniform(-1, 1));
      g.rot.coeffs() *= uniform(0.8, 1.2) / g.rot.norm();  // off the unit sphere on purpose
      g.log_scale = Vec3(std::log(uniform(0.02, 0.1)), std::log(uniform(0.02, 0.1)), std::log(uniform(0.02, 0.1)));
      g.opacity_logit = logit(uniform(0.1, 0.7));
      g.color = Vec3(unit(rng), unit(rng), unit(rng));
      gs.push_back(g);
    }
    GaussianMap map;
    map.insert(gs, 0);
    const RenderOutput out = render(map, s.camera, s.intrinsics);
    const double min_t =
        *std::min_element(out.context.final_transmittance.begin(), out.context.final_transmittance.end());
    if (min_t < 1e-3 && attempt < 100) continue;

    s.map = std::move(map);
    const int w = image_size, h = image_size;
    s.upstream.color = Image(w, h, 3);
    s.upstream.opacity = Image(w, h, 1);
    s.upstream.depth = Image(w, h, 1);
    for (double& v : s.upstream.color.data) v = uniform(-1.0, 1.0);
    for (double& v : s.upstream.opacity.data) v = uniform(-1.0, 1.0);
    for (size_t p = 0; p < s.upstream.depth.data.size(); ++p)
      s.upstream.depth.data[p] = out.opacity.data[p] > 0.5 ? uniform(-1.0, 1.0) : 0.0;
    return s;
  }
}

double weighted_render_sum(const RenderOutput& out, const RenderUpstream& up) {
  double sum = 0.0;
  for (size_t i = 0; i < out.color.data.size(); ++i) sum += out.color.data[i] * up.color.data[i];
  for (size_t i = 0; i < out.opacity.data.size(); ++i) sum += out.opacity.data[i] * up.opacity.data[i];
  for (size_t i = 0; i < out.depth.data.size(); ++i) sum += out.depth.data[i] * up.depth.data[i];
  return sum;
}

GradcheckReport gradient_audit(const GradcheckOptions& opt) {
  const auto start = std::chrono::steady_clock::now();
  GradcheckReport report;
  RenderSettings rs;
  rs.workers = opt.workers;

  for (int sc = 0; sc < opt.scenes; ++sc) {
    GradcheckScene s = make_gradcheck_scene(opt.seed * 1000003ull + static_cast<uint64_t>(sc), opt.max_gaussians,
                                            opt.image_size);
    const RenderOutput base = render(s.map, s.camera, s.intrinsics, rs);
    const RenderGradients g = render_backward(base.context, s.upstream, s.map, s.camera, s.intrinsics, rs);

    auto compare = [&](const std::string& name, double analytic, double numeric) {
      ++report.checks;
      const double scale = std::max(opt.abs_tol, opt.rel_tol * std::max(std::abs(analytic), std::abs(numeric)));
      const double ratio = std::abs(analytic - numeric) / scale;
      if (!(ratio <= report.worst_ratio)) report.worst_ratio = std::isnan(ratio) ? INFINITY : ratio;
      if (!(ratio <= 1.0)) report.failures.push_back({sc, name, analytic, numeric});
    };
    auto central = [&](const std::function<void(double)>& apply, double h) {
      apply(h);
      const double plus = weighted_render_sum(render(s.map, s.camera, s.intrinsics, rs), s.upstream);
      apply(-2.0 * h);
      const double minus = weighted_render_sum(render(s.map, s.camera, s.intrinsics, rs), s.upstream);
      apply(h);
      return (plus - minus) / (2.0 * h);
    };

    for (size_t i = 0; i < s.map.size(); ++i) {
      Gaussian3D& gs = s.map[i];
      const std::string id = "g" + std::to_string(i) + ".";
      const Gaussian3D saved = gs;
      for (int a = 0; a < 3; ++a) {
        compare(id + "mu" + std::to_string(a), g.d_mu[i][a],
                central([&](double d) { gs.mu[a] += d; }, opt.step_position));
        gs = saved;
      }
      for (int a = 0; a < 4; ++a) {
        // Raw quaternion components in (w, x, y, z) order.
        double* q[4] = {&gs.rot.w(), &gs.rot.x(), &gs.rot.y(), &gs.rot.z()};
        compare(id + "rot" + std::to_string(a), g.d_rot[i][a], central([&](double d) { *q[a] += d; }, opt.step_other));
        gs = saved;
      }
      for (int a = 0; a < 3; ++a) {
        compare(id + "scale" + std::to_string(a), g.d_scale[i][a],
                central([&](double d) { gs.log_scale[a] += d; }, opt.step_other));
        gs = saved;
      }
      compare(id + "opacity", g.d_opacity[i], central([&](double d) { gs.opacity_logit += d; }, opt.step_other));
      gs = saved;
      for (int a = 0; a < 3; ++a) {
        compare(id + "color" + std::to_string(a), g.d_color[i][a],
                central([&](double d) { gs.color[a] += d; }, opt.step_other));
        gs = saved;
      }
    }
    const Pose cam = s.camera;
    for (int a = 0; a < 6; ++a) {
      double offset = 0.0;
      const double num = central(
          [&](double d) {
            offset += d;
            Vec6 xi = Vec6::Zero();
            xi[a] = offset;
            s.camera = retract_left(cam, xi);
          },
          opt.step_position);
      s.camera = cam;
      compare("pose" + std::to_string(a), g.d_pose[a], num);
    }
    ++report.scenes;
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace mm3dgs
