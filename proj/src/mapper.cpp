// Copyright Contributors to the mm3dgs Project
// SPDX-License-Identifier: Apache-2.0

#include "mm3dgs/mapper.hpp"

#include <algorithm>
#include <cmath>

#include "mm3dgs/error.hpp"

namespace mm3dgs {

void MapperConfig::validate() const {
  if (iterations < 0) throw Error(ErrorCode::Config, "mapper iterations must be >= 0");
  if (!(opacity_threshold > 0.0) || !(depth_error_multiplier > 0.0))
    throw Error(ErrorCode::Config, "mapper thresholds must be positive");
}

DepthFit fit_depth_scale(const Image& d_e, const Image& d_r, const PixelMask& mask) {
  if (!d_e.same_shape(d_r) || mask.width != d_e.width || mask.height != d_e.height)
    throw Error(ErrorCode::ShapeMismatch, "depth fit inputs differ in shape");
  size_t n = 0;
  double mx = 0.0, my = 0.0;
  for (size_t p = 0; p < mask.data.size(); ++p) {
    if (!mask.data[p]) continue;
    ++n;
    mx += d_e.data[p];
    my += d_r.data[p];
  }
  if (n < 2) throw Error(ErrorCode::RankDeficient, "fewer than two pixels in the depth fit");
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (size_t p = 0; p < mask.data.size(); ++p) {
    if (!mask.data[p]) continue;
    const double dx = d_e.data[p] - mx;
    sxx += dx * dx;
    sxy += dx * (d_r.data[p] - my);
  }
  if (sxx / n <= 1e-12) throw Error(ErrorCode::RankDeficient, "estimated depth is constant");
  DepthFit fit;
  fit.sigma = sxy / sxx;
  fit.theta = my - fit.sigma * mx;
  if (fit.sigma == 0.0 || !std::isfinite(fit.sigma))
    throw Error(ErrorCode::RankDeficient, "degenerate depth scale");
  return fit;
}

std::vector<Gaussian3D> densify(const Frame& frame, const Pose& pose, const RenderOutput* render,
                                const Image& fitted_depth, const MapperConfig& cfg) {
  const Intrinsics& k = frame.intrinsics;
  if (fitted_depth.empty()) throw Error(ErrorCode::NoDepth, "densification needs a depth map");
  if (fitted_depth.width != k.width || fitted_depth.height != k.height || fitted_depth.channels != 1)
    throw Error(ErrorCode::ShapeMismatch, "fitted depth does not match intrinsics");
  const size_t pixels = fitted_depth.pixel_count();

  std::vector<uint8_t> candidate(pixels, 1);
  if (render) {
    for (size_t p = 0; p < pixels; ++p)
      candidate[p] = render->opacity.data[p] < cfg.opacity_threshold;
    std::vector<double> errors;
    for (size_t p = 0; p < pixels; ++p) {
      if (render->opacity.data[p] > cfg.opacity_threshold && fitted_depth.data[p] > 0.0 &&
          render->depth.data[p] > 0.0)
        errors.push_back(std::abs(render->depth.data[p] - fitted_depth.data[p]));
    }
    if (static_cast<int>(errors.size()) >= cfg.min_median_pixels) {
      auto mid = errors.begin() + errors.size() / 2;
      std::nth_element(errors.begin(), mid, errors.end());
      const double limit = cfg.depth_error_multiplier * *mid;
      for (size_t p = 0; p < pixels; ++p) {
        if (fitted_depth.data[p] > 0.0 && render->depth.data[p] > 0.0 &&
            std::abs(render->depth.data[p] - fitted_depth.data[p]) > limit)
          candidate[p] = 1;
      }
    }
  }

  const Mat3 r = pose.rotation_matrix();
  std::vector<Gaussian3D> batch;
  for (int y = 0; y < k.height; ++y)
    for (int x = 0; x < k.width; ++x) {
      const size_t p = static_cast<size_t>(y) * k.width + x;
      const double d = fitted_depth.data[p];
      if (!candidate[p] || !(d > 0.0) || !std::isfinite(d)) continue;
      const Vec3 world = r * backproject(x + 0.5, y + 0.5, d, k) + pose.translation;
      Vec3 color(frame.rgb.at(x, y, 0), frame.rgb.at(x, y, 1), frame.rgb.at(x, y, 2));
      color = color.cwiseMax(0.0).cwiseMin(1.0);
      batch.push_back(Gaussian3D::isotropic(world, d / k.fx, 0.5, color));
    }
  return batch;
}

double scene_extent(const GaussianMap& map) {
  if (map.empty()) return 0.0;
  Vec3 c = Vec3::Zero();
  for (const auto& g : map.gaussians()) c += g.mu;
  c /= static_cast<double>(map.size());
  double r = 0.0;
  for (const auto& g : map.gaussians()) r = std::max(r, (g.mu - c).norm());
  return r;
}

namespace {

/// Element-wise Adam over a flat parameter block.
struct Adam {
  std::vector<double> m, v;
  int t = 0;

  explicit Adam(size_t n) : m(n, 0.0), v(n, 0.0) {}

  double step(size_t i, double g, double lr, double c1, double c2) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-15;
    m[i] = b1 * m[i] + (1.0 - b1) * g;
    v[i] = b2 * v[i] + (1.0 - b2) * g * g;
    return -lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
  }
};

constexpr size_t kParams = 14;  // mu 3, rot 4, scale 3, opacity 1, color 3

}  // namespace

MapStats optimize_map(GaussianMap& map, const std::vector<MappingView>& views,
                      const MapperConfig& cfg, const LossWeights& weights) {
  cfg.validate();
  MapStats stats;
  if (cfg.iterations == 0 || map.empty() || views.empty()) return stats;
  const double lr_mu = cfg.lr_position * std::max(scene_extent(map), 1e-3);
  Adam adam(map.size() * kParams);

  for (int it = 0; it < cfg.iterations; ++it) {
    size_t vi = 0;
    if (views.size() > 1 && it % 2 == 1) vi = 1 + static_cast<size_t>(it / 2) % (views.size() - 1);
    const MappingView& view = views[vi];
    const Intrinsics& k = view.frame->intrinsics;
    const RenderOutput out = render(map, view.pose, k, cfg.render);
    const LossResult loss = mapping_loss(out, view.frame->rgb, view.depth, weights);
    if (it == 0) stats.first_loss = loss.total;
    stats.last_loss = loss.total;
    stats.iterations = it + 1;

    BackwardOptions opts;
    opts.pose = false;
    const RenderGradients g = render_backward(out.context, loss.upstream, map, view.pose, k,
                                              cfg.render, opts);
    ++adam.t;
    const double c1 = 1.0 - std::pow(0.9, adam.t), c2 = 1.0 - std::pow(0.999, adam.t);
    for (size_t i = 0; i < map.size(); ++i) {
      Gaussian3D& gs = map[i];
      const size_t base = i * kParams;
      for (int a = 0; a < 3; ++a) gs.mu[a] += adam.step(base + a, g.d_mu[i][a], lr_mu, c1, c2);
      if (cfg.isotropic) {
        const double shared = g.d_scale[i].sum();
        const double s = gs.log_scale.mean() + adam.step(base + 7, shared, cfg.lr_log_scale, c1, c2);
        gs.log_scale = Vec3::Constant(s);
      } else {
        Eigen::Vector4d q(gs.rot.w(), gs.rot.x(), gs.rot.y(), gs.rot.z());
        for (int a = 0; a < 4; ++a) q[a] += adam.step(base + 3 + a, g.d_rot[i][a], cfg.lr_rotation, c1, c2);
        gs.rot = Quat(q[0], q[1], q[2], q[3]).normalized();
        for (int a = 0; a < 3; ++a)
          gs.log_scale[a] += adam.step(base + 7 + a, g.d_scale[i][a], cfg.lr_log_scale, c1, c2);
      }
      gs.opacity_logit += adam.step(base + 10, g.d_opacity[i], cfg.lr_opacity, c1, c2);
      for (int a = 0; a < 3; ++a) {
        gs.color[a] += adam.step(base + 11 + a, g.d_color[i][a], cfg.lr_color, c1, c2);
        gs.color[a] = std::clamp(gs.color[a], 0.0, 1.0);
      }
    }
  }
  return stats;
}

}  // namespace mm3dgs
