// Copyright Contributors to the mm3dgs Project
// SPDX-License-Identifier: Apache-2.0

#include "mm3dgs/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "mm3dgs/error.hpp"
#include "mm3dgs/rasterizer.hpp"

namespace mm3dgs {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kWallDepth = 2.2;

struct Bounds {
  double x0, x1, y0, y1;
};

/// Region of the plane z = depth seen from anywhere along the path.
Bounds visible_region(const SyntheticSceneSpec& spec, double depth) {
  double xmin = 1e9, xmax = -1e9, ymin = 1e9, ymax = -1e9;
  const double duration = std::max(spec.duration(), 1e-9);
  for (int i = 0; i <= 200; ++i) {
    const Vec3 c = sample_trajectory(spec, duration * i / 200.0).pose.translation;
    xmin = std::min(xmin, c.x());
    xmax = std::max(xmax, c.x());
    ymin = std::min(ymin, c.y());
    ymax = std::max(ymax, c.y());
  }
  const double hx = depth * (spec.width / 2.0) / spec.focal + depth * std::tan(spec.yaw_amplitude);
  const double hy = depth * (spec.height / 2.0) / spec.focal;
  const double mx = 0.15 * hx, my = 0.15 * hy;
  return {xmin - hx - mx, xmax + hx + mx, ymin - hy - my, ymax + hy + my};
}

Vec3 texture(double x, double y, const Vec3& phase, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> jitter(-0.15, 0.15);
  Vec3 c;
  for (int ch = 0; ch < 3; ++ch) {
    const double f = 2.0 + ch;
    c[ch] = 0.5 + 0.22 * std::sin(f * x + phase[ch]) * std::cos((5.0 - ch) * y - phase[ch]) +
            0.12 * std::sin(7.0 * (x + y) + 2.0 * phase[ch]) + jitter(rng);
  }
  return c.cwiseMax(0.02).cwiseMin(0.98);
}

/// Fills a rectangle of the plane z = depth with about n Gaussians on a
/// jittered grid.
void fill_plane(std::vector<Gaussian3D>& out, const Bounds& b, double depth, int n, double opacity,
                const Vec3& tint, const Vec3& phase, std::mt19937_64& rng) {
  const double w = b.x1 - b.x0, h = b.y1 - b.y0;
  const int nx = std::max(1, static_cast<int>(std::lround(std::sqrt(n * w / h))));
  const int ny = std::max(1, static_cast<int>(std::lround(static_cast<double>(n) / nx)));
  const double sx = w / nx, sy = h / ny;
  const double sigma = 0.6 * std::max(sx, sy);
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      const double x = b.x0 + (i + 0.5 + u(rng)) * sx;
      const double y = b.y0 + (j + 0.5 + u(rng)) * sy;
      const double z = depth + 0.05 * u(rng);
      const Vec3 c = (texture(x, y, phase, rng).array() * tint.array()).matrix().cwiseMin(1.0);
      out.push_back(Gaussian3D::isotropic(Vec3(x, y, z), sigma, opacity, c));
    }
}

}  // namespace

ScenePreset parse_scene_preset(const std::string& name) {
  if (name == "random-box") return ScenePreset::RandomBox;
  if (name == "planar-grid") return ScenePreset::PlanarGrid;
  if (name == "textured-room") return ScenePreset::TexturedRoom;
  throw Error(ErrorCode::Config, "unknown scene preset '" + name + "'");
}

TrajectoryKind parse_trajectory(const std::string& name) {
  if (name == "circle") return TrajectoryKind::Circle;
  if (name == "straight") return TrajectoryKind::Straight;
  if (name == "square") return TrajectoryKind::Square;
  throw Error(ErrorCode::Config, "unknown trajectory '" + name + "'");
}

Intrinsics SyntheticSceneSpec::intrinsics() const {
  return {focal, focal, width / 2.0, height / 2.0, width, height};
}

void SyntheticSceneSpec::validate() const {
  if (gaussian_count <= 0 || frames <= 1 || width <= 0 || height <= 0)
    throw Error(ErrorCode::Config, "synthetic counts must be positive (frames >= 2)");
  if (!(fps > 0.0) || !(imu_rate > 0.0) || !(focal > 0.0) || !(extent > 0.0))
    throw Error(ErrorCode::Config, "synthetic rates, focal length and extent must be positive");
  if (pixel_noise < 0.0 || depth_noise < 0.0 || accel_noise < 0.0 || gyro_noise < 0.0)
    throw Error(ErrorCode::Config, "noise levels must be non-negative");
}

TrajectoryState sample_trajectory(const SyntheticSceneSpec& spec, double t) {
  const double duration = spec.duration();
  TrajectoryState s;
  const double L = spec.extent;
  switch (spec.trajectory) {
    case TrajectoryKind::Straight: {
      const double v = L / duration;
      s.pose.translation = Vec3(v * t, 0.0, 0.0);
      s.velocity = Vec3(v, 0.0, 0.0);
      break;
    }
    case TrajectoryKind::Circle: {
      const double w = 2.0 * kPi / duration, th = w * t;
      s.pose.translation = Vec3(L * std::cos(th) - L, L * std::sin(th), 0.0);
      s.velocity = L * w * Vec3(-std::sin(th), std::cos(th), 0.0);
      s.acceleration = -L * w * w * Vec3(std::cos(th), std::sin(th), 0.0);
      break;
    }
    case TrajectoryKind::Square: {
      static const Vec3 corners[5] = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(1, -1, 0), Vec3(0, -1, 0),
                                      Vec3(0, 0, 0)};
      const double edge = duration / 4.0;
      const int e = std::clamp(static_cast<int>(std::floor(t / edge)), 0, 3);
      const double tau = std::clamp((t - e * edge) / edge, 0.0, 1.0);
      // Minimum-jerk profile: at rest on every corner.
      const double p = tau * tau * tau * (10.0 - 15.0 * tau + 6.0 * tau * tau);
      const double dp = 30.0 * tau * tau * (1.0 - tau) * (1.0 - tau) / edge;
      const double ddp = 60.0 * tau * (1.0 - 3.0 * tau + 2.0 * tau * tau) / (edge * edge);
      const Vec3 d = L * (corners[e + 1] - corners[e]);
      s.pose.translation = L * corners[e] + p * d;
      s.velocity = dp * d;
      s.acceleration = ddp * d;
      break;
    }
  }
  if (spec.trajectory != TrajectoryKind::Straight && spec.yaw_amplitude != 0.0) {
    const double w = 2.0 * kPi / duration;
    const double yaw = spec.yaw_amplitude * std::sin(w * t);
    s.pose.rotation = Quat(Eigen::AngleAxisd(yaw, Vec3::UnitY()));
    s.angular_velocity = Vec3(0.0, spec.yaw_amplitude * w * std::cos(w * t), 0.0);
  }
  return s;
}

std::vector<ImuSample> analytic_imu(const SyntheticSceneSpec& spec, double rate) {
  const int n = static_cast<int>(std::floor(spec.duration() * rate + 1e-9)) + 1;
  std::vector<ImuSample> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    const double t = i / rate;
    const TrajectoryState s = sample_trajectory(spec, t);
    const Mat3 rt = s.pose.rotation_matrix().transpose();
    out.push_back({t, rt * s.acceleration, rt * s.angular_velocity});
  }
  return out;
}

GaussianMap build_scene(const SyntheticSceneSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed * 0xD1B54A32D192ED03ull + 17);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Vec3 phase(2 * kPi * unit(rng), 2 * kPi * unit(rng), 2 * kPi * unit(rng));
  std::vector<Gaussian3D> gs;

  switch (spec.preset) {
    case ScenePreset::PlanarGrid:
      fill_plane(gs, visible_region(spec, 2.0), 2.0, spec.gaussian_count, 0.95, Vec3::Ones(), phase, rng);
      break;
    case ScenePreset::TexturedRoom: {
      const int boxes = 3;
      const int per_box = spec.gaussian_count / 10;
      const int wall = spec.gaussian_count - boxes * per_box;
      const Bounds room = visible_region(spec, kWallDepth);
      fill_plane(gs, room, kWallDepth, wall, 0.95, Vec3::Ones(), phase, rng);
      const Bounds inner = visible_region(spec, 1.2);
      for (int b = 0; b < boxes; ++b) {
        const double cx = inner.x0 + (b + 0.5) / boxes * (inner.x1 - inner.x0);
        const double cy = inner.y0 + (0.3 + 0.4 * unit(rng)) * (inner.y1 - inner.y0);
        const double half = 0.2 + 0.1 * unit(rng);
        const double depth = 1.4 + 0.2 * b;
        const Vec3 tint(0.6 + 0.4 * unit(rng), 0.6 + 0.4 * unit(rng), 0.6 + 0.4 * unit(rng));
        fill_plane(gs, {cx - half, cx + half, cy - half, cy + half}, depth, per_box, 0.95, tint, phase, rng);
      }
      break;
    }
    case ScenePreset::RandomBox: {
      const Bounds b = visible_region(spec, 3.0);
      for (int i = 0; i < spec.gaussian_count; ++i) {
        const Vec3 mu(b.x0 + unit(rng) * (b.x1 - b.x0), b.y0 + unit(rng) * (b.y1 - b.y0), 1.5 + 1.5 * unit(rng));
        const Vec3 c(unit(rng), unit(rng), unit(rng));
        gs.push_back(Gaussian3D::isotropic(mu, 0.03 + 0.05 * unit(rng), 0.5 + 0.45 * unit(rng), c));
      }
      break;
    }
  }
  GaussianMap map;
  map.insert(gs, -1);
  return map;
}

SyntheticData generate_synthetic(const SyntheticSceneSpec& spec) {
  spec.validate();
  SyntheticData data;
  data.map = build_scene(spec);
  Sequence& seq = data.sequence;
  seq.intrinsics = spec.intrinsics();
  std::mt19937_64 rng(spec.seed * 0x94D049BB133111EBull + 29);
  std::normal_distribution<double> normal(0.0, 1.0);

  for (int i = 0; i < spec.frames; ++i) {
    const double t = i / spec.fps;
    const Pose pose = sample_trajectory(spec, t).pose;
    const RenderOutput out = render(data.map, pose, seq.intrinsics);
    auto frame = std::make_shared<Frame>();
    frame->id = i;
    frame->t = t;
    frame->intrinsics = seq.intrinsics;
    frame->rgb = out.color;
    frame->depth = out.depth;
    if (spec.pixel_noise > 0.0)
      for (double& v : frame->rgb.data) v = std::clamp(v + spec.pixel_noise * normal(rng), 0.0, 1.0);
    if (spec.depth_noise > 0.0)
      for (double& v : frame->depth.data)
        if (v > 0.0) v = std::max(v + spec.depth_noise * normal(rng), 1e-3);
    FrameEntry entry;
    entry.id = i;
    entry.t = t;
    entry.cached = std::move(frame);
    seq.frames.push_back(std::move(entry));
    seq.ground_truth.push_back({t, pose});
  }

  seq.imu = analytic_imu(spec, spec.imu_rate);
  for (auto& s : seq.imu) {
    for (int a = 0; a < 3; ++a) {
      s.accel[a] += spec.accel_noise * normal(rng);
      s.gyro[a] += spec.gyro_noise * normal(rng);
    }
  }
  return data;
}

std::vector<Image> synthetic_corpus(int count, uint64_t seed, int width, int height) {
  std::vector<Image> out;
  std::mt19937_64 rng(seed * 0xBF58476D1CE4E5B9ull + 5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < count; ++i) {
    SyntheticSceneSpec spec;
    spec.preset = i % 3 == 2 ? ScenePreset::RandomBox : ScenePreset::TexturedRoom;
    spec.gaussian_count = 6000;
    spec.width = width;
    spec.height = height;
    spec.focal = 0.75 * width;
    spec.seed = seed * 1000 + static_cast<uint64_t>(i);
    const GaussianMap map = build_scene(spec);
    const Pose pose(Quat(Eigen::AngleAxisd(0.02 * u(rng), Vec3::UnitY())),
                    Vec3(0.3 + 0.25 * u(rng), -0.3 + 0.25 * u(rng), 0.0));
    out.push_back(render(map, pose, spec.intrinsics()).color);
  }
  return out;
}

}  // namespace mm3dgs
