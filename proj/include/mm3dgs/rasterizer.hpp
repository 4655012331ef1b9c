// Copyright Contributors to the mm3dgs Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mm3dgs/gaussian_map.hpp"
#include "mm3dgs/geometry.hpp"
#include "mm3dgs/image.hpp"

namespace mm3dgs {

inline constexpr double kNearPlane = 0.01;
inline constexpr double kCov2dRegularizer = 0.3;
inline constexpr double kMaxAlpha = 0.999;
inline constexpr double kMinTransmittance = 1e-4;
/// Falloff o * G below which a splat does not contribute. The ellipse where
/// o * G = kMinAlpha is also the tile bound, so output does not depend on the
/// tiling.
inline constexpr double kMinAlpha = 1.0 / 255.0;

/// Alpha of a splat with falloff f = o * G: zero below kMinAlpha, f from
/// 2 kMinAlpha up, and a C1 smoothstep blend in between so the image stays
/// differentiable at the cutoff. Clamped to kMaxAlpha.
inline double splat_alpha(double f) {
  if (f <= kMinAlpha) return 0.0;
  if (f >= 2.0 * kMinAlpha) return f < kMaxAlpha ? f : kMaxAlpha;
  const double t = (f - kMinAlpha) / kMinAlpha;
  return f * t * t * (3.0 - 2.0 * t);
}

/// d splat_alpha / d f; zero where alpha is clamped.
inline double splat_alpha_slope(double f) {
  if (f <= kMinAlpha) return 0.0;
  if (f >= 2.0 * kMinAlpha) return f < kMaxAlpha ? 1.0 : 0.0;
  const double t = (f - kMinAlpha) / kMinAlpha;
  return t * t * (3.0 - 2.0 * t) + f * 6.0 * t * (1.0 - t) / kMinAlpha;
}

inline constexpr double kMinDepthOpacity = 1e-6;
inline constexpr int kTileSize = 16;

struct ProjectedGaussian {
  Vec2 mean2d = Vec2::Zero();
  Mat2 cov2d = Mat2::Identity();
  double depth = 0.0;
  double alpha_peak = 0.0;
  Vec3 color = Vec3::Zero();
  uint32_t source_index = 0;
};

struct RenderSettings {
  int workers = 1;
};

/// Projects every Gaussian in front of the near plane. cov2d = J W Sigma
/// (J W)^T + 0.3 I with J the pinhole Jacobian at the view-space mean.
std::vector<ProjectedGaussian> project_all(const GaussianMap& map, const Pose& cam,
                                           const Intrinsics& k);

namespace detail {

/// Screen-space record of one visible Gaussian.
struct Splat {
  double u, v;        // mean2d
  double ca, cb, cc;  // conic (inverse cov2d): [[ca, cb], [cb, cc]]
  double opacity;
  double depth;
  double r, g, b;
  double q_max;  // quadratic-form bound where opacity * exp(-q/2) = kMinAlpha
  uint32_t source;
  int x0, y0, x1, y1;  // inclusive pixel bbox
};

struct Contribution {
  uint32_t list_pos;  // position in the tile's depth-sorted list
  double falloff;     // o * G at the pixel center
};

struct TileRecord {
  std::vector<uint32_t> list;  // splat indices, nearest first
  std::vector<Contribution> entries;
  std::vector<uint32_t> pixel_offsets;  // tile pixels in row-major order, +1
};

}  // namespace detail

/// Data retained from the forward pass for render_backward.
struct RenderContext {
  int width = 0;
  int height = 0;
  size_t map_size = 0;
  int tiles_x = 0;
  int tiles_y = 0;
  std::vector<detail::Splat> splats;
  std::vector<detail::TileRecord> tiles;
  std::vector<double> final_transmittance;  // per pixel

  /// (source index, alpha) in compositing order for one pixel.
  std::vector<std::pair<uint32_t, double>> contributors(int x, int y) const;
};

struct RenderStats {
  size_t visible = 0;
  size_t culled = 0;
  size_t contributions = 0;
};

struct RenderOutput {
  Image color;    // H x W x 3
  Image opacity;  // H x W x 1
  Image depth;    // H x W x 1, opacity-normalized, 0 where opacity < 1e-6
  RenderContext context;
  RenderStats stats;
};

/// Front-to-back alpha compositing of the depth-sorted splats at every pixel
/// center on a black background.
RenderOutput render(const GaussianMap& map, const Pose& cam, const Intrinsics& k,
                    const RenderSettings& settings = {});

/// Upstream dL/d(buffer). Empty images are treated as zero.
struct RenderUpstream {
  Image color;
  Image opacity;
  Image depth;
};

/// Gradients with respect to the stored parameters: position, raw quaternion
/// (w, x, y, z), log-scale, opacity logit, color; and the camera pose tangent
/// (rotation, translation) of retract_left.
struct RenderGradients {
  std::vector<Vec3> d_mu;
  std::vector<Eigen::Vector4d> d_rot;
  std::vector<Vec3> d_scale;
  std::vector<double> d_opacity;
  std::vector<Vec3> d_color;
  Vec6 d_pose = Vec6::Zero();

  void resize(size_t n);
  bool all_finite() const;
};

struct BackwardOptions {
  bool gaussians = true;  // per-Gaussian parameter gradients
  bool pose = true;
};

RenderGradients render_backward(const RenderContext& ctx, const RenderUpstream& upstream,
                                const GaussianMap& map, const Pose& cam, const Intrinsics& k,
                                const RenderSettings& settings = {},
                                const BackwardOptions& options = {});

/// Debug dump: <prefix>_color.png, <prefix>_depth.png (16-bit, x5000),
/// <prefix>_opacity.png (8-bit).
void dump_render_png(const RenderOutput& out, const std::string& prefix);

}  // namespace mm3dgs
