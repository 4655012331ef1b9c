// Copyright Contributors to the mm3dgs Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "mm3dgs/frame.hpp"
#include "mm3dgs/gaussian_map.hpp"
#include "mm3dgs/losses.hpp"
#include "mm3dgs/rasterizer.hpp"

namespace mm3dgs {

struct MapperConfig {
  int iterations = 150;
  double opacity_threshold = 0.5;
  double depth_error_multiplier = 50.0;
  /// Keyframes with covisibility at or above this join the mapping set.
  double covisible_min = 0.05;
  /// Below this many supported pixels the depth-error rule is skipped.
  int min_median_pixels = 100;
  bool isotropic = true;

  double lr_position = 1e-4;  // multiplied by the scene extent
  double lr_log_scale = 5e-3;
  double lr_opacity = 5e-2;
  double lr_color = 2.5e-3;
  double lr_rotation = 1e-3;
  RenderSettings render;

  void validate() const;
};

struct DepthFit {
  double sigma = 1.0;
  double theta = 0.0;
};

/// Least-squares sigma, theta minimizing |sigma d_e + theta - d_r|^2 over the
/// mask. Throws RankDeficient when d_e is constant on the mask.
DepthFit fit_depth_scale(const Image& d_e, const Image& d_r, const PixelMask& mask);

/// New Gaussians for pixels the map does not explain: rendered opacity below
/// the threshold, or depth error above `multiplier` times the median error.
/// `render` may be null for an empty map. Throws NoDepth without a fitted
/// depth.
std::vector<Gaussian3D> densify(const Frame& frame, const Pose& pose, const RenderOutput* render,
                                const Image& fitted_depth, const MapperConfig& cfg);

struct MappingView {
  Pose pose;
  const Frame* frame = nullptr;
  const DepthTarget* depth = nullptr;
};

struct MapStats {
  int iterations = 0;
  double first_loss = 0.0;
  double last_loss = 0.0;
};

/// Optimizes all Gaussian parameters with poses frozen. views[0] is the
/// current frame and is rendered every other round; the remaining views are
/// visited round-robin in between.
MapStats optimize_map(GaussianMap& map, const std::vector<MappingView>& views,
                      const MapperConfig& cfg, const LossWeights& weights);

/// Largest distance of a Gaussian mean from the centroid of all means.
double scene_extent(const GaussianMap& map);

}  // namespace mm3dgs
