// Copyright Contributors to the mm3dgs Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <vector>

#include "mm3dgs/frame.hpp"
#include "mm3dgs/gaussian_map.hpp"
#include "mm3dgs/imu.hpp"
#include "mm3dgs/losses.hpp"
#include "mm3dgs/rasterizer.hpp"

namespace mm3dgs {

enum class GuessMode { ConstantVelocity, Imu, Identity };

struct TrackerConfig {
  int iterations = 100;
  double lr_rotation = 2e-3;
  double lr_translation = 1e-2;
  GuessMode guess_mode = GuessMode::ConstantVelocity;
  double convergence_tol = 1e-6;
  int patience = 10;
  /// Minimum fraction of pixels passing the opacity mask at the guess.
  double min_mask_fraction = 0.01;
  RenderSettings render;

  void validate() const;
};

struct TrackState {
  std::vector<Pose> history;  // most recent last; at most two kept
  ImuState imu;
  std::vector<double> loss_trace;

  void push(const Pose& pose);
};

/// Throws MissingImu when mode is Imu and no relative transform is given.
Pose initial_guess(const TrackState& state, GuessMode mode, const std::optional<Pose>& imu_rel);

struct TrackStats {
  double initial_loss = 0.0;
  double final_loss = 0.0;
  int iterations = 0;
  double mask_fraction = 0.0;
};

struct TrackResult {
  Pose pose;
  TrackStats stats;
};

/// Optimizes the camera pose against a frozen map. Returns the lowest-loss
/// pose visited. Throws TrackingLost when the mask at the guess covers less
/// than cfg.min_mask_fraction of the image.
TrackResult optimize_pose(const GaussianMap& map, const Frame& frame, const DepthTarget* depth,
                          const Pose& guess, const TrackerConfig& cfg, const LossWeights& weights);

}  // namespace mm3dgs
