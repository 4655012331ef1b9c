// Copyright Contributors to the mm3dgs Project
// SPDX-License-Identifier: Apache-2.0

#include "mm3dgs/tracker.hpp"

#include <cmath>
#include <limits>

#include "mm3dgs/error.hpp"

namespace mm3dgs {

void TrackerConfig::validate() const {
  if (iterations < 1) throw Error(ErrorCode::Config, "tracker iterations must be >= 1");
  if (!(lr_rotation > 0.0) || !(lr_translation > 0.0))
    throw Error(ErrorCode::Config, "tracker step sizes must be positive");
}

void TrackState::push(const Pose& pose) {
  history.push_back(pose);
  if (history.size() > 2) history.erase(history.begin());
}

Pose initial_guess(const TrackState& state, GuessMode mode, const std::optional<Pose>& imu_rel) {
  if (state.history.empty()) return Pose::identity();
  const Pose& last = state.history.back();
  switch (mode) {
    case GuessMode::Identity:
      return last;
    case GuessMode::Imu:
      if (!imu_rel) throw Error(ErrorCode::MissingImu, "IMU guess requested without IMU data");
      return compose(last, *imu_rel);
    case GuessMode::ConstantVelocity:
      if (state.history.size() < 2) return last;
      return compose(last, compose(inverse(state.history[state.history.size() - 2]), last));
  }
  return last;
}

namespace {

/// Adam moments for the 6-dof pose tangent.
struct PoseAdam {
  Vec6 m = Vec6::Zero();
  Vec6 v = Vec6::Zero();
  int t = 0;

  Vec6 step(const Vec6& g, const Vec6& lr) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    ++t;
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    const double c1 = 1.0 - std::pow(b1, t), c2 = 1.0 - std::pow(b2, t);
    Vec6 out;
    for (int i = 0; i < 6; ++i) out[i] = -lr[i] * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    return out;
  }
};

}  // namespace

TrackResult optimize_pose(const GaussianMap& map, const Frame& frame, const DepthTarget* depth,
                          const Pose& guess, const TrackerConfig& cfg, const LossWeights& weights) {
  cfg.validate();
  if (map.empty()) throw Error(ErrorCode::InvalidArgument, "tracking against an empty map");
  const Intrinsics& k = frame.intrinsics;

  TrackResult result;
  Pose pose = guess;
  RenderOutput out = render(map, pose, k, cfg.render);
  LossResult loss;
  try {
    loss = tracking_loss(out, frame.rgb, depth, weights);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::EmptyMask) throw;
    throw Error(ErrorCode::TrackingLost, "no map coverage at the initial guess");
  }
  if (loss.mask_fraction < cfg.min_mask_fraction)
    throw Error(ErrorCode::TrackingLost,
                "mask covers " + std::to_string(100.0 * loss.mask_fraction) + "% at the guess");

  result.pose = pose;
  result.stats.initial_loss = loss.total;
  result.stats.final_loss = loss.total;
  result.stats.mask_fraction = loss.mask_fraction;

  Vec6 lr;
  lr << Vec3::Constant(cfg.lr_rotation), Vec3::Constant(cfg.lr_translation);
  PoseAdam adam;
  BackwardOptions pose_only;
  pose_only.gaussians = false;
  double previous = loss.total;
  int stalled = 0;
  for (int it = 0; it < cfg.iterations; ++it) {
    const RenderGradients g =
        render_backward(out.context, loss.upstream, map, pose, k, cfg.render, pose_only);
    pose = retract_left(pose, adam.step(g.d_pose, lr));
    result.stats.iterations = it + 1;
    out = render(map, pose, k, cfg.render);
    try {
      loss = tracking_loss(out, frame.rgb, depth, weights);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::EmptyMask) throw;
      break;
    }
    if (loss.total < result.stats.final_loss) {
      result.stats.final_loss = loss.total;
      result.stats.mask_fraction = loss.mask_fraction;
      result.pose = pose;
    }
    stalled = (previous - loss.total < cfg.convergence_tol) ? stalled + 1 : 0;
    previous = loss.total;
    if (stalled >= cfg.patience) break;
  }
  return result;
}

}  // namespace mm3dgs
