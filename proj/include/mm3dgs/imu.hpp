// Copyright Contributors to the mm3dgs Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include "mm3dgs/geometry.hpp"

namespace mm3dgs {

/// Gravity-compensated specific force and angular rate, both in the body
/// frame.
struct ImuSample {
  double t = 0.0;
  Vec3 accel = Vec3::Zero();
  Vec3 gyro = Vec3::Zero();
};

/// Open-loop integration state. Velocity is expressed in the body frame at
/// `last_t`.
struct ImuState {
  Vec3 velocity = Vec3::Zero();
  double last_t = 0.0;
};

struct ImuStep {
  Vec3 delta_p = Vec3::Zero();
  Vec3 delta_theta = Vec3::Zero();
  ImuState state;
};

/// delta_p = v dt + a dt^2 / 2, delta_theta = w dt, v' = v + a dt (all in the
/// frame at the start of the step). Throws NonPositiveDt.
ImuStep integrate_step(const ImuState& state, const ImuSample& sample, double dt);

struct Preintegration {
  Pose relative;  // body pose at t_to expressed in the body frame at t_from
  ImuState state;
};

/// Integrates samples over [t_from, t_to] with zero-order hold (each sample
/// holds until the next one) and returns the relative transform. The output
/// velocity is re-expressed in the body frame at t_to. Throws
/// InsufficientSamples when coverage has a gap above twice the nominal period.
Preintegration preintegrate(std::span<const ImuSample> samples, const ImuState& state,
                            double t_from, double t_to);

/// extrinsic * t_imu.
Pose to_camera_frame(const Pose& t_imu, const Pose& extrinsic);

/// Ordered composition T0 * T1 * ... * Tn. Throws InvalidArgument when empty.
Pose chain(std::span<const Pose> transforms);

}  // namespace mm3dgs
