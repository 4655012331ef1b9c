// Copyright Contributors to the mm3dgs Project
// SPDX-License-Identifier: Apache-2.0

#include "mm3dgs/imu.hpp"

#include <algorithm>
#include <cmath>

#include "mm3dgs/error.hpp"

namespace mm3dgs {

ImuStep integrate_step(const ImuState& state, const ImuSample& sample, double dt) {
  if (!(dt > 0.0)) throw Error(ErrorCode::NonPositiveDt, "dt=" + std::to_string(dt));
  ImuStep step;
  step.delta_p = state.velocity * dt + 0.5 * sample.accel * dt * dt;
  step.delta_theta = sample.gyro * dt;
  step.state.velocity = state.velocity + sample.accel * dt;
  step.state.last_t = state.last_t + dt;
  return step;
}

Preintegration preintegrate(std::span<const ImuSample> samples, const ImuState& state,
                            double t_from, double t_to) {
  if (!(t_to > t_from)) throw Error(ErrorCode::NonPositiveDt, "empty integration interval");
  if (samples.empty()) throw Error(ErrorCode::InsufficientSamples, "no IMU samples");

  double period = 0.0;
  if (samples.size() >= 2) {
    std::vector<double> gaps;
    gaps.reserve(samples.size() - 1);
    for (size_t i = 1; i < samples.size(); ++i) gaps.push_back(samples[i].t - samples[i - 1].t);
    std::nth_element(gaps.begin(), gaps.begin() + gaps.size() / 2, gaps.end());
    period = gaps[gaps.size() / 2];
  }

  // the sample in effect at t_from is the last one at or before it
  auto first = std::upper_bound(samples.begin(), samples.end(), t_from,
                                [](double t, const ImuSample& s) { return t < s.t; });
  if (first == samples.begin()) {
    if (period <= 0.0 || samples.front().t - t_from > 2.0 * period)
      throw Error(ErrorCode::InsufficientSamples, "IMU stream starts after the interval");
  } else {
    --first;
  }
  if (period > 0.0 && t_to - samples.back().t > 2.0 * period)
    throw Error(ErrorCode::InsufficientSamples, "IMU stream ends before the interval");

  Preintegration out;
  ImuState current{state.velocity, t_from};
  Quat orientation = Quat::Identity();
  Vec3 position = Vec3::Zero();
  double t = t_from;
  for (auto it = first; it != samples.end() && t < t_to; ++it) {
    const double next_t = (it + 1 == samples.end()) ? t_to : std::min((it + 1)->t, t_to);
    if (period > 0.0 && next_t - std::max(it->t, t) > 2.0 * period && it + 1 != samples.end())
      throw Error(ErrorCode::InsufficientSamples,
                  "gap of " + std::to_string(next_t - it->t) + " s inside the interval");
    const double dt = next_t - t;
    if (dt <= 0.0) continue;
    const ImuStep step = integrate_step(current, *it, dt);
    position += orientation * step.delta_p;
    const Quat dq = so3_exp(step.delta_theta);
    orientation = (orientation * dq).normalized();
    // carry the velocity into the new body frame
    current.velocity = dq.conjugate() * step.state.velocity;
    current.last_t = next_t;
    t = next_t;
  }
  out.relative = Pose(orientation, position);
  out.state = current;
  return out;
}

Pose to_camera_frame(const Pose& t_imu, const Pose& extrinsic) { return compose(extrinsic, t_imu); }

Pose chain(std::span<const Pose> transforms) {
  if (transforms.empty()) throw Error(ErrorCode::InvalidArgument, "chain of zero transforms");
  Pose out = transforms.front();
  for (size_t i = 1; i < transforms.size(); ++i) out = compose(out, transforms[i]);
  return out;
}

}  // namespace mm3dgs
