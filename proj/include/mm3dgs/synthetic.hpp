// Copyright Contributors to the mm3dgs Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mm3dgs/dataset_io.hpp"
#include "mm3dgs/gaussian_map.hpp"

namespace mm3dgs {

enum class ScenePreset { RandomBox, PlanarGrid, TexturedRoom };
enum class TrajectoryKind { Circle, Straight, Square };

ScenePreset parse_scene_preset(const std::string& name);
TrajectoryKind parse_trajectory(const std::string& name);

/// Desk-scale scene and camera path. The camera looks down +Z; the square
/// and circle paths lie in the image plane (X right, Y down).
struct SyntheticSceneSpec {
  ScenePreset preset = ScenePreset::TexturedRoom;
  int gaussian_count = 2000;

  TrajectoryKind trajectory = TrajectoryKind::Square;
  int frames = 40;
  double fps = 10.0;
  /// Square side, circle radius or straight-line length, meters.
  double extent = 0.6;
  /// Peak yaw oscillation about the camera Y axis, radians.
  double yaw_amplitude = 0.03;

  int width = 160;
  int height = 120;
  double focal = 120.0;

  double pixel_noise = 0.0;
  double depth_noise = 0.0;
  double accel_noise = 0.0;
  double gyro_noise = 0.0;
  double imu_rate = 100.0;
  uint64_t seed = 0;

  double duration() const { return (frames - 1) / fps; }
  Intrinsics intrinsics() const;
  void validate() const;
};

/// Analytic camera state; velocity, acceleration and angular velocity are
/// world-frame derivatives.
struct TrajectoryState {
  Pose pose;
  Vec3 velocity = Vec3::Zero();
  Vec3 acceleration = Vec3::Zero();
  Vec3 angular_velocity = Vec3::Zero();
};

TrajectoryState sample_trajectory(const SyntheticSceneSpec& spec, double t);

/// Noise-free body-frame samples of the analytic path at `rate` Hz over the
/// whole duration (accelerometer gravity-compensated).
std::vector<ImuSample> analytic_imu(const SyntheticSceneSpec& spec, double rate);

GaussianMap build_scene(const SyntheticSceneSpec& spec);

struct SyntheticData {
  Sequence sequence;
  GaussianMap map;
};

/// Renders every trajectory pose of the ground-truth map and synthesizes the
/// IMU stream. Bit-deterministic for a given spec.
SyntheticData generate_synthetic(const SyntheticSceneSpec& spec);

/// Pristine renders of assorted synthetic scenes from random viewpoints.
std::vector<Image> synthetic_corpus(int count, uint64_t seed, int width = 160, int height = 120);

}  // namespace mm3dgs
