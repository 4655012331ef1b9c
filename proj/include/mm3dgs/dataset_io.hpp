// Copyright Contributors to the mm3dgs Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mm3dgs/frame.hpp"
#include "mm3dgs/imu.hpp"

namespace mm3dgs {

/// Camera-to-world pose at a timestamp.
struct StampedPose {
  double t = 0.0;
  Pose pose;
};

/// A frame either held in memory or decoded on demand from its image files.
struct FrameEntry {
  int id = 0;
  double t = 0.0;
  std::string rgb_path;
  std::string depth_path;  // empty when the frame has no depth
  std::shared_ptr<const Frame> cached;
};

struct Sequence {
  Intrinsics intrinsics;
  std::vector<FrameEntry> frames;
  std::vector<ImuSample> imu;
  /// Ground truth at frame timestamps (frames outside its span are absent).
  std::vector<StampedPose> ground_truth;
  /// Maps IMU-frame quantities into the camera frame.
  Pose imu_to_camera;
  double depth_scale = 5000.0;

  size_t size() const { return frames.size(); }
  bool has_depth() const;
  Frame load_frame(size_t i) const;
};

struct TumOptions {
  double max_association_dt = 0.02;
  double depth_scale = 5000.0;
  /// Adds `gravity` to every accelerometer sample when set.
  bool compensate_gravity = false;
  Vec3 gravity = Vec3(0.0, 0.0, -9.81);
};

/// Reads rgb.txt plus the optional depth.txt, groundtruth.txt, imu.txt and
/// calib.txt ("fx fy cx cy width height", optional second line with the
/// IMU-to-camera extrinsic "tx ty tz qx qy qz qw").
Sequence load_tum_sequence(const std::string& directory, const TumOptions& options = {});

/// CSV with header "t,ax,ay,az,gx,gy,gz". Throws NonMonotoneTimestamps.
std::vector<ImuSample> load_imu(const std::string& path);
void write_imu(const std::string& path, const std::vector<ImuSample>& samples);

/// TUM trajectory "t tx ty tz qx qy qz qw" with 9 decimals.
void write_trajectory(const std::string& path, const std::vector<StampedPose>& trajectory);
std::vector<StampedPose> load_trajectory(const std::string& path);

/// Linear translation and slerp between the bracketing entries; nullopt
/// outside the trajectory span.
std::optional<Pose> interpolate_pose(const std::vector<StampedPose>& trajectory, double t);

/// Writes a sequence as a TUM-style directory readable by load_tum_sequence.
void write_tum_sequence(const std::string& directory, const Sequence& sequence);

enum class DepthSource { Sensor, EmulatedRelative };

struct DepthEmulation {
  /// Relative amplitude of the smooth multiplicative warp.
  double warp_amplitude = 0.05;
  uint64_t seed = 0;
};

struct DepthEstimate {
  Image values;
  bool metric = true;  // false: values are relative inverse depth
};

/// Sensor depth as-is, or an emulated relative estimate
/// a / depth * (1 + warp) + b with per-frame random a > 0 and small b.
/// Throws NoSensorDepth when the frame carries no depth.
DepthEstimate depth_provider(const Frame& frame, DepthSource source,
                             const DepthEmulation& emulation = {});

}  // namespace mm3dgs
