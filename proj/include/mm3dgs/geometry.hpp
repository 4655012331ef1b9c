// Copyright Contributors to the mm3dgs Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace mm3dgs {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Quat = Eigen::Quaterniond;

// Camera convention used throughout: +Z forward, +X right, +Y down.

/// Rigid transform x -> R x + t. Camera poses are camera-to-world.
struct Pose {
  Quat rotation = Quat::Identity();
  Vec3 translation = Vec3::Zero();

  Pose() = default;
  Pose(const Quat& q, const Vec3& t);
  Pose(const Mat3& r, const Vec3& t);

  static Pose identity() { return {}; }

  Mat3 rotation_matrix() const { return rotation.toRotationMatrix(); }
  Mat4 matrix() const;
  Vec3 apply(const Vec3& x) const { return rotation * x + translation; }

  void normalize();
  bool is_valid(double tol = 1e-9) const;
};

Pose compose(const Pose& a, const Pose& b);
Pose inverse(const Pose& a);
Pose from_matrix(const Mat4& m);

/// Geodesic angle of the relative rotation (radians).
double rotation_angle(const Quat& a, const Quat& b);

Mat3 skew(const Vec3& v);

/// Exponential map of a scaled rotation axis.
Quat so3_exp(const Vec3& omega);
Vec3 so3_log(const Quat& q);

/// Left update of a camera pose: rotation about the camera center in world
/// axes, translation added in world coordinates. The tangent is ordered
/// (rotation xyz, translation xyz).
Pose retract_left(const Pose& pose, const Vec6& delta);

struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  bool is_valid() const;
  void validate() const;
};

struct Projection {
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;
};

inline constexpr double kMinProjectDepth = 1e-8;

/// Pinhole projection of a camera-frame point. Throws NonPositiveDepth.
Projection project(const Vec3& point, const Intrinsics& k);

/// Inverse of project for continuous pixel coordinates.
Vec3 backproject(double u, double v, double depth, const Intrinsics& k);

}  // namespace mm3dgs
