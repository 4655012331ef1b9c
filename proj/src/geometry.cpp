// Copyright Contributors to the mm3dgs Project
// SPDX-License-Identifier: Apache-2.0

#include "mm3dgs/geometry.hpp"

#include <cmath>

#include "mm3dgs/error.hpp"

namespace mm3dgs {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::Io: return "Io";
    case ErrorCode::Config: return "Config";
    case ErrorCode::NonPositiveDepth: return "NonPositiveDepth";
    case ErrorCode::DegenerateCovariance: return "DegenerateCovariance";
    case ErrorCode::InvalidGaussian: return "InvalidGaussian";
    case ErrorCode::ContextMismatch: return "ContextMismatch";
    case ErrorCode::EmptyMask: return "EmptyMask";
    case ErrorCode::ImageTooSmall: return "ImageTooSmall";
    case ErrorCode::DegenerateVariance: return "DegenerateVariance";
    case ErrorCode::NonPositiveDt: return "NonPositiveDt";
    case ErrorCode::InsufficientSamples: return "InsufficientSamples";
    case ErrorCode::MissingImu: return "MissingImu";
    case ErrorCode::TrackingLost: return "TrackingLost";
    case ErrorCode::NoQualifiedPatches: return "NoQualifiedPatches";
    case ErrorCode::CorpusTooSmall: return "CorpusTooSmall";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::NoDepth: return "NoDepth";
    case ErrorCode::MissingIndexFile: return "MissingIndexFile";
    case ErrorCode::UnparsableLine: return "UnparsableLine";
    case ErrorCode::NoAssociations: return "NoAssociations";
    case ErrorCode::NonMonotoneTimestamps: return "NonMonotoneTimestamps";
    case ErrorCode::NoSensorDepth: return "NoSensorDepth";
    case ErrorCode::DegenerateSpread: return "DegenerateSpread";
  }
  return "Unknown";
}

Pose::Pose(const Quat& q, const Vec3& t) : rotation(q), translation(t) { normalize(); }

Pose::Pose(const Mat3& r, const Vec3& t) : rotation(Quat(r)), translation(t) { normalize(); }

Mat4 Pose::matrix() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rotation_matrix();
  m.topRightCorner<3, 1>() = translation;
  return m;
}

void Pose::normalize() {
  rotation.normalize();
  // canonical hemisphere keeps serialized poses stable
  if (rotation.w() < 0.0) rotation.coeffs() *= -1.0;
}

bool Pose::is_valid(double tol) const {
  return std::abs(rotation.norm() - 1.0) <= tol && rotation.coeffs().allFinite() &&
         translation.allFinite();
}

Pose compose(const Pose& a, const Pose& b) {
  return Pose(a.rotation * b.rotation, a.rotation * b.translation + a.translation);
}

Pose inverse(const Pose& a) {
  const Quat qi = a.rotation.conjugate();
  return Pose(qi, -(qi * a.translation));
}

Pose from_matrix(const Mat4& m) {
  return Pose(Mat3(m.topLeftCorner<3, 3>()), Vec3(m.topRightCorner<3, 1>()));
}

double rotation_angle(const Quat& a, const Quat& b) {
  return a.angularDistance(b);
}

Mat3 skew(const Vec3& v) {
  Mat3 s;
  s << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return s;
}

Quat so3_exp(const Vec3& omega) {
  const double theta = omega.norm();
  if (theta < 1e-12) {
    Quat q(1.0, 0.5 * omega.x(), 0.5 * omega.y(), 0.5 * omega.z());
    return q.normalized();
  }
  const Vec3 axis = omega / theta;
  const double h = 0.5 * theta;
  const double s = std::sin(h);
  return Quat(std::cos(h), s * axis.x(), s * axis.y(), s * axis.z());
}

Vec3 so3_log(const Quat& q_in) {
  Quat q = q_in.normalized();
  if (q.w() < 0.0) q.coeffs() *= -1.0;
  const Vec3 v = q.vec();
  const double n = v.norm();
  if (n < 1e-12) return 2.0 * v;
  const double theta = 2.0 * std::atan2(n, q.w());
  return v * (theta / n);
}

Pose retract_left(const Pose& pose, const Vec6& delta) {
  const Quat dq = so3_exp(delta.head<3>());
  return Pose(dq * pose.rotation, pose.translation + delta.tail<3>());
}

bool Intrinsics::is_valid() const {
  return fx > 0.0 && fy > 0.0 && width > 0 && height > 0 && cx >= 0.0 && cx < width &&
         cy >= 0.0 && cy < height;
}

void Intrinsics::validate() const {
  if (!is_valid()) throw Error(ErrorCode::InvalidArgument, "intrinsics out of range");
}

Projection project(const Vec3& point, const Intrinsics& k) {
  if (point.z() <= kMinProjectDepth) {
    throw Error(ErrorCode::NonPositiveDepth, "point at z=" + std::to_string(point.z()));
  }
  const double inv_z = 1.0 / point.z();
  return {k.fx * point.x() * inv_z + k.cx, k.fy * point.y() * inv_z + k.cy, point.z()};
}

Vec3 backproject(double u, double v, double depth, const Intrinsics& k) {
  return {(u - k.cx) / k.fx * depth, (v - k.cy) / k.fy * depth, depth};
}

}  // namespace mm3dgs
