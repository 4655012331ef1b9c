// Copyright Contributors to the mm3dgs Project
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "mm3dgs/error.hpp"
#include "mm3dgs/geometry.hpp"
#include "test_util.hpp"

namespace mm3dgs {
namespace {

using test::random_pose;
using test::random_rotation;

Intrinsics test_intrinsics() {
  Intrinsics k;
  k.fx = 525.0;
  k.fy = 520.0;
  k.cx = 319.5;
  k.cy = 239.5;
  k.width = 640;
  k.height = 480;
  return k;
}

TEST(Geometry, RotationMatrixIsOrthonormal) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 1000; ++i) {
    const Mat3 r = random_rotation(rng).toRotationMatrix();
    EXPECT_LT((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR(r.determinant(), 1.0, 1e-12);
  }
}

TEST(Geometry, ComposeIsAssociative) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 500; ++i) {
    const Pose a = random_pose(rng, 5.0), b = random_pose(rng, 5.0), c = random_pose(rng, 5.0);
    const Pose l = compose(compose(a, b), c);
    const Pose r = compose(a, compose(b, c));
    EXPECT_LT((l.matrix() - r.matrix()).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Geometry, ComposeMatchesMatrixProduct) {
  std::mt19937_64 rng(3);
  const Pose a = random_pose(rng), b = random_pose(rng);
  EXPECT_LT((compose(a, b).matrix() - a.matrix() * b.matrix()).cwiseAbs().maxCoeff(), 1e-12);
  const Vec3 x(0.3, -1.2, 2.0);
  EXPECT_LT((compose(a, b).apply(x) - a.apply(b.apply(x))).norm(), 1e-12);
}

TEST(Geometry, InverseComposesToIdentity) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 100; ++i) {
    const Pose a = random_pose(rng, 3.0);
    EXPECT_LT((compose(a, inverse(a)).matrix() - Mat4::Identity()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((compose(inverse(a), a).matrix() - Mat4::Identity()).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Geometry, MatrixRoundTrip) {
  std::mt19937_64 rng(5);
  const Pose a = random_pose(rng, 2.0);
  const Pose b = from_matrix(a.matrix());
  EXPECT_LT(rotation_angle(a.rotation, b.rotation), 1e-12);
  EXPECT_LT((a.translation - b.translation).norm(), 1e-12);
}

TEST(Geometry, ConstructorNormalizesQuaternion) {
  const Pose p(Quat(2.0, 0.0, 0.0, 0.0), Vec3::Zero());
  EXPECT_NEAR(p.rotation.norm(), 1.0, 1e-15);
  EXPECT_TRUE(p.is_valid());
}

TEST(Geometry, ProjectBackprojectRoundTrip) {
  std::mt19937_64 rng(6);
  const Intrinsics k = test_intrinsics();
  std::uniform_real_distribution<double> u(0.0, 640.0), v(0.0, 480.0);
  std::uniform_real_distribution<double> log_depth(std::log(0.1), std::log(100.0));
  for (int i = 0; i < 1000; ++i) {
    const double pu = u(rng), pv = v(rng), d = std::exp(log_depth(rng));
    const Projection p = project(backproject(pu, pv, d, k), k);
    EXPECT_NEAR(p.u, pu, 1e-9);
    EXPECT_NEAR(p.v, pv, 1e-9);
    EXPECT_NEAR(p.depth, d, 1e-9);
  }
}

TEST(Geometry, ProjectFollowsAxisConvention) {
  const Intrinsics k = test_intrinsics();
  // +X right, +Y down, +Z forward
  const Projection right = project(Vec3(1.0, 0.0, 2.0), k);
  EXPECT_GT(right.u, k.cx);
  EXPECT_DOUBLE_EQ(right.v, k.cy);
  const Projection down = project(Vec3(0.0, 1.0, 2.0), k);
  EXPECT_GT(down.v, k.cy);
  EXPECT_DOUBLE_EQ(down.depth, 2.0);
}

TEST(Geometry, ProjectRejectsPointsBehindCamera) {
  const Intrinsics k = test_intrinsics();
  for (const double z : {0.0, -1.0}) {
    try {
      project(Vec3(0.1, 0.1, z), k);
      FAIL() << "expected NonPositiveDepth";
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::NonPositiveDepth);
    }
  }
}

TEST(Geometry, So3ExpLogRoundTrip) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 500; ++i) {
    const Vec3 w = test::random_vec(rng, -1.7, 1.7);
    if (w.norm() >= std::numbers::pi) continue;
    EXPECT_LT((so3_log(so3_exp(w)) - w).norm(), 1e-10);
  }
  EXPECT_LT(so3_log(so3_exp(Vec3(1e-12, -2e-12, 0.0))).norm(), 1e-11);
  EXPECT_NEAR(so3_exp(Vec3::Zero()).w(), 1.0, 0.0);
}

TEST(Geometry, So3ExpMatchesAngleAxis) {
  const Vec3 axis = Vec3(1.0, 2.0, -0.5).normalized();
  const double angle = 0.7;
  const Quat expected(Eigen::AngleAxisd(angle, axis));
  EXPECT_LT(rotation_angle(so3_exp(angle * axis), expected), 1e-12);
}

TEST(Geometry, SkewIsCrossProduct) {
  const Vec3 a(0.3, -1.0, 2.0), b(1.5, 0.2, -0.7);
  EXPECT_LT((skew(a) * b - a.cross(b)).norm(), 1e-15);
}

TEST(Geometry, RetractLeftSemantics) {
  std::mt19937_64 rng(8);
  const Pose p = random_pose(rng);
  Vec6 d;
  d << 0.01, -0.02, 0.03, 0.1, 0.2, -0.3;
  const Pose q = retract_left(p, d);
  const Quat expected = so3_exp(d.head<3>()) * p.rotation;
  EXPECT_LT(rotation_angle(q.rotation, expected), 1e-12);
  EXPECT_LT((q.translation - p.translation - d.tail<3>()).norm(), 1e-15);
  EXPECT_TRUE(q.is_valid());
  EXPECT_LT((retract_left(p, Vec6::Zero()).matrix() - p.matrix()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Geometry, RotationAngleOfKnownRotation) {
  const Quat a = Quat::Identity();
  const Quat b(Eigen::AngleAxisd(0.25, Vec3::UnitY()));
  EXPECT_NEAR(rotation_angle(a, b), 0.25, 1e-12);
  EXPECT_NEAR(rotation_angle(b, a), 0.25, 1e-12);
  // q and -q describe the same rotation
  EXPECT_NEAR(rotation_angle(b, Quat(-b.coeffs())), 0.0, 1e-7);
}

TEST(Geometry, IntrinsicsValidation) {
  Intrinsics k = test_intrinsics();
  EXPECT_TRUE(k.is_valid());
  k.fx = 0.0;
  EXPECT_FALSE(k.is_valid());
  EXPECT_THROW(k.validate(), Error);
  k = test_intrinsics();
  k.width = 0;
  EXPECT_FALSE(k.is_valid());
}

}  // namespace
}  // namespace mm3dgs
