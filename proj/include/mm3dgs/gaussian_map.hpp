// Copyright Contributors to the mm3dgs Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mm3dgs/geometry.hpp"

namespace mm3dgs {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

/// One map primitive. Scale is stored as log standard deviation and opacity
/// as a logit so unconstrained gradient steps keep both in range.
struct Gaussian3D {
  Vec3 mu = Vec3::Zero();
  Quat rot = Quat::Identity();
  Vec3 log_scale = Vec3::Zero();
  double opacity_logit = 0.0;
  Vec3 color = Vec3::Zero();

  Vec3 scale() const { return log_scale.array().exp(); }
  double opacity() const { return sigmoid(opacity_logit); }

  /// Validity of the decoded parameters; writes a reason on failure.
  bool is_valid(std::string* reason = nullptr) const;

  static Gaussian3D isotropic(const Vec3& mu, double sigma, double opacity, const Vec3& color);
};

/// Sigma = R S S^T R^T with R from the (normalized) quaternion.
Mat3 covariance(const Gaussian3D& g);

inline constexpr double kMinScale = 1e-8;

/// exp(-1/2 (x-mu)^T Sigma^-1 (x-mu)). Throws DegenerateCovariance.
double evaluate_density(const Gaussian3D& g, const Vec3& x);

class GaussianMap {
 public:
  size_t size() const { return gaussians_.size(); }
  bool empty() const { return gaussians_.empty(); }

  const Gaussian3D& operator[](size_t i) const { return gaussians_[i]; }
  Gaussian3D& operator[](size_t i) { return gaussians_[i]; }

  std::span<const Gaussian3D> gaussians() const { return gaussians_; }
  std::span<Gaussian3D> gaussians() { return gaussians_; }
  int creation_keyframe(size_t i) const { return creation_keyframe_[i]; }

  /// Appends a validated batch. Throws InvalidGaussian naming the first bad
  /// index; on error the map is left unchanged.
  size_t insert(std::span<const Gaussian3D> batch, int keyframe_id);

  /// FNV-1a over the raw parameter bytes; equal maps hash equal.
  uint64_t checksum() const;

 private:
  std::vector<Gaussian3D> gaussians_;
  std::vector<int> creation_keyframe_;
};

/// Binary checkpoint: "MM3DGSMP", u32 version, u64 count, then 14 float32 per
/// Gaussian (mu, rot wxyz, log-scale, logit-opacity, rgb), little-endian.
void save_map(const std::string& path, const GaussianMap& map);
GaussianMap load_map(const std::string& path);

}  // namespace mm3dgs
