// Copyright Contributors to the mm3dgs Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mm3dgs/image.hpp"

namespace mm3dgs {

inline constexpr int kNiqeFeatures = 36;
using NiqeVector = Eigen::Matrix<double, kNiqeFeatures, 1>;
using NiqeMatrix = Eigen::Matrix<double, kNiqeFeatures, kNiqeFeatures>;

/// Multivariate Gaussian fit of natural-scene-statistics features.
struct NiqeModel {
  NiqeVector mean = NiqeVector::Zero();
  NiqeMatrix covariance = NiqeMatrix::Identity();
  int patch_size = 96;
  int images = 0;
  int patches = 0;
};

/// Shape and left/right scales of an asymmetric generalized Gaussian,
/// moment-matched over shape in [0.2, 10] at step 0.001.
struct AggdFit {
  double shape = 0.0;
  double left_scale = 0.0;
  double right_scale = 0.0;
  double mean = 0.0;
};
AggdFit fit_aggd(std::span<const double> values);

/// Mean-subtracted contrast-normalized coefficients of a gray image in
/// [0,255] using a 7x7 Gaussian (sigma 7/6) window. `local_sigma` receives the
/// local standard deviation map when non-null.
Image mscn(const Image& gray255, Image* local_sigma = nullptr);

/// 36-dim features of every qualified patch (sharpness above 0.75 of the
/// sharpest patch). Rows are patches.
Eigen::MatrixXd niqe_patch_features(const Image& image, int patch_size);

/// Lower is more natural. Throws NoQualifiedPatches (flat image) or
/// ImageTooSmall (fewer than two patches per dimension).
double niqe_score(const Image& image, const NiqeModel& model);

/// Throws CorpusTooSmall below ten images.
NiqeModel fit_niqe_model(std::span<const Image> corpus, int patch_size = 96);

/// "MM3DNIQE", u32 version, 36 float64 means, 1296 float64 covariance entries
/// row-major. The patch size is appended as an i32 trailer.
void save_niqe_model(const std::string& path, const NiqeModel& model);
NiqeModel load_niqe_model(const std::string& path);

}  // namespace mm3dgs
