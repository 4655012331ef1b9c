// Copyright Contributors to the mm3dgs Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>

#include "mm3dgs/image.hpp"
#include "mm3dgs/rasterizer.hpp"

namespace mm3dgs {

struct LossWeights {
  double lambda_c = 0.8;
  double lambda_s = 0.2;
  double lambda_d = 0.05;

  void validate() const;
};

/// Scalar objective plus its gradient with respect to one image argument.
struct ScalarGrad {
  double value = 0.0;
  Image grad;
};

/// Mean |rendered - target| over unmasked pixels and all channels.
/// Throws EmptyMask when nothing is unmasked.
ScalarGrad photometric_l1(const Image& rendered, const Image& target,
                          const PixelMask* mask = nullptr);

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;

/// Mean SSIM over valid 11x11 window positions, averaged over channels.
double ssim(const Image& a, const Image& b);

/// (1 - SSIM) / 2 with gradient with respect to `rendered`.
ScalarGrad dssim(const Image& rendered, const Image& target);

/// 1 - Pearson(d_est, d_ren) over the mask, gradient with respect to d_ren.
/// Throws DegenerateVariance when either masked map is (nearly) constant.
ScalarGrad pearson_depth(const Image& d_est, const Image& d_ren, const PixelMask& mask);

/// Depth supervision target. Metric depth is compared directly; a relative
/// inverse depth estimate is compared against the inverse rendered depth.
/// Non-positive values mark invalid pixels.
struct DepthTarget {
  Image values;
  bool inverse = false;
};

inline constexpr double kTrackingOpacity = 0.99;
/// Rendered opacity needed for a pixel's depth to enter the mapping depth term.
inline constexpr double kDepthSupportOpacity = 0.5;

struct LossResult {
  double total = 0.0;
  double photometric = 0.0;
  double ssim_term = 0.0;
  double depth = 0.0;
  bool depth_used = false;
  double mask_fraction = 1.0;
  RenderUpstream upstream;
};

/// Opacity-masked L1 + lambda_d * Pearson depth loss.
LossResult tracking_loss(const RenderOutput& render, const Image& rgb, const DepthTarget* depth,
                         const LossWeights& w);

/// lambda_c * L1 + lambda_s * D-SSIM + lambda_d * Pearson depth loss, unmasked
/// photometric terms.
LossResult mapping_loss(const RenderOutput& render, const Image& rgb, const DepthTarget* depth,
                        const LossWeights& w);

/// 10 log10(1 / MSE); +infinity when MSE < 1e-12.
double psnr(const Image& rendered, const Image& target);

}  // namespace mm3dgs
