// Copyright Contributors to the mm3dgs Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "mm3dgs/dataset_io.hpp"
#include "mm3dgs/image.hpp"

namespace mm3dgs {

/// x -> scale * rotation * x + translation
struct Similarity {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  double scale = 1.0;

  Vec3 apply(const Vec3& x) const { return scale * (rotation * x) + translation; }
};

/// Closed-form least-squares alignment of `est` onto `gt`. Throws
/// DegenerateSpread for fewer than 3 points or collinear/coincident sets.
Similarity umeyama_align(const std::vector<Vec3>& est, const std::vector<Vec3>& gt, bool with_scale);

struct AteResult {
  double rmse_cm = 0.0;
  std::vector<double> errors_cm;  // per associated pose
  std::vector<double> timestamps;
  Similarity alignment;
  bool aligned = true;  // false when the spread was degenerate
};

/// Associates poses within `max_dt` seconds, aligns translations and
/// returns the residual RMSE in centimeters.
AteResult ate_rmse(const std::vector<StampedPose>& est, const std::vector<StampedPose>& gt,
                   bool with_scale, double max_dt = 0.02);

struct PsnrSummary {
  double mean = 0.0;
  bool mean_defined = false;  // false when every pair is identical
  int infinite = 0;
  std::vector<double> per_frame;
};

PsnrSummary sequence_psnr(const std::vector<Image>& renders, const std::vector<Image>& targets);

struct MetricsReport {
  std::string mode;
  bool ate_available = false;  // false without ground truth
  double ate_rmse_cm = 0.0;
  bool ate_aligned = true;
  bool ate_with_scale = false;
  double path_length_m = 0.0;
  Similarity alignment;
  std::vector<double> translation_errors_cm;

  double psnr_mean = 0.0;
  bool psnr_defined = false;
  int psnr_infinite = 0;
  bool psnr_keyframes_only = false;
  std::vector<int> psnr_frames;
  std::vector<double> psnr_per_frame;

  int frames = 0;
  std::vector<int> keyframes;
  size_t gaussians = 0;
  int tracking_failures = 0;
  double runtime_s = 0.0;
  double tracking_s = 0.0;
  double mapping_s = 0.0;

  std::string to_json() const;
  static MetricsReport from_json(const std::string& text);
  void print_table(std::ostream& os) const;
};

void write_report(const std::string& path, const MetricsReport& report);
MetricsReport read_report(const std::string& path);

/// Total translation distance along consecutive poses, meters.
double path_length(const std::vector<StampedPose>& trajectory);

}  // namespace mm3dgs
