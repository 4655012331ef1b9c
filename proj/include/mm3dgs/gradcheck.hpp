// Copyright Contributors to the mm3dgs Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mm3dgs/gaussian_map.hpp"
#include "mm3dgs/rasterizer.hpp"

namespace mm3dgs {

struct GradcheckOptions {
  int scenes = 100;
  uint64_t seed = 7;
  int max_gaussians = 50;
  int image_size = 64;
  double rel_tol = 1e-3;
  double abs_tol = 1e-6;
  double step_position = 1e-6;  // meters, and radians for the pose rotation
  double step_other = 1e-6;
  int workers = 1;
};

struct GradcheckFailure {
  int scene = 0;
  std::string parameter;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradcheckReport {
  int scenes = 0;
  long checks = 0;
  /// max |analytic - numeric| / max(abs_tol, rel_tol * max(|analytic|, |numeric|))
  double worst_ratio = 0.0;
  std::vector<GradcheckFailure> failures;
  double seconds = 0.0;

  bool passed() const { return failures.empty(); }
};

/// A random audit scene: stratified depths, opacities in [0.1, 0.7] and a
/// final transmittance kept above 1e-3 so no parameter sits on a
/// compositing cutoff.
struct GradcheckScene {
  GaussianMap map;
  Pose camera;
  Intrinsics intrinsics;
  RenderUpstream upstream;
};

GradcheckScene make_gradcheck_scene(uint64_t seed, int max_gaussians, int image_size);

/// Scalar sum of upstream-weighted render buffers.
double weighted_render_sum(const RenderOutput& out, const RenderUpstream& upstream);

/// Compares render_backward with central differences of weighted_render_sum
/// for every Gaussian parameter and the 6-dof camera pose.
GradcheckReport gradient_audit(const GradcheckOptions& options);

}  // namespace mm3dgs
