// Copyright Contributors to the mm3dgs Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "mm3dgs/geometry.hpp"
#include "mm3dgs/image.hpp"

namespace mm3dgs {

/// One timestamped camera observation. `depth` is empty for monocular input;
/// where present it is metric with 0 marking invalid pixels.
struct Frame {
  int id = 0;
  double t = 0.0;
  Image rgb;
  Image depth;
  Intrinsics intrinsics;

  bool has_depth() const { return !depth.empty(); }
};

}  // namespace mm3dgs
