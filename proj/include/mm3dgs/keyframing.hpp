// Copyright Contributors to the mm3dgs Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include "mm3dgs/frame.hpp"
#include "mm3dgs/losses.hpp"
#include "mm3dgs/niqe.hpp"

namespace mm3dgs {

struct Keyframe {
  int frame_id = 0;
  Pose pose;
  Frame frame;
  /// Depth supervision for this keyframe (sensor depth or the provider's
  /// relative estimate).
  DepthTarget depth;
};

inline constexpr double kCovisibilityThreshold = 0.95;
/// Rendered opacity a pixel needs for its depth to count as map geometry.
inline constexpr double kCovisibilityOpacity = 0.5;

/// Fraction of the current view's surface points (backprojected from `depth`
/// at `current_pose`) that land inside the other view's image with positive
/// depth. A non-empty `opacity` restricts the count to pixels above
/// kCovisibilityOpacity. Returns 1 when no pixel has valid depth.
double covisibility(const Pose& current_pose, const Image& depth, const Image& opacity,
                    const Pose& other_pose, const Intrinsics& k);

/// Strict: true iff covis < threshold.
inline bool should_add_keyframe(double covis, double threshold = kCovisibilityThreshold) {
  return covis < threshold;
}

struct WindowFrame {
  int frame_id = 0;
  const Image* rgb = nullptr;
};

/// Frame with the lowest NIQE score; ties (and unscorable frames) resolve to
/// the most recent. Throws InvalidArgument on an empty window.
int select_best_in_window(std::span<const WindowFrame> window, const NiqeModel& model);

}  // namespace mm3dgs
