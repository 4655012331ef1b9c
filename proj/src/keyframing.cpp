// Copyright Contributors to the mm3dgs Project
// SPDX-License-Identifier: Apache-2.0

#include "mm3dgs/keyframing.hpp"

#include <limits>

#include "mm3dgs/error.hpp"

namespace mm3dgs {

double covisibility(const Pose& current_pose, const Image& depth, const Image& opacity,
                    const Pose& other_pose, const Intrinsics& k) {
  if (depth.width != k.width || depth.height != k.height ||
      (!opacity.empty() && !opacity.same_shape(depth)))
    throw Error(ErrorCode::ShapeMismatch, "covisibility buffers do not match intrinsics");
  const Mat3 r_cur = current_pose.rotation_matrix();
  const Mat3 rt_other = other_pose.rotation_matrix().transpose();
  // current camera -> other camera
  const Mat3 r_rel = rt_other * r_cur;
  const Vec3 t_rel = rt_other * (current_pose.translation - other_pose.translation);
  size_t total = 0, seen = 0;
  for (int y = 0; y < k.height; ++y)
    for (int x = 0; x < k.width; ++x) {
      const double d = depth.at(x, y);
      if (!(d > 0.0)) continue;
      if (!opacity.empty() && !(opacity.at(x, y) > kCovisibilityOpacity)) continue;
      ++total;
      const Vec3 p = r_rel * backproject(x + 0.5, y + 0.5, d, k) + t_rel;
      if (p.z() <= kMinProjectDepth) continue;
      const double u = k.fx * p.x() / p.z() + k.cx;
      const double v = k.fy * p.y() / p.z() + k.cy;
      if (u >= 0.0 && u < k.width && v >= 0.0 && v < k.height) ++seen;
    }
  if (total == 0) return 1.0;
  return static_cast<double>(seen) / static_cast<double>(total);
}

int select_best_in_window(std::span<const WindowFrame> window, const NiqeModel& model) {
  if (window.empty()) throw Error(ErrorCode::InvalidArgument, "empty NIQE window");
  int best = window.back().frame_id;
  double best_score = std::numeric_limits<double>::infinity();
  for (const auto& wf : window) {
    double score = std::numeric_limits<double>::infinity();
    try {
      score = niqe_score(*wf.rgb, model);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoQualifiedPatches && e.code() != ErrorCode::ImageTooSmall) throw;
    }
    if (score <= best_score) {
      best_score = score;
      best = wf.frame_id;
    }
  }
  return best;
}

}  // namespace mm3dgs
