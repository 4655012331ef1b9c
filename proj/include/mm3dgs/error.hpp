// Copyright Contributors to the mm3dgs Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mm3dgs {

enum class ErrorCode {
  InvalidArgument,
  ShapeMismatch,
  Io,
  Config,
  // geometry / map
  NonPositiveDepth,
  DegenerateCovariance,
  InvalidGaussian,
  // rasterizer / losses
  ContextMismatch,
  EmptyMask,
  ImageTooSmall,
  DegenerateVariance,
  // imu / tracker
  NonPositiveDt,
  InsufficientSamples,
  MissingImu,
  TrackingLost,
  // keyframing / mapper
  NoQualifiedPatches,
  CorpusTooSmall,
  RankDeficient,
  NoDepth,
  // dataset
  MissingIndexFile,
  UnparsableLine,
  NoAssociations,
  NonMonotoneTimestamps,
  NoSensorDepth,
  // eval
  DegenerateSpread,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace mm3dgs
