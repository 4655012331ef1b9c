// Copyright Contributors to the mm3dgs Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mm3dgs/dataset_io.hpp"
#include "mm3dgs/eval.hpp"
#include "mm3dgs/gaussian_map.hpp"
#include "mm3dgs/losses.hpp"
#include "mm3dgs/mapper.hpp"
#include "mm3dgs/synthetic.hpp"
#include "mm3dgs/tracker.hpp"

namespace mm3dgs {

enum class RunMode { Rgb, RgbImu, Rgbd, RgbdImu };

RunMode parse_run_mode(const std::string& name);
std::string to_string(RunMode mode);
inline bool uses_imu(RunMode m) { return m == RunMode::RgbImu || m == RunMode::RgbdImu; }
inline bool uses_depth(RunMode m) { return m == RunMode::Rgbd || m == RunMode::RgbdImu; }

struct RunConfig {
  std::string dataset;  // TUM-style directory; empty selects the synthetic scene
  SyntheticSceneSpec synthetic;
  TumOptions tum;
  RunMode mode = RunMode::RgbdImu;

  TrackerConfig tracker;
  MapperConfig mapper;
  LossWeights weights;

  std::string out_dir;  // empty: nothing is written
  uint64_t seed = 0;
  int workers = 1;
  int checkpoint_every = 25;
  int max_lost_frames = 3;

  int niqe_window = 5;
  std::string niqe_model;  // empty: the bundled model
  double warp_amplitude = 0.05;
  bool psnr_keyframes_only = false;
  /// Replaces the initial tracking guess for a frame when set.
  std::function<Pose(int frame, const Pose& guess)> guess_hook;

  void validate() const;
};

/// Applies one "key = value" setting; keys match the long CLI flag names.
/// Throws Config for unknown keys or malformed values.
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value);

/// Reads a plain-text file of "key = value" lines ('#' starts a comment).
void load_config_file(RunConfig& cfg, const std::string& path);

std::string default_niqe_model_path();

struct KeyframeRecord {
  int frame_id = 0;
  int promoted_at = 0;         // frame whose covisibility triggered promotion
  double covisibility = 0.0;  // at promotion time; 0 for the first frame
};

struct RunResult {
  MetricsReport report;
  std::vector<StampedPose> trajectory;
  std::vector<KeyframeRecord> keyframes;
  GaussianMap map;
};

/// Loads the configured dataset (or generates the synthetic scene) and runs
/// tracking and mapping over every frame.
RunResult run_slam(const RunConfig& cfg);
RunResult run_slam(const RunConfig& cfg, const Sequence& sequence);

}  // namespace mm3dgs
