// Copyright Contributors to the mm3dgs Project
// SPDX-License-Identifier: Apache-2.0

#include "mm3dgs/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "mm3dgs/error.hpp"
#include "mm3dgs/keyframing.hpp"
#include "mm3dgs/niqe.hpp"

#ifndef MM3DGS_DATA_DIR
#define MM3DGS_DATA_DIR "data"
#endif

namespace mm3dgs {

namespace fs = std::filesystem;

RunMode parse_run_mode(const std::string& name) {
  if (name == "rgb") return RunMode::Rgb;
  if (name == "rgb+imu") return RunMode::RgbImu;
  if (name == "rgbd") return RunMode::Rgbd;
  if (name == "rgbd+imu") return RunMode::RgbdImu;
  throw Error(ErrorCode::Config, "unknown mode '" + name + "' (rgb, rgb+imu, rgbd, rgbd+imu)");
}

std::string to_string(RunMode mode) {
  switch (mode) {
    case RunMode::Rgb: return "rgb";
    case RunMode::RgbImu: return "rgb+imu";
    case RunMode::Rgbd: return "rgbd";
    case RunMode::RgbdImu: return "rgbd+imu";
  }
  return "?";
}

std::string default_niqe_model_path() { return std::string(MM3DGS_DATA_DIR) + "/niqe_model.bin"; }

void RunConfig::validate() const {
  tracker.validate();
  mapper.validate();
  weights.validate();
  if (dataset.empty()) synthetic.validate();
  if (workers < 1) throw Error(ErrorCode::Config, "workers must be >= 1");
  if (checkpoint_every < 0) throw Error(ErrorCode::Config, "checkpoint cadence must be >= 0");
  if (max_lost_frames < 1) throw Error(ErrorCode::Config, "max lost frames must be >= 1");
  if (niqe_window < 1) throw Error(ErrorCode::Config, "NIQE window must be >= 1");
  if (warp_amplitude < 0.0 || warp_amplitude >= 1.0)
    throw Error(ErrorCode::Config, "warp amplitude must be in [0, 1)");
}

namespace {

template <typename T>
T parse_value(const std::string& key, const std::string& value) {
  std::istringstream ss(value);
  T v{};
  ss >> v;
  if (ss.fail() || !(ss >> std::ws).eof())
    throw Error(ErrorCode::Config, "bad value '" + value + "' for " + key);
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  throw Error(ErrorCode::Config, "bad boolean '" + value + "' for " + key);
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
  using Setter = std::function<void(RunConfig&, const std::string&)>;
  auto num = [](auto member) {
    return [member](RunConfig& c, const std::string& v) {
      auto& field = member(c);
      field = parse_value<std::remove_reference_t<decltype(field)>>("setting", v);
    };
  };
  static const std::map<std::string, Setter> setters = {
      {"dataset", [](RunConfig& c, const std::string& v) { c.dataset = v; }},
      {"mode", [](RunConfig& c, const std::string& v) { c.mode = parse_run_mode(v); }},
      {"out", [](RunConfig& c, const std::string& v) { c.out_dir = v; }},
      {"seed", num([](RunConfig& c) -> uint64_t& { return c.seed; })},
      {"workers", num([](RunConfig& c) -> int& { return c.workers; })},
      {"track-iters", num([](RunConfig& c) -> int& { return c.tracker.iterations; })},
      {"map-iters", num([](RunConfig& c) -> int& { return c.mapper.iterations; })},
      {"lambda-c", num([](RunConfig& c) -> double& { return c.weights.lambda_c; })},
      {"lambda-s", num([](RunConfig& c) -> double& { return c.weights.lambda_s; })},
      {"lambda-d", num([](RunConfig& c) -> double& { return c.weights.lambda_d; })},
      {"lr-rotation", num([](RunConfig& c) -> double& { return c.tracker.lr_rotation; })},
      {"lr-translation", num([](RunConfig& c) -> double& { return c.tracker.lr_translation; })},
      {"checkpoint-every", num([](RunConfig& c) -> int& { return c.checkpoint_every; })},
      {"max-lost-frames", num([](RunConfig& c) -> int& { return c.max_lost_frames; })},
      {"niqe-window", num([](RunConfig& c) -> int& { return c.niqe_window; })},
      {"niqe-model", [](RunConfig& c, const std::string& v) { c.niqe_model = v; }},
      {"warp-amplitude", num([](RunConfig& c) -> double& { return c.warp_amplitude; })},
      {"psnr-keyframes-only",
       [](RunConfig& c, const std::string& v) { c.psnr_keyframes_only = parse_bool("psnr-keyframes-only", v); }},
      {"compensate-gravity",
       [](RunConfig& c, const std::string& v) { c.tum.compensate_gravity = parse_bool("compensate-gravity", v); }},
      {"preset", [](RunConfig& c, const std::string& v) { c.synthetic.preset = parse_scene_preset(v); }},
      {"trajectory", [](RunConfig& c, const std::string& v) { c.synthetic.trajectory = parse_trajectory(v); }},
      {"frames", num([](RunConfig& c) -> int& { return c.synthetic.frames; })},
      {"gaussians", num([](RunConfig& c) -> int& { return c.synthetic.gaussian_count; })},
      {"extent", num([](RunConfig& c) -> double& { return c.synthetic.extent; })},
      {"fps", num([](RunConfig& c) -> double& { return c.synthetic.fps; })},
      {"width", num([](RunConfig& c) -> int& { return c.synthetic.width; })},
      {"height", num([](RunConfig& c) -> int& { return c.synthetic.height; })},
      {"focal", num([](RunConfig& c) -> double& { return c.synthetic.focal; })},
      {"imu-rate", num([](RunConfig& c) -> double& { return c.synthetic.imu_rate; })},
      {"pixel-noise", num([](RunConfig& c) -> double& { return c.synthetic.pixel_noise; })},
      {"depth-noise", num([](RunConfig& c) -> double& { return c.synthetic.depth_noise; })},
      {"accel-noise", num([](RunConfig& c) -> double& { return c.synthetic.accel_noise; })},
      {"gyro-noise", num([](RunConfig& c) -> double& { return c.synthetic.gyro_noise; })},
  };
  const auto it = setters.find(key);
  if (it == setters.end()) throw Error(ErrorCode::Config, "unknown setting '" + key + "'");
  try {
    it->second(cfg, value);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::Config) throw;
    throw Error(ErrorCode::Config, key + ": " + e.what());
  }
}

void load_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Config, "cannot open config file " + path);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorCode::Config, path + ":" + std::to_string(n) + ": expected key = value");
    apply_setting(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct PendingFrame {
  Frame frame;
  Pose pose;
  DepthTarget depth;
};

/// Metric depth for densification, or an empty image when no usable fit
/// exists this time.
Image fitted_depth(const DepthTarget& target, const RenderOutput* render) {
  if (!target.inverse) return target.values;
  const Image& est = target.values;
  Image out(est.width, est.height, 1);

  if (render) {
    PixelMask mask(est.width, est.height, false);
    Image inv_render(est.width, est.height, 1);
    for (size_t p = 0; p < est.data.size(); ++p) {
      if (render->opacity.data[p] > kDepthSupportOpacity && render->depth.data[p] > 0.0 && est.data[p] > 0.0) {
        mask.data[p] = 1;
        inv_render.data[p] = 1.0 / render->depth.data[p];
      }
    }
    if (mask.count() >= 2) {
      try {
        const DepthFit fit = fit_depth_scale(est, inv_render, mask);
        for (size_t p = 0; p < est.data.size(); ++p) {
          const double inv = fit.sigma * est.data[p] + fit.theta;
          if (est.data[p] > 0.0 && inv > 0.0) out.data[p] = 1.0 / inv;
        }
        return out;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::RankDeficient) throw;
        return {};
      }
    }
  }
  // Nothing rendered yet: fix the free scale by the median inverse depth.
  std::vector<double> valid;
  for (double v : est.data)
    if (v > 0.0) valid.push_back(v);
  if (valid.empty()) return {};
  auto mid = valid.begin() + valid.size() / 2;
  std::nth_element(valid.begin(), mid, valid.end());
  for (size_t p = 0; p < est.data.size(); ++p)
    if (est.data[p] > 0.0) out.data[p] = *mid / est.data[p];
  return out;
}

void write_keyframes(const std::string& path, const std::vector<KeyframeRecord>& records,
                     const std::vector<StampedPose>& trajectory) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  out << "# frame_id timestamp promoted_at covisibility\n";
  char buf[128];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof(buf), "%d %.9f %d %.6f\n", r.frame_id, trajectory[r.frame_id].t, r.promoted_at,
                  r.covisibility);
    out << buf;
  }
}

}  // namespace

RunResult run_slam(const RunConfig& cfg) {
  cfg.validate();
  if (!cfg.dataset.empty()) return run_slam(cfg, load_tum_sequence(cfg.dataset, cfg.tum));
  SyntheticSceneSpec spec = cfg.synthetic;
  spec.seed = cfg.seed;
  return run_slam(cfg, generate_synthetic(spec).sequence);
}

RunResult run_slam(const RunConfig& cfg, const Sequence& seq) {
  cfg.validate();
  const auto start = Clock::now();
  if (seq.size() == 0) throw Error(ErrorCode::NoAssociations, "dataset has no frames");
  if (uses_imu(cfg.mode) && seq.imu.empty())
    throw Error(ErrorCode::Config, "mode " + to_string(cfg.mode) + " needs an IMU stream");
  if (!seq.has_depth())
    throw Error(ErrorCode::Config, "mode " + to_string(cfg.mode) +
                                       (uses_depth(cfg.mode) ? " needs depth images"
                                                             : " needs depth to emulate monocular estimates"));
  const Intrinsics& k = seq.intrinsics;
  k.validate();
  const NiqeModel niqe = load_niqe_model(cfg.niqe_model.empty() ? default_niqe_model_path() : cfg.niqe_model);

  TrackerConfig tcfg = cfg.tracker;
  tcfg.guess_mode = uses_imu(cfg.mode) ? GuessMode::Imu : GuessMode::ConstantVelocity;
  tcfg.render.workers = cfg.workers;
  MapperConfig mcfg = cfg.mapper;
  mcfg.render.workers = cfg.workers;
  RenderSettings rs;
  rs.workers = cfg.workers;

  const bool write = !cfg.out_dir.empty();
  const fs::path out_dir(cfg.out_dir);
  if (write) {
    fs::create_directories(out_dir);
    if (cfg.checkpoint_every > 0) fs::create_directories(out_dir / "checkpoints");
  }

  auto depth_target = [&](const Frame& f) {
    if (uses_depth(cfg.mode)) return DepthTarget{f.depth, false};
    DepthEmulation emu;
    emu.warp_amplitude = cfg.warp_amplitude;
    emu.seed = cfg.seed;
    return DepthTarget{depth_provider(f, DepthSource::EmulatedRelative, emu).values, true};
  };

  RunResult result;
  GaussianMap& map = result.map;
  std::vector<Keyframe> keyframes;
  std::deque<PendingFrame> window;
  TrackState track;
  double tracking_s = 0.0, mapping_s = 0.0;
  int lost = 0, failures = 0;

  auto flush = [&](bool final) {
    if (!write) return;
    write_trajectory((out_dir / "trajectory.txt").string(), result.trajectory);
    write_keyframes((out_dir / "keyframes.txt").string(), result.keyframes, result.trajectory);
    if (final) save_map((out_dir / "map.bin").string(), map);
  };

  auto add_keyframe = [&](PendingFrame&& pf, int promoted_at, double covis, const RenderOutput* current) {
    const int id = pf.frame.id;
    const RenderOutput* seen = current;
    RenderOutput own;
    if (!map.empty() && (!seen || id != promoted_at)) {
      own = render(map, pf.pose, k, rs);
      seen = &own;
    }
    if (map.empty()) seen = nullptr;
    const Image depth = fitted_depth(pf.depth, seen);
    if (!depth.empty()) {
      const auto batch = densify(pf.frame, pf.pose, seen, depth, mcfg);
      map.insert(batch, id);
    }
    keyframes.push_back({id, pf.pose, std::move(pf.frame), std::move(pf.depth)});
    result.keyframes.push_back({id, promoted_at, covis});
  };

  for (size_t i = 0; i < seq.size(); ++i) {
    Frame frame = seq.load_frame(i);
    frame.id = static_cast<int>(i);
    DepthTarget target = depth_target(frame);
    const auto t0 = Clock::now();

    if (i == 0) {
      const Pose pose = Pose::identity();
      track.push(pose);
      track.imu.last_t = frame.t;
      result.trajectory.push_back({frame.t, pose});
      const auto m0 = Clock::now();
      add_keyframe({frame, pose, target}, 0, 0.0, nullptr);
      const Keyframe& kf = keyframes.back();
      if (!map.empty()) optimize_map(map, {{kf.pose, &kf.frame, &kf.depth}}, mcfg, cfg.weights);
      mapping_s += seconds_since(m0);
      continue;
    }

    std::optional<Pose> rel;
    if (uses_imu(cfg.mode)) {
      const Preintegration pre = preintegrate(seq.imu, track.imu, seq.frames[i - 1].t, frame.t);
      track.imu = pre.state;
      rel = compose(compose(seq.imu_to_camera, pre.relative), inverse(seq.imu_to_camera));
    }
    Pose guess = initial_guess(track, tcfg.guess_mode, rel);
    if (cfg.guess_hook) guess = cfg.guess_hook(static_cast<int>(i), guess);
    Pose pose = guess;
    try {
      const TrackResult tr = optimize_pose(map, frame, &target, guess, tcfg, cfg.weights);
      pose = tr.pose;
      track.loss_trace.push_back(tr.stats.final_loss);
      lost = 0;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::TrackingLost) throw;
      ++failures;
      if (++lost >= cfg.max_lost_frames) {
        result.trajectory.push_back({frame.t, pose});
        flush(false);
        throw Error(ErrorCode::TrackingLost, "tracking lost for " + std::to_string(lost) +
                                                 " consecutive frames at frame " + std::to_string(i));
      }
    }
    track.push(pose);
    result.trajectory.push_back({frame.t, pose});
    tracking_s += seconds_since(t0);

    const auto m0 = Clock::now();
    const RenderOutput current = render(map, pose, k, rs);
    // observed surface; the render alone only ever shows already-mapped geometry
    Image observed = fitted_depth(target, &current);
    Image observed_opacity;
    if (observed.empty()) {
      observed = current.depth;
      observed_opacity = current.opacity;
    }
    auto covis_with = [&](const Keyframe& kf) {
      return covisibility(pose, observed, observed_opacity, kf.pose, k);
    };
    double covis = 0.0;
    for (const auto& kf : keyframes) covis = std::max(covis, covis_with(kf));

    window.push_back({frame, pose, target});
    if (static_cast<int>(window.size()) > cfg.niqe_window) window.pop_front();

    if (should_add_keyframe(covis)) {
      std::vector<WindowFrame> wf;
      for (const auto& p : window) wf.push_back({p.frame.id, &p.frame.rgb});
      const int best = select_best_in_window(wf, niqe);
      auto it = std::find_if(window.begin(), window.end(), [&](const PendingFrame& p) { return p.frame.id == best; });
      PendingFrame promoted = std::move(*it);
      window.erase(it);
      add_keyframe(std::move(promoted), static_cast<int>(i), covis, &current);

      std::vector<MappingView> views;
      views.push_back({pose, &frame, &target});
      for (size_t j = 0; j < keyframes.size(); ++j) {
        const Keyframe& kf = keyframes[j];
        if (kf.frame_id == static_cast<int>(i) && j + 1 == keyframes.size()) continue;
        const bool newest = j + 1 == keyframes.size();
        if (newest || covis_with(kf) >= mcfg.covisible_min)
          views.push_back({kf.pose, &kf.frame, &kf.depth});
      }
      if (!map.empty()) optimize_map(map, views, mcfg, cfg.weights);
    }
    mapping_s += seconds_since(m0);

    if (write && cfg.checkpoint_every > 0 && (i + 1) % cfg.checkpoint_every == 0) {
      char name[64];
      std::snprintf(name, sizeof(name), "map_%06zu.bin", i + 1);
      save_map((out_dir / "checkpoints" / name).string(), map);
      flush(false);
    }
  }

  MetricsReport& rep = result.report;
  rep.mode = to_string(cfg.mode);
  rep.frames = static_cast<int>(seq.size());
  for (const auto& r : result.keyframes) rep.keyframes.push_back(r.frame_id);
  rep.gaussians = map.size();
  rep.tracking_failures = failures;
  if (!seq.ground_truth.empty()) {
    rep.ate_available = true;
    rep.ate_with_scale = !uses_depth(cfg.mode);
    const AteResult ate = ate_rmse(result.trajectory, seq.ground_truth, rep.ate_with_scale);
    rep.ate_rmse_cm = ate.rmse_cm;
    rep.ate_aligned = ate.aligned;
    rep.alignment = ate.alignment;
    rep.translation_errors_cm = ate.errors_cm;
    rep.path_length_m = path_length(seq.ground_truth);
  }

  std::vector<Image> renders, targets;
  rep.psnr_keyframes_only = cfg.psnr_keyframes_only;
  if (cfg.psnr_keyframes_only) {
    for (const auto& kf : keyframes) {
      renders.push_back(render(map, kf.pose, k, rs).color);
      targets.push_back(kf.frame.rgb);
      rep.psnr_frames.push_back(kf.frame_id);
    }
  } else {
    for (size_t i = 0; i < seq.size(); ++i) {
      renders.push_back(render(map, result.trajectory[i].pose, k, rs).color);
      targets.push_back(seq.load_frame(i).rgb);
      rep.psnr_frames.push_back(static_cast<int>(i));
    }
  }
  const PsnrSummary ps = sequence_psnr(renders, targets);
  rep.psnr_mean = ps.mean;
  rep.psnr_defined = ps.mean_defined;
  rep.psnr_infinite = ps.infinite;
  rep.psnr_per_frame = ps.per_frame;
  rep.tracking_s = tracking_s;
  rep.mapping_s = mapping_s;
  rep.runtime_s = seconds_since(start);

  flush(true);
  if (write) write_report((out_dir / "report.json").string(), rep);
  return result;
}

}  // namespace mm3dgs
