// Copyright Contributors to the mm3dgs Project
// SPDX-License-Identifier: Apache-2.0

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "mm3dgs/dataset_io.hpp"
#include "mm3dgs/error.hpp"
#include "mm3dgs/eval.hpp"
#include "mm3dgs/gradcheck.hpp"
#include "mm3dgs/niqe.hpp"
#include "mm3dgs/pipeline.hpp"
#include "mm3dgs/rasterizer.hpp"
#include "mm3dgs/synthetic.hpp"

namespace fs = std::filesystem;
using namespace mm3dgs;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitDataset = 3;
constexpr int kExitTrackingLost = 4;

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::Config:
    case ErrorCode::InvalidArgument:
      return kExitConfig;
    case ErrorCode::Io:
    case ErrorCode::MissingIndexFile:
    case ErrorCode::UnparsableLine:
    case ErrorCode::NoAssociations:
    case ErrorCode::NonMonotoneTimestamps:
    case ErrorCode::NoSensorDepth:
    case ErrorCode::ShapeMismatch:
      return kExitDataset;
    case ErrorCode::TrackingLost:
      return kExitTrackingLost;
    default:
      return 1;
  }
}

Intrinsics read_calib(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "r");
  if (!f) throw Error(ErrorCode::Io, "cannot open " + path);
  Intrinsics k;
  const int n = std::fscanf(f, "%lf %lf %lf %lf %d %d", &k.fx, &k.fy, &k.cx, &k.cy, &k.width, &k.height);
  std::fclose(f);
  if (n != 6) throw Error(ErrorCode::UnparsableLine, path + ":1: expected fx fy cx cy width height");
  k.validate();
  return k;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-modal 3D Gaussian splatting SLAM"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "track and map a sequence");
  std::string config_path;
  std::vector<std::pair<std::string, CLI::Option*>> run_flags;
  std::vector<std::string> run_values(11);
  run->add_option("--config", config_path, "key = value settings file");
  const char* names[] = {"dataset", "mode", "out", "seed", "track-iters", "map-iters",
                         "lambda-c", "lambda-s", "lambda-d", "workers", "niqe-model"};
  for (size_t i = 0; i < run_values.size(); ++i)
    run_flags.emplace_back(names[i], run->add_option(std::string("--") + names[i], run_values[i]));
  run_flags[1].second->check(CLI::IsMember({"rgb", "rgb+imu", "rgbd", "rgbd+imu"}));
  std::vector<std::string> run_settings;
  run->add_option("--set", run_settings, "extra key=value setting (repeatable)");
  bool kf_psnr = false;
  run->add_flag("--psnr-keyframes-only", kf_psnr, "evaluate PSNR on keyframes only");

  // synth
  auto* synth = app.add_subcommand("synth", "write a synthetic sequence as a TUM-style directory");
  SyntheticSceneSpec spec;
  std::string synth_traj = "square", synth_scene = "textured-room", synth_out;
  synth->add_option("--preset", synth_traj, "trajectory: square, circle or straight")
      ->check(CLI::IsMember({"square", "circle", "straight"}));
  synth->add_option("--scene", synth_scene, "layout: textured-room, planar-grid or random-box")
      ->check(CLI::IsMember({"textured-room", "planar-grid", "random-box"}));
  synth->add_option("--frames", spec.frames);
  synth->add_option("--gaussians", spec.gaussian_count);
  synth->add_option("--seed", spec.seed);
  synth->add_option("--pixel-noise", spec.pixel_noise);
  synth->add_option("--depth-noise", spec.depth_noise);
  synth->add_option("--accel-noise", spec.accel_noise);
  synth->add_option("--gyro-noise", spec.gyro_noise);
  synth->add_option("--imu-rate", spec.imu_rate);
  synth->add_option("--out", synth_out)->required();

  // eval
  auto* eval = app.add_subcommand("eval", "ATE of an estimated trajectory against ground truth");
  std::string est_path, gt_path, eval_out;
  bool eval_scale = false;
  eval->add_option("--est", est_path)->required();
  eval->add_option("--gt", gt_path)->required();
  eval->add_flag("--scale", eval_scale, "similarity alignment (monocular runs)");
  eval->add_option("--out", eval_out, "report file");

  // render
  auto* rend = app.add_subcommand("render", "render a map checkpoint at a list of poses");
  std::string map_path, poses_path, calib_path, render_out;
  int render_workers = 1;
  rend->add_option("--map", map_path)->required();
  rend->add_option("--poses", poses_path, "TUM trajectory")->required();
  rend->add_option("--calib", calib_path, "fx fy cx cy width height")->required();
  rend->add_option("--out", render_out)->required();
  rend->add_option("--workers", render_workers);

  // niqe-fit
  auto* niqe = app.add_subcommand("niqe-fit", "fit a NIQE model on pristine images");
  std::string corpus_dir, niqe_out;
  int synthetic_count = 0, patch = 32;
  uint64_t niqe_seed = 1;
  niqe->add_option("--corpus", corpus_dir, "directory of PNG images");
  niqe->add_option("--synthetic", synthetic_count, "use N synthetic renders instead");
  niqe->add_option("--seed", niqe_seed);
  niqe->add_option("--patch", patch);
  niqe->add_option("--out", niqe_out)->required();

  // gradcheck
  auto* grad = app.add_subcommand("gradcheck", "finite-difference audit of render_backward");
  GradcheckOptions gopt;
  grad->add_option("--scenes", gopt.scenes);
  grad->add_option("--seed", gopt.seed);
  grad->add_option("--workers", gopt.workers);
  grad->add_option("--step", gopt.step_position, "finite-difference step for positions and pose");
  grad->add_option("--step-other", gopt.step_other, "finite-difference step for the other parameters");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*run) {
      RunConfig cfg;
      if (!config_path.empty()) load_config_file(cfg, config_path);
      for (size_t i = 0; i < run_flags.size(); ++i)
        if (run_flags[i].second->count() > 0) apply_setting(cfg, run_flags[i].first, run_values[i]);
      for (const auto& kv : run_settings) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw Error(ErrorCode::Config, "--set expects key=value, got '" + kv + "'");
        apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
      }
      if (kf_psnr) cfg.psnr_keyframes_only = true;
      const RunResult r = run_slam(cfg);
      r.report.print_table(std::cout);
      return 0;
    }
    if (*synth) {
      spec.trajectory = parse_trajectory(synth_traj);
      spec.preset = parse_scene_preset(synth_scene);
      const SyntheticData data = generate_synthetic(spec);
      write_tum_sequence(synth_out, data.sequence);
      save_map((fs::path(synth_out) / "groundtruth_map.bin").string(), data.map);
      std::cout << "wrote " << data.sequence.size() << " frames, " << data.sequence.imu.size()
                << " IMU samples, " << data.map.size() << " Gaussians to " << synth_out << "\n";
      return 0;
    }
    if (*eval) {
      const auto est = load_trajectory(est_path);
      const auto gt = load_trajectory(gt_path);
      const AteResult ate = ate_rmse(est, gt, eval_scale);
      MetricsReport rep;
      rep.mode = "eval";
      rep.ate_available = true;
      rep.ate_rmse_cm = ate.rmse_cm;
      rep.ate_aligned = ate.aligned;
      rep.ate_with_scale = eval_scale;
      rep.alignment = ate.alignment;
      rep.translation_errors_cm = ate.errors_cm;
      rep.path_length_m = path_length(gt);
      rep.frames = static_cast<int>(ate.errors_cm.size());
      rep.print_table(std::cout);
      if (!eval_out.empty()) write_report(eval_out, rep);
      return 0;
    }
    if (*rend) {
      const GaussianMap map = load_map(map_path);
      const auto poses = load_trajectory(poses_path);
      const Intrinsics k = read_calib(calib_path);
      fs::create_directories(render_out);
      RenderSettings rs;
      rs.workers = render_workers;
      char name[64];
      for (size_t i = 0; i < poses.size(); ++i) {
        std::snprintf(name, sizeof(name), "%06zu", i);
        dump_render_png(render(map, poses[i].pose, k, rs), (fs::path(render_out) / name).string());
      }
      std::cout << "rendered " << poses.size() << " views to " << render_out << "\n";
      return 0;
    }
    if (*niqe) {
      std::vector<Image> corpus;
      if (synthetic_count > 0) {
        corpus = synthetic_corpus(synthetic_count, niqe_seed);
      } else if (!corpus_dir.empty()) {
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(corpus_dir))
          if (e.path().extension() == ".png") files.push_back(e.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) corpus.push_back(read_png(f.string()));
      } else {
        throw Error(ErrorCode::Config, "niqe-fit needs --corpus or --synthetic");
      }
      const NiqeModel model = fit_niqe_model(corpus, patch);
      save_niqe_model(niqe_out, model);
      std::cout << "fitted NIQE model on " << model.images << " images, " << model.patches << " patches\n";
      return 0;
    }
    if (*grad) {
      const GradcheckReport rep = gradient_audit(gopt);
      std::printf("gradcheck: %d scenes, %ld checks, %zu violations, worst ratio %.3g, %.1f s\n", rep.scenes,
                  rep.checks, rep.failures.size(), rep.worst_ratio, rep.seconds);
      for (size_t i = 0; i < std::min<size_t>(rep.failures.size(), 20); ++i) {
        const auto& f = rep.failures[i];
        std::printf("  scene %d %s analytic %.9g numeric %.9g\n", f.scene, f.parameter.c_str(), f.analytic,
                    f.numeric);
      }
      std::printf("%s\n", rep.passed() ? "PASS" : "FAIL");
      return rep.passed() ? 0 : 1;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
