// Copyright Contributors to the mm3dgs Project
// SPDX-License-Identifier: Apache-2.0

// Prints one PASS/FAIL line per acceptance criterion and exits nonzero if
// any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>

#include "mm3dgs/eval.hpp"
#include "mm3dgs/gradcheck.hpp"
#include "mm3dgs/imu.hpp"
#include "mm3dgs/keyframing.hpp"
#include "mm3dgs/losses.hpp"
#include "mm3dgs/mapper.hpp"
#include "mm3dgs/niqe.hpp"
#include "mm3dgs/pipeline.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace mm3dgs {
namespace {

// Tolerances and budgets.
constexpr double kGradcheckBudgetS = 300.0;
constexpr double kBlendTol = 1e-6;
constexpr double kImuTol = 1e-3;
constexpr double kHalvingLo = 1.8, kHalvingHi = 2.2;
constexpr double kRoundoff = 1e-12;
constexpr double kAlignTol = 1e-9;
constexpr double kPearsonTol = 1e-9;
constexpr double kDepthFitTol = 1e-9;
constexpr double kAteFractionOfPath = 0.01;
constexpr double kKeyframePsnrDb = 28.0;
constexpr double kEndToEndBudgetS = 1800.0;
constexpr double kCornerWindowEdges = 0.25;  // of one side of the square, each way
constexpr double kLossTol = 1e-12;

struct Verdict {
  bool pass = true;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

double seconds(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double max_abs_diff(const Image& a, const Image& b) {
  double m = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

// 1 -------------------------------------------------------------------------

Verdict gradient_audit_criterion() {
  const GradcheckReport rep = gradient_audit(GradcheckOptions{});
  Verdict v;
  v.pass = rep.passed() && rep.scenes == 100 && rep.seconds < kGradcheckBudgetS;
  v.detail = fmt("%d scenes, %ld checks, %zu violations, worst ratio %.3g, %.1f s", rep.scenes, rep.checks,
                 rep.failures.size(), rep.worst_ratio, rep.seconds);
  return v;
}

// 2 -------------------------------------------------------------------------

Verdict blending_oracle_criterion() {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> count(1, 20);
  Intrinsics k;
  k.fx = k.fy = 56.0;
  k.cx = 32.0;
  k.cy = 24.0;
  k.width = 64;
  k.height = 48;
  double worst = 0.0;
  for (int scene = 0; scene < 100; ++scene) {
    const GaussianMap map = test::random_scene(rng, count(rng));
    Vec6 d;
    d << 0.02 * test::random_vec(rng, -1.0, 1.0), 0.05 * test::random_vec(rng, -1.0, 1.0);
    const Pose cam = retract_left(Pose::identity(), d);
    const RenderOutput out = render(map, cam, k);
    const test::Oracle o = test::brute_force(map, cam, k);
    worst = std::max({worst, max_abs_diff(out.color, o.color), max_abs_diff(out.opacity, o.opacity)});
  }
  return {worst < kBlendTol, fmt("max abs pixel error %.3g over 100 scenes", worst)};
}

// 3 -------------------------------------------------------------------------

std::vector<ImuSample> constant_stream(double rate, const Vec3& accel, const Vec3& gyro) {
  std::vector<ImuSample> out;
  const int n = static_cast<int>(std::lround(rate));
  for (int i = 0; i <= n; ++i) out.push_back({i / rate, accel, gyro});
  return out;
}

double accel_error(double rate) {
  const Preintegration p = preintegrate(constant_stream(rate, Vec3(1, 0, 0), Vec3::Zero()), {}, 0.0, 1.0);
  return (p.relative.translation - Vec3(0.5, 0, 0)).norm();
}

double rate_error(double rate) {
  const double w = std::numbers::pi / 2;
  const Preintegration p = preintegrate(constant_stream(rate, Vec3::Zero(), Vec3(0, 0, w)), {}, 0.0, 1.0);
  return rotation_angle(p.relative.rotation, Quat(Eigen::AngleAxisd(w, Vec3::UnitZ())));
}

// Level turn at constant speed: a constant centripetal specific force whose
// direction rotates with the body.
double turn_error(double rate) {
  const double speed = 1.0, w = std::numbers::pi / 2;
  const Vec3 gyro(0, 0, w);
  const Preintegration p =
      preintegrate(constant_stream(rate, gyro.cross(Vec3(speed, 0, 0)), gyro), {Vec3(speed, 0, 0), 0.0}, 0.0, 1.0);
  return (p.relative.translation - Vec3(speed * std::sin(w) / w, speed * (1 - std::cos(w)) / w, 0)).norm();
}

Verdict imu_oracle_criterion() {
  const double a100 = accel_error(100), a200 = accel_error(200);
  const double r100 = rate_error(100), r200 = rate_error(200);
  const double t100 = turn_error(100), t200 = turn_error(200);
  const double ratio = t100 / t200;
  Verdict v;
  v.pass = a100 < kImuTol && r100 < kImuTol && a200 <= a100 + kRoundoff && r200 <= r100 + kRoundoff && ratio > kHalvingLo &&
           ratio < kHalvingHi;
  v.detail = fmt("accel err %.2e/%.2e m, rate err %.2e/%.2e rad (100/200 Hz), turn err ratio 100:200 Hz %.3f", a100,
                 a200, r100, r200, ratio);
  return v;
}

// 4 -------------------------------------------------------------------------

Verdict umeyama_criterion() {
  std::mt19937_64 rng(4);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Vec3> est, gt;
    const Mat3 r = test::random_rotation(rng).toRotationMatrix();
    const Vec3 t = test::random_vec(rng, -3.0, 3.0);
    const bool sim = trial % 2 == 1;
    const double s = sim ? std::exp(test::random_vec(rng, -1.0, 1.0).x()) : 1.0;
    for (int i = 0; i < 10; ++i) {
      est.push_back(test::random_vec(rng, -2.0, 2.0));
      gt.push_back(s * (r * est.back()) + t);
    }
    const Similarity a = umeyama_align(est, gt, sim);
    worst = std::max({worst, (a.rotation - r).cwiseAbs().maxCoeff(), (a.translation - t).cwiseAbs().maxCoeff(),
                      std::abs(a.scale - s)});
  }
  double worst_ate = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<StampedPose> gt, est;
    std::normal_distribution<double> n(0.0, 0.02);
    for (int i = 0; i < 30; ++i) {
      gt.push_back({0.1 * i, test::random_pose(rng)});
      est.push_back(gt.back());
      est.back().pose.translation += Vec3(n(rng), n(rng), n(rng));
    }
    const double base = ate_rmse(est, gt, false).rmse_cm;
    const Pose g = test::random_pose(rng, 5.0);
    for (auto& p : est) p.pose = compose(g, p.pose);
    worst_ate = std::max(worst_ate, std::abs(ate_rmse(est, gt, false).rmse_cm - base));
  }
  return {worst < kAlignTol && worst_ate < kAlignTol,
          fmt("max parameter error %.3g, max ATE change under rigid pre-transform %.3g cm", worst, worst_ate)};
}

// 5 -------------------------------------------------------------------------

Verdict pearson_criterion() {
  std::mt19937_64 rng(5);
  const int w = 32, h = 24;
  const PixelMask all(w, h, true);
  double affine_err = 0.0, neg_err = 0.0, invariance = 0.0;
  std::uniform_real_distribution<double> scale(0.01, 100.0), shift(-50.0, 50.0);
  std::bernoulli_distribution keep(0.6);
  for (int trial = 0; trial < 100; ++trial) {
    const Image e = test::random_image(rng, w, h, 1, 0.5, 5.0);
    const Image r = test::random_image(rng, w, h, 1, 0.5, 5.0);
    Image aff = e, neg = e, r2 = r;
    const double s = scale(rng), t = shift(rng), s2 = scale(rng), t2 = shift(rng);
    for (double& x : aff.data) x = s * x + t;
    for (double& x : neg.data) x = -s * x + t;
    for (double& x : r2.data) x = s2 * x + t2;
    PixelMask m(w, h, false);
    for (auto& b : m.data) b = keep(rng);
    affine_err = std::max(affine_err, std::abs(pearson_depth(e, aff, all).value));
    neg_err = std::max(neg_err, std::abs(pearson_depth(e, neg, all).value - 2.0));
    invariance = std::max(invariance, std::abs(pearson_depth(e, r2, m).value - pearson_depth(e, r, m).value));
  }
  const Image est = test::random_image(rng, w, h, 1, 0.1, 3.0);
  Image ref = est;
  for (double& x : ref.data) x = 2.0 * x + 1.0;
  const DepthFit fit = fit_depth_scale(est, ref, all);
  const double fit_err = std::max(std::abs(fit.sigma - 2.0), std::abs(fit.theta - 1.0));
  return {affine_err < kPearsonTol && neg_err < kPearsonTol && invariance < kPearsonTol && fit_err < kDepthFitTol,
          fmt("affine %.2e, negation %.2e, invariance %.2e, depth fit (sigma, theta) = (%.12f, %.12f)", affine_err,
              neg_err, invariance, fit.sigma, fit.theta)};
}

// 6, 7, 8 ---------------------------------------------------------------------

struct EndToEnd {
  RunResult result;
  double wall_s = 0.0;
  std::string trajectory_file;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

uint64_t fnv1a(const std::string& bytes) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

EndToEnd run_square_loop(RunMode mode, int workers, const std::string& out_dir) {
  RunConfig cfg;  // 40 frames, 2000 Gaussians, 160x120, square loop, zero noise
  cfg.mode = mode;
  cfg.workers = workers;
  cfg.out_dir = out_dir;
  cfg.psnr_keyframes_only = true;
  const auto t0 = std::chrono::steady_clock::now();
  EndToEnd e;
  e.result = run_slam(cfg);
  e.wall_s = seconds(t0);
  e.trajectory_file = slurp(out_dir + "/trajectory.txt");
  std::printf("  [%s, %d worker(s)] ATE %.3f cm over %.3f m, keyframe PSNR %.2f dB, %zu keyframes, %.0f s\n",
              to_string(mode).c_str(), workers, e.result.report.ate_rmse_cm, e.result.report.path_length_m,
              e.result.report.psnr_mean, e.result.keyframes.size(), e.wall_s);
  std::fflush(stdout);
  return e;
}

Verdict end_to_end_criterion(const EndToEnd& full, const EndToEnd& rgbd, const EndToEnd& rgb) {
  const MetricsReport& r = full.result.report;
  const double limit_cm = kAteFractionOfPath * r.path_length_m * 100.0;
  const double a_full = r.ate_rmse_cm, a_rgbd = rgbd.result.report.ate_rmse_cm, a_rgb = rgb.result.report.ate_rmse_cm;
  const bool ate_ok = r.ate_available && a_full < limit_cm;
  const bool psnr_ok = r.psnr_defined && r.psnr_mean > kKeyframePsnrDb;
  const bool time_ok = full.wall_s < kEndToEndBudgetS;
  const bool order_ok = a_full <= a_rgbd && a_rgbd <= a_rgb;
  return {ate_ok && psnr_ok && time_ok && order_ok,
          fmt("ATE %.3f cm (limit %.3f), keyframe PSNR %.2f dB, %.0f s; ordering rgbd+imu %.3f <= rgbd %.3f <= rgb "
              "%.3f (sim3) %s",
              a_full, limit_cm, r.psnr_mean, full.wall_s, a_full, a_rgbd, a_rgb, order_ok ? "holds" : "violated")};
}

Verdict keyframing_criterion(const EndToEnd& full) {
  std::mt19937_64 rng(7);
  Intrinsics k;
  k.fx = k.fy = 120.0;
  k.cx = 80.0;
  k.cy = 60.0;
  k.width = 160;
  k.height = 120;
  const Pose p = test::random_pose(rng);
  const double self = covisibility(p, test::random_image(rng, 160, 120, 1, 0.5, 5.0), Image{}, p, k);

  // corners of the loop are passed at a quarter, half and three quarters of the run
  const int frames = full.result.report.frames;
  const double window = kCornerWindowEdges * (frames - 1) / 4.0;
  std::string corners;
  bool corners_ok = true;
  for (int c = 1; c <= 3; ++c) {
    const double at = (frames - 1) * c / 4.0;
    int nearest = -1;
    for (const auto& kf : full.result.keyframes)
      if (nearest < 0 || std::abs(kf.frame_id - at) < std::abs(nearest - at)) nearest = kf.frame_id;
    const bool ok = nearest >= 0 && std::abs(nearest - at) <= window;
    corners_ok = corners_ok && ok;
    corners += fmt("%s%.2f->%d", c > 1 ? ", " : "", at, nearest);
  }

  const NiqeModel model = load_niqe_model(default_niqe_model_path());
  const auto corpus = synthetic_corpus(60, 1);
  int ordered = 0;
  for (const Image& img : corpus)
    if (niqe_score(gaussian_blur(img, 2.0), model) > niqe_score(img, model)) ++ordered;

  return {self == 1.0 && corners_ok && ordered == static_cast<int>(corpus.size()),
          fmt("self covisibility %.3f; corner frame -> nearest keyframe (window %.2f): %s; NIQE blur ordering %d/%zu", self,
              window, corners.c_str(), ordered, corpus.size())};
}

Verdict determinism_criterion(const EndToEnd& a, const EndToEnd& b) {
  const uint64_t ha = fnv1a(a.trajectory_file), hb = fnv1a(b.trajectory_file);
  return {!a.trajectory_file.empty() && a.trajectory_file == b.trajectory_file,
          fmt("trajectory hash %016llx (1 worker) vs %016llx (4 workers)", static_cast<unsigned long long>(ha),
              static_cast<unsigned long long>(hb))};
}

// 9 -------------------------------------------------------------------------

Verdict loss_composition_criterion() {
  std::mt19937_64 rng(9);
  const int w = 24, h = 20;
  double worst_track = 0.0, worst_map = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    RenderOutput r;
    r.color = test::random_image(rng, w, h, 3);
    r.opacity = test::random_image(rng, w, h, 1, trial % 2 ? 0.0 : 0.98, 1.0);
    r.depth = test::random_image(rng, w, h, 1, 0.5, 4.0);
    const Image rgb = test::random_image(rng, w, h, 3);
    const DepthTarget target{test::random_image(rng, w, h, 1, 0.5, 4.0), false};

    // tracking: L1 over opacity > 0.99, Pearson over the same pixels
    double l1 = 0.0;
    int n = 0;
    std::vector<double> de, dr;
    for (int p = 0; p < w * h; ++p) {
      if (!(r.opacity.data[p] > 0.99)) continue;
      for (int c = 0; c < 3; ++c) l1 += std::abs(r.color.data[3 * p + c] - rgb.data[3 * p + c]);
      n += 3;
      de.push_back(target.values.data[p]);
      dr.push_back(r.depth.data[p]);
    }
    if (n > 0) {
      const double expected = l1 / n + 0.05 * (1.0 - test::pearson_oracle(de, dr));
      worst_track = std::max(worst_track, std::abs(tracking_loss(r, rgb, &target, LossWeights{}).total - expected));
    }

    // mapping: unmasked L1 and D-SSIM, Pearson over opacity > 0.5
    double l1_all = 0.0;
    de.clear();
    dr.clear();
    for (int p = 0; p < w * h; ++p) {
      for (int c = 0; c < 3; ++c) l1_all += std::abs(r.color.data[3 * p + c] - rgb.data[3 * p + c]);
      if (r.opacity.data[p] > 0.5) {
        de.push_back(target.values.data[p]);
        dr.push_back(r.depth.data[p]);
      }
    }
    const double expected = 0.8 * l1_all / (3.0 * w * h) + 0.2 * (1.0 - test::ssim_oracle(r.color, rgb)) / 2.0 +
                            0.05 * (1.0 - test::pearson_oracle(de, dr));
    worst_map = std::max(worst_map, std::abs(mapping_loss(r, rgb, &target, LossWeights{}).total - expected));
  }
  return {worst_track < kLossTol && worst_map < kLossTol,
          fmt("max deviation tracking %.2e, mapping %.2e", worst_track, worst_map)};
}

}  // namespace
}  // namespace mm3dgs

int main() {
  using namespace mm3dgs;
  int failed = 0;
  auto report = [&](int id, const char* name, const std::function<Verdict()>& check) {
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    if (!v.pass) ++failed;
    std::printf("criterion %d %-22s %s  %s\n", id, name, v.pass ? "PASS" : "FAIL", v.detail.c_str());
    std::fflush(stdout);
  };

  report(1, "gradient-audit", gradient_audit_criterion);
  report(2, "blending-oracle", blending_oracle_criterion);
  report(3, "imu-oracle", imu_oracle_criterion);
  report(4, "umeyama-oracle", umeyama_criterion);
  report(5, "pearson-properties", pearson_criterion);

  test::TempDir dir("acceptance");
  std::optional<EndToEnd> full, full4, rgbd, rgb;
  std::string run_error;
  try {
    full = run_square_loop(RunMode::RgbdImu, 1, (dir.path() / "rgbd_imu").string());
    rgbd = run_square_loop(RunMode::Rgbd, 1, (dir.path() / "rgbd").string());
    rgb = run_square_loop(RunMode::Rgb, 1, (dir.path() / "rgb").string());
    full4 = run_square_loop(RunMode::RgbdImu, 4, (dir.path() / "rgbd_imu_4").string());
  } catch (const std::exception& e) {
    run_error = e.what();
  }
  auto need = [&](auto f) {
    return [&, f]() -> Verdict {
      if (!run_error.empty()) return {false, "end-to-end run failed: " + run_error};
      return f();
    };
  };
  report(6, "synthetic-end-to-end", need([&] { return end_to_end_criterion(*full, *rgbd, *rgb); }));
  report(7, "keyframing", need([&] { return keyframing_criterion(*full); }));
  report(8, "determinism", need([&] { return determinism_criterion(*full, *full4); }));
  report(9, "loss-composition", loss_composition_criterion);

  std::printf("%d of 9 criteria passed\n", 9 - failed);
  return failed == 0 ? 0 : 1;
}
