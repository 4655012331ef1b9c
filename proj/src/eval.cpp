// Copyright Contributors to the mm3dgs Project
// SPDX-License-Identifier: Apache-2.0

#include "mm3dgs/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include "json.hpp"

#include "mm3dgs/error.hpp"
#include "mm3dgs/losses.hpp"

namespace mm3dgs {

using nlohmann::json;

Similarity umeyama_align(const std::vector<Vec3>& est, const std::vector<Vec3>& gt, bool with_scale) {
  if (est.size() != gt.size()) throw Error(ErrorCode::ShapeMismatch, "point sets differ in length");
  const size_t n = est.size();
  if (n < 3) throw Error(ErrorCode::DegenerateSpread, "alignment needs at least 3 points");

  Vec3 me = Vec3::Zero(), mg = Vec3::Zero();
  for (size_t i = 0; i < n; ++i) {
    me += est[i];
    mg += gt[i];
  }
  me /= static_cast<double>(n);
  mg /= static_cast<double>(n);

  Mat3 cov = Mat3::Zero();
  Mat3 spread = Mat3::Zero();
  double var_e = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const Vec3 de = est[i] - me;
    cov += (gt[i] - mg) * de.transpose();
    spread += de * de.transpose();
    var_e += de.squaredNorm();
  }
  cov /= static_cast<double>(n);
  var_e /= static_cast<double>(n);

  Eigen::SelfAdjointEigenSolver<Mat3> eig(spread / static_cast<double>(n));
  const Vec3 ev = eig.eigenvalues();  // ascending
  if (var_e <= 1e-18 || ev[1] <= 1e-12 * std::max(ev[2], 1e-300))
    throw Error(ErrorCode::DegenerateSpread, "points are coincident or collinear");

  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Vec3 sign = Vec3::Ones();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) sign[2] = -1.0;

  Similarity s;
  s.rotation = svd.matrixU() * sign.asDiagonal() * svd.matrixV().transpose();
  s.scale = with_scale ? svd.singularValues().dot(sign) / var_e : 1.0;
  s.translation = mg - s.scale * s.rotation * me;
  return s;
}

AteResult ate_rmse(const std::vector<StampedPose>& est, const std::vector<StampedPose>& gt,
                   bool with_scale, double max_dt) {
  std::vector<Vec3> pe, pg;
  AteResult r;
  for (const auto& e : est) {
    auto it = std::lower_bound(gt.begin(), gt.end(), e.t,
                               [](const StampedPose& s, double t) { return s.t < t; });
    const StampedPose* best = nullptr;
    if (it != gt.end()) best = &*it;
    if (it != gt.begin() && (!best || e.t - std::prev(it)->t < best->t - e.t)) best = &*std::prev(it);
    if (!best || std::abs(best->t - e.t) > max_dt) continue;
    pe.push_back(e.pose.translation);
    pg.push_back(best->pose.translation);
    r.timestamps.push_back(e.t);
  }
  if (pe.empty()) throw Error(ErrorCode::NoAssociations, "no estimated pose matches ground truth in time");

  try {
    r.alignment = umeyama_align(pe, pg, with_scale);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::DegenerateSpread) throw;
    r.aligned = false;
  }
  double sum = 0.0;
  for (size_t i = 0; i < pe.size(); ++i) {
    const double err = (pg[i] - r.alignment.apply(pe[i])).norm() * 100.0;
    r.errors_cm.push_back(err);
    sum += err * err;
  }
  r.rmse_cm = std::sqrt(sum / static_cast<double>(pe.size()));
  return r;
}

PsnrSummary sequence_psnr(const std::vector<Image>& renders, const std::vector<Image>& targets) {
  if (renders.size() != targets.size()) throw Error(ErrorCode::ShapeMismatch, "render/target count differs");
  PsnrSummary s;
  double sum = 0.0;
  int finite = 0;
  for (size_t i = 0; i < renders.size(); ++i) {
    const double p = psnr(renders[i], targets[i]);
    s.per_frame.push_back(p);
    if (std::isinf(p)) {
      ++s.infinite;
    } else {
      sum += p;
      ++finite;
    }
  }
  s.mean_defined = finite > 0;
  s.mean = finite > 0 ? sum / finite : 0.0;
  return s;
}

double path_length(const std::vector<StampedPose>& trajectory) {
  double len = 0.0;
  for (size_t i = 1; i < trajectory.size(); ++i)
    len += (trajectory[i].pose.translation - trajectory[i - 1].pose.translation).norm();
  return len;
}

namespace {

json number_list(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) {
    if (std::isinf(x))
      a.push_back(x > 0 ? "inf" : "-inf");
    else
      a.push_back(x);
  }
  return a;
}

std::vector<double> read_numbers(const json& a) {
  std::vector<double> v;
  for (const auto& x : a) {
    if (x.is_string())
      v.push_back(x.get<std::string>() == "inf" ? std::numeric_limits<double>::infinity()
                                                : -std::numeric_limits<double>::infinity());
    else
      v.push_back(x.get<double>());
  }
  return v;
}

}  // namespace

std::string MetricsReport::to_json() const {
  json j;
  j["mode"] = mode;
  j["ate"] = {{"available", ate_available},
              {"rmse_cm", ate_rmse_cm},
              {"aligned", ate_aligned},
              {"with_scale", ate_with_scale},
              {"path_length_m", path_length_m},
              {"translation_errors_cm", number_list(translation_errors_cm)}};
  json rot = json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) rot.push_back(alignment.rotation(r, c));
  j["alignment"] = {{"rotation", rot},
                    {"translation", {alignment.translation.x(), alignment.translation.y(), alignment.translation.z()}},
                    {"scale", alignment.scale}};
  j["psnr"] = {{"mean_db", psnr_mean},
               {"defined", psnr_defined},
               {"infinite", psnr_infinite},
               {"keyframes_only", psnr_keyframes_only},
               {"frames", psnr_frames},
               {"per_frame_db", number_list(psnr_per_frame)}};
  j["run"] = {{"frames", frames},
              {"keyframes", keyframes},
              {"gaussians", gaussians},
              {"tracking_failures", tracking_failures},
              {"runtime_s", runtime_s},
              {"tracking_s", tracking_s},
              {"mapping_s", mapping_s}};
  return j.dump(2);
}

MetricsReport MetricsReport::from_json(const std::string& text) {
  MetricsReport r;
  try {
    const json j = json::parse(text);
    r.mode = j.at("mode").get<std::string>();
    const json& a = j.at("ate");
    r.ate_available = a.at("available").get<bool>();
    r.ate_rmse_cm = a.at("rmse_cm").get<double>();
    r.ate_aligned = a.at("aligned").get<bool>();
    r.ate_with_scale = a.at("with_scale").get<bool>();
    r.path_length_m = a.at("path_length_m").get<double>();
    r.translation_errors_cm = read_numbers(a.at("translation_errors_cm"));
    const json& al = j.at("alignment");
    for (int i = 0; i < 9; ++i) r.alignment.rotation(i / 3, i % 3) = al.at("rotation").at(i).get<double>();
    for (int i = 0; i < 3; ++i) r.alignment.translation[i] = al.at("translation").at(i).get<double>();
    r.alignment.scale = al.at("scale").get<double>();
    const json& p = j.at("psnr");
    r.psnr_mean = p.at("mean_db").get<double>();
    r.psnr_defined = p.at("defined").get<bool>();
    r.psnr_infinite = p.at("infinite").get<int>();
    r.psnr_keyframes_only = p.at("keyframes_only").get<bool>();
    r.psnr_frames = p.at("frames").get<std::vector<int>>();
    r.psnr_per_frame = read_numbers(p.at("per_frame_db"));
    const json& run = j.at("run");
    r.frames = run.at("frames").get<int>();
    r.keyframes = run.at("keyframes").get<std::vector<int>>();
    r.gaussians = run.at("gaussians").get<size_t>();
    r.tracking_failures = run.at("tracking_failures").get<int>();
    r.runtime_s = run.at("runtime_s").get<double>();
    r.tracking_s = run.at("tracking_s").get<double>();
    r.mapping_s = run.at("mapping_s").get<double>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Io, std::string("malformed report: ") + e.what());
  }
  return r;
}

void MetricsReport::print_table(std::ostream& os) const {
  const auto flags = os.flags();
  os << std::fixed << std::setprecision(3);
  os << "mode               " << (mode.empty() ? "-" : mode) << "\n";
  os << "frames             " << frames << "\n";
  os << "keyframes          " << keyframes.size() << "\n";
  os << "gaussians          " << gaussians << "\n";
  if (ate_available)
    os << "ATE RMSE [cm]      " << ate_rmse_cm << (ate_aligned ? "" : " (unaligned)")
       << (ate_with_scale ? " (sim3)" : " (se3)") << "\n";
  else
    os << "ATE RMSE [cm]      no ground truth\n";
  os << "path length [m]    " << path_length_m << "\n";
  if (psnr_defined)
    os << "PSNR [dB]          " << psnr_mean << (psnr_keyframes_only ? " (keyframes)" : " (all frames)");
  else
    os << "PSNR [dB]          undefined";
  if (psnr_infinite > 0) os << ", " << psnr_infinite << " exact";
  os << "\n";
  os << "tracking failures  " << tracking_failures << "\n";
  os << "runtime [s]        " << runtime_s << " (tracking " << tracking_s << ", mapping " << mapping_s << ")\n";
  os.flags(flags);
}

void write_report(const std::string& path, const MetricsReport& report) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  out << report.to_json() << "\n";
}

MetricsReport read_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return MetricsReport::from_json(ss.str());
}

}  // namespace mm3dgs
