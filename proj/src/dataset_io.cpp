// Copyright Contributors to the mm3dgs Project
// SPDX-License-Identifier: Apache-2.0

#include "mm3dgs/dataset_io.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "mm3dgs/error.hpp"

namespace mm3dgs {

namespace fs = std::filesystem;

namespace {

struct IndexLine {
  int line = 0;
  std::vector<std::string> fields;
};

std::vector<IndexLine> read_index(const fs::path& path, char separator = ' ') {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::vector<IndexLine> rows;
  std::string text;
  int line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    const auto first = text.find_first_not_of(" \t");
    if (first == std::string::npos || text[first] == '#') continue;
    if (separator != ' ') std::replace(text.begin(), text.end(), separator, ' ');
    std::istringstream ss(text);
    IndexLine row{line, {}};
    for (std::string f; ss >> f;) row.fields.push_back(f);
    rows.push_back(std::move(row));
  }
  return rows;
}

[[noreturn]] void unparsable(const fs::path& path, int line, const std::string& why) {
  throw Error(ErrorCode::UnparsableLine, path.filename().string() + ":" + std::to_string(line) + ": " + why);
}

double parse_number(const std::string& s, const fs::path& path, int line) {
  size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    unparsable(path, line, "bad number '" + s + "'");
  }
  if (used != s.size() || !std::isfinite(v)) unparsable(path, line, "bad number '" + s + "'");
  return v;
}

std::vector<double> parse_numbers(const IndexLine& row, size_t count, const fs::path& path) {
  if (row.fields.size() < count)
    unparsable(path, row.line, "expected " + std::to_string(count) + " fields");
  std::vector<double> out(count);
  for (size_t i = 0; i < count; ++i) out[i] = parse_number(row.fields[i], path, row.line);
  return out;
}

struct Stamped {
  double t;
  std::string file;
};

std::vector<Stamped> read_image_list(const fs::path& path) {
  std::vector<Stamped> out;
  for (const auto& row : read_index(path)) {
    if (row.fields.size() < 2) unparsable(path, row.line, "expected 'timestamp filename'");
    out.push_back({parse_number(row.fields[0], path, row.line), row.fields[1]});
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.t < b.t; });
  return out;
}

std::vector<StampedPose> read_pose_list(const fs::path& path) {
  std::vector<StampedPose> out;
  for (const auto& row : read_index(path)) {
    const auto v = parse_numbers(row, 8, path);
    Quat q(v[7], v[4], v[5], v[6]);
    if (q.norm() < 1e-12) unparsable(path, row.line, "zero quaternion");
    out.push_back({v[0], Pose(q.normalized(), Vec3(v[1], v[2], v[3]))});
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.t < b.t; });
  return out;
}

}  // namespace

bool Sequence::has_depth() const {
  return !frames.empty() && std::all_of(frames.begin(), frames.end(), [](const FrameEntry& f) {
    return f.cached ? f.cached->has_depth() : !f.depth_path.empty();
  });
}

Frame Sequence::load_frame(size_t i) const {
  const FrameEntry& e = frames.at(i);
  if (e.cached) return *e.cached;
  Frame f;
  f.id = e.id;
  f.t = e.t;
  f.intrinsics = intrinsics;
  f.rgb = read_png(e.rgb_path);
  if (f.rgb.channels == 1) {
    Image rgb(f.rgb.width, f.rgb.height, 3);
    for (size_t p = 0; p < f.rgb.pixel_count(); ++p)
      for (int c = 0; c < 3; ++c) rgb.data[p * 3 + c] = f.rgb.data[p];
    f.rgb = std::move(rgb);
  }
  if (f.rgb.channels != 3) throw Error(ErrorCode::Io, e.rgb_path + ": expected RGB");
  if (f.rgb.width != intrinsics.width || f.rgb.height != intrinsics.height)
    throw Error(ErrorCode::ShapeMismatch, e.rgb_path + ": size differs from calibration");
  if (!e.depth_path.empty()) {
    f.depth = read_png(e.depth_path, depth_scale);
    if (f.depth.channels != 1 || f.depth.width != f.rgb.width || f.depth.height != f.rgb.height)
      throw Error(ErrorCode::ShapeMismatch, e.depth_path + ": depth does not match rgb");
  }
  return f;
}

Sequence load_tum_sequence(const std::string& directory, const TumOptions& options) {
  const fs::path dir(directory);
  const fs::path rgb_index = dir / "rgb.txt";
  if (!fs::exists(rgb_index)) throw Error(ErrorCode::MissingIndexFile, rgb_index.string() + " not found");

  Sequence seq;
  seq.depth_scale = options.depth_scale;
  const auto rgb = read_image_list(rgb_index);
  if (rgb.empty()) throw Error(ErrorCode::NoAssociations, "rgb.txt lists no frames");
  std::vector<Stamped> depth;
  const bool with_depth = fs::exists(dir / "depth.txt");
  if (with_depth) depth = read_image_list(dir / "depth.txt");

  for (const auto& r : rgb) {
    FrameEntry e;
    e.t = r.t;
    e.rgb_path = (dir / r.file).string();
    if (with_depth) {
      auto it = std::lower_bound(depth.begin(), depth.end(), r.t,
                                 [](const Stamped& s, double t) { return s.t < t; });
      const Stamped* best = nullptr;
      if (it != depth.end()) best = &*it;
      if (it != depth.begin() && (!best || r.t - std::prev(it)->t < best->t - r.t)) best = &*std::prev(it);
      if (!best || std::abs(best->t - r.t) > options.max_association_dt) continue;
      e.depth_path = (dir / best->file).string();
    }
    e.id = static_cast<int>(seq.frames.size());
    seq.frames.push_back(std::move(e));
  }
  if (seq.frames.empty())
    throw Error(ErrorCode::NoAssociations, "no rgb frame has a depth image within " +
                                               std::to_string(options.max_association_dt) + " s");

  const fs::path calib = dir / "calib.txt";
  if (fs::exists(calib)) {
    const auto rows = read_index(calib);
    if (rows.empty()) unparsable(calib, 1, "missing intrinsics");
    const auto v = parse_numbers(rows[0], 6, calib);
    seq.intrinsics = {v[0], v[1], v[2], v[3], static_cast<int>(v[4]), static_cast<int>(v[5])};
    if (rows.size() > 1) {
      const auto x = parse_numbers(rows[1], 7, calib);
      Quat q(x[6], x[3], x[4], x[5]);
      if (q.norm() < 1e-12) unparsable(calib, rows[1].line, "zero quaternion");
      seq.imu_to_camera = Pose(q.normalized(), Vec3(x[0], x[1], x[2]));
    }
  } else {
    const Image first = read_png(seq.frames.front().rgb_path);
    seq.intrinsics = {525.0, 525.0, 319.5, 239.5, first.width, first.height};
    seq.intrinsics.cx = (first.width - 1) / 2.0;
    seq.intrinsics.cy = (first.height - 1) / 2.0;
  }
  seq.intrinsics.validate();

  if (fs::exists(dir / "imu.txt")) {
    seq.imu = load_imu((dir / "imu.txt").string());
    if (options.compensate_gravity)
      for (auto& s : seq.imu) s.accel += options.gravity;
  }
  if (fs::exists(dir / "groundtruth.txt")) {
    const auto gt = read_pose_list(dir / "groundtruth.txt");
    for (const auto& f : seq.frames)
      if (auto p = interpolate_pose(gt, f.t)) seq.ground_truth.push_back({f.t, *p});
  }
  return seq;
}

std::vector<ImuSample> load_imu(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  std::vector<ImuSample> out;
  std::string text;
  int line = 0;
  bool header = false;
  while (std::getline(in, text)) {
    ++line;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    if (text.find_first_not_of(" \t") == std::string::npos || text[text.find_first_not_of(" \t")] == '#')
      continue;
    if (!header) {
      std::string compact;
      for (char c : text)
        if (c != ' ' && c != '\t') compact.push_back(c);
      if (compact != "t,ax,ay,az,gx,gy,gz") unparsable(path, line, "expected header t,ax,ay,az,gx,gy,gz");
      header = true;
      continue;
    }
    std::replace(text.begin(), text.end(), ',', ' ');
    std::istringstream ss(text);
    IndexLine row{line, {}};
    for (std::string f; ss >> f;) row.fields.push_back(f);
    if (row.fields.size() != 7) unparsable(path, line, "expected 7 columns");
    const auto v = parse_numbers(row, 7, path);
    out.push_back({v[0], Vec3(v[1], v[2], v[3]), Vec3(v[4], v[5], v[6])});
  }
  for (size_t i = 1; i < out.size(); ++i)
    if (!(out[i].t > out[i - 1].t))
      throw Error(ErrorCode::NonMonotoneTimestamps, path + ": sample " + std::to_string(i) +
                                                        " is not after its predecessor");
  return out;
}

void write_imu(const std::string& path, const std::vector<ImuSample>& samples) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  out << "t,ax,ay,az,gx,gy,gz\n";
  char buf[256];
  for (const auto& s : samples) {
    std::snprintf(buf, sizeof(buf), "%.9f,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", s.t, s.accel.x(),
                  s.accel.y(), s.accel.z(), s.gyro.x(), s.gyro.y(), s.gyro.z());
    out << buf;
  }
}

void write_trajectory(const std::string& path, const std::vector<StampedPose>& trajectory) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  char buf[256];
  for (const auto& s : trajectory) {
    const Quat& q = s.pose.rotation;
    const Vec3& t = s.pose.translation;
    std::snprintf(buf, sizeof(buf), "%.9f %.9f %.9f %.9f %.9f %.9f %.9f %.9f\n", s.t, t.x(), t.y(), t.z(),
                  q.x(), q.y(), q.z(), q.w());
    out << buf;
  }
}

std::vector<StampedPose> load_trajectory(const std::string& path) {
  if (!fs::exists(path)) throw Error(ErrorCode::Io, path + " not found");
  return read_pose_list(path);
}

std::optional<Pose> interpolate_pose(const std::vector<StampedPose>& trajectory, double t) {
  if (trajectory.empty() || t < trajectory.front().t || t > trajectory.back().t) return std::nullopt;
  auto it = std::lower_bound(trajectory.begin(), trajectory.end(), t,
                             [](const StampedPose& s, double v) { return s.t < v; });
  if (it->t == t || it == trajectory.begin()) return it->pose;
  const StampedPose& a = *std::prev(it);
  const StampedPose& b = *it;
  const double w = (t - a.t) / (b.t - a.t);
  Pose p(a.pose.rotation.slerp(w, b.pose.rotation).normalized(),
         (1.0 - w) * a.pose.translation + w * b.pose.translation);
  return p;
}

void write_tum_sequence(const std::string& directory, const Sequence& sequence) {
  const fs::path dir(directory);
  fs::create_directories(dir / "rgb");
  std::ofstream rgb_index(dir / "rgb.txt");
  std::ofstream depth_index;
  const bool with_depth = sequence.has_depth();
  if (with_depth) {
    fs::create_directories(dir / "depth");
    depth_index.open(dir / "depth.txt");
  }
  rgb_index << "# timestamp filename\n";
  if (with_depth) depth_index << "# timestamp filename\n";
  char stamp[64];
  for (size_t i = 0; i < sequence.size(); ++i) {
    const Frame f = sequence.load_frame(i);
    std::snprintf(stamp, sizeof(stamp), "%.9f", f.t);
    char name[64];
    std::snprintf(name, sizeof(name), "%06zu.png", i);
    write_png8((dir / "rgb" / name).string(), f.rgb);
    rgb_index << stamp << " rgb/" << name << "\n";
    if (with_depth) {
      write_png16((dir / "depth" / name).string(), f.depth, sequence.depth_scale);
      depth_index << stamp << " depth/" << name << "\n";
    }
  }
  {
    std::ofstream calib(dir / "calib.txt");
    const Intrinsics& k = sequence.intrinsics;
    char buf[512];
    std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g %.17g %d %d\n", k.fx, k.fy, k.cx, k.cy, k.width,
                  k.height);
    calib << buf;
    const Pose& e = sequence.imu_to_camera;
    std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g %.17g %.17g %.17g %.17g\n", e.translation.x(),
                  e.translation.y(), e.translation.z(), e.rotation.x(), e.rotation.y(), e.rotation.z(),
                  e.rotation.w());
    calib << buf;
  }
  if (!sequence.imu.empty()) write_imu((dir / "imu.txt").string(), sequence.imu);
  if (!sequence.ground_truth.empty())
    write_trajectory((dir / "groundtruth.txt").string(), sequence.ground_truth);
}

DepthEstimate depth_provider(const Frame& frame, DepthSource source, const DepthEmulation& emulation) {
  if (!frame.has_depth()) throw Error(ErrorCode::NoSensorDepth, "frame " + std::to_string(frame.id) + " has no depth");
  if (source == DepthSource::Sensor) return {frame.depth, true};

  std::mt19937_64 rng(emulation.seed * 0x9E3779B97F4A7C15ull + static_cast<uint64_t>(frame.id) + 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double a = 0.5 + 1.5 * unit(rng);
  const double b = 0.02 * unit(rng);
  const double phase_x = 2.0 * std::numbers::pi * unit(rng);
  const double phase_y = 2.0 * std::numbers::pi * unit(rng);

  const Image& d = frame.depth;
  DepthEstimate est{Image(d.width, d.height, 1), false};
  for (int y = 0; y < d.height; ++y)
    for (int x = 0; x < d.width; ++x) {
      const double z = d.at(x, y);
      if (!(z > 0.0)) continue;
      const double warp = emulation.warp_amplitude *
                          std::cos(std::numbers::pi * (x + 0.5) / d.width + phase_x) *
                          std::cos(std::numbers::pi * (y + 0.5) / d.height + phase_y);
      est.values.at(x, y) = a / z * (1.0 + warp) + b;
    }
  return est;
}

}  // namespace mm3dgs
