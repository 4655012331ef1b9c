// Copyright Contributors to the mm3dgs Project
// SPDX-License-Identifier: Apache-2.0

#include "mm3dgs/gaussian_map.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "mm3dgs/error.hpp"

namespace mm3dgs {

bool Gaussian3D::is_valid(std::string* reason) const {
  auto fail = [&](const char* why) {
    if (reason) *reason = why;
    return false;
  };
  if (!mu.allFinite()) return fail("non-finite position");
  if (!rot.coeffs().allFinite() || rot.norm() < 1e-12) return fail("bad rotation");
  if (!log_scale.allFinite()) return fail("non-finite scale");
  const Vec3 s = scale();
  if ((s.array() <= 0.0).any()) return fail("non-positive scale");
  if (!std::isfinite(opacity_logit)) return fail("non-finite opacity");
  const double o = opacity();
  if (!(o > 0.0 && o < 1.0)) return fail("opacity outside (0,1)");
  if (!color.allFinite() || (color.array() < 0.0).any() || (color.array() > 1.0).any())
    return fail("color outside [0,1]");
  return true;
}

Gaussian3D Gaussian3D::isotropic(const Vec3& mu, double sigma, double opacity, const Vec3& color) {
  Gaussian3D g;
  g.mu = mu;
  g.log_scale = Vec3::Constant(std::log(sigma));
  g.opacity_logit = logit(opacity);
  g.color = color;
  return g;
}

Mat3 covariance(const Gaussian3D& g) {
  const Mat3 r = g.rot.normalized().toRotationMatrix();
  const Mat3 m = r * g.scale().asDiagonal();
  return m * m.transpose();
}

double evaluate_density(const Gaussian3D& g, const Vec3& x) {
  const Vec3 s = g.scale();
  if ((s.array() < kMinScale).any())
    throw Error(ErrorCode::DegenerateCovariance, "scale below 1e-8");
  // Sigma^-1 = R S^-2 R^T, so the quadratic form is |S^-1 R^T d|^2
  const Mat3 r = g.rot.normalized().toRotationMatrix();
  const Vec3 local = (r.transpose() * (x - g.mu)).cwiseQuotient(s);
  return std::exp(-0.5 * local.squaredNorm());
}

size_t GaussianMap::insert(std::span<const Gaussian3D> batch, int keyframe_id) {
  for (size_t i = 0; i < batch.size(); ++i) {
    std::string why;
    if (!batch[i].is_valid(&why))
      throw Error(ErrorCode::InvalidGaussian, "batch index " + std::to_string(i) + ": " + why);
  }
  gaussians_.insert(gaussians_.end(), batch.begin(), batch.end());
  creation_keyframe_.insert(creation_keyframe_.end(), batch.size(), keyframe_id);
  return batch.size();
}

uint64_t GaussianMap::checksum() const {
  uint64_t h = 1469598103934665603ull;
  auto mix = [&](double v) {
    uint64_t bits = std::bit_cast<uint64_t>(v);
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xff;
      h *= 1099511628211ull;
    }
  };
  for (const auto& g : gaussians_) {
    for (int i = 0; i < 3; ++i) mix(g.mu[i]);
    mix(g.rot.w());
    mix(g.rot.x());
    mix(g.rot.y());
    mix(g.rot.z());
    for (int i = 0; i < 3; ++i) mix(g.log_scale[i]);
    mix(g.opacity_logit);
    for (int i = 0; i < 3; ++i) mix(g.color[i]);
  }
  return h;
}

namespace {

constexpr char kMapMagic[8] = {'M', 'M', '3', 'D', 'G', 'S', 'M', 'P'};
constexpr uint32_t kMapVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes little-endian");

template <typename T>
void write_raw(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw Error(ErrorCode::Io, "truncated map checkpoint");
  return v;
}

}  // namespace

void save_map(const std::string& path, const GaussianMap& map) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::Io, "cannot open " + path);
  os.write(kMapMagic, 8);
  write_raw<uint32_t>(os, kMapVersion);
  write_raw<uint64_t>(os, map.size());
  for (const auto& g : map.gaussians()) {
    const float v[14] = {
        float(g.mu.x()),        float(g.mu.y()),        float(g.mu.z()),
        float(g.rot.w()),       float(g.rot.x()),       float(g.rot.y()),
        float(g.rot.z()),       float(g.log_scale.x()), float(g.log_scale.y()),
        float(g.log_scale.z()), float(g.opacity_logit), float(g.color.x()),
        float(g.color.y()),     float(g.color.z())};
    os.write(reinterpret_cast<const char*>(v), sizeof(v));
  }
  if (!os) throw Error(ErrorCode::Io, "write failed for " + path);
}

GaussianMap load_map(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::Io, "cannot open " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMapMagic, 8) != 0)
    throw Error(ErrorCode::Io, "bad map magic in " + path);
  const auto version = read_raw<uint32_t>(is);
  if (version != kMapVersion)
    throw Error(ErrorCode::Io, "unsupported map version " + std::to_string(version));
  const auto count = read_raw<uint64_t>(is);
  std::vector<Gaussian3D> batch;
  batch.reserve(count);
  for (uint64_t i = 0; i < count; ++i) {
    float v[14];
    is.read(reinterpret_cast<char*>(v), sizeof(v));
    if (!is) throw Error(ErrorCode::Io, "truncated map checkpoint");
    Gaussian3D g;
    g.mu = Vec3(v[0], v[1], v[2]);
    g.rot = Quat(v[3], v[4], v[5], v[6]);
    g.log_scale = Vec3(v[7], v[8], v[9]);
    g.opacity_logit = v[10];
    g.color = Vec3(v[11], v[12], v[13]);
    batch.push_back(g);
  }
  GaussianMap map;
  map.insert(batch, 0);
  return map;
}

}  // namespace mm3dgs
