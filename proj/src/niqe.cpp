// Copyright Contributors to the mm3dgs Project
// SPDX-License-Identifier: Apache-2.0

#include "mm3dgs/niqe.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "mm3dgs/error.hpp"

namespace mm3dgs {

namespace {

struct GammaTable {
  std::vector<double> shape;
  std::vector<double> ratio;  // Gamma(2/g)^2 / (Gamma(1/g) Gamma(3/g))

  GammaTable() {
    for (int i = 0; i <= 9800; ++i) {
      const double g = 0.2 + 0.001 * i;
      shape.push_back(g);
      ratio.push_back(std::exp(2.0 * std::lgamma(2.0 / g) - std::lgamma(1.0 / g) -
                               std::lgamma(3.0 / g)));
    }
  }
};

const GammaTable& gamma_table() {
  static const GammaTable table;
  return table;
}

std::vector<double> gaussian_window7() {
  std::vector<double> w(7);
  const double sigma = 7.0 / 6.0;
  double sum = 0.0;
  for (int i = 0; i < 7; ++i) {
    const double d = i - 3;
    w[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    sum += w[i];
  }
  for (double& v : w) v /= sum;
  return w;
}

/// Same-size separable filter with replicated borders.
Image filter_same(const Image& img, const std::vector<double>& k) {
  const int r = static_cast<int>(k.size()) / 2;
  Image tmp(img.width, img.height, 1), out(img.width, img.height, 1);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i) acc += k[i + r] * img.at(std::clamp(x + i, 0, img.width - 1), y);
      tmp.at(x, y) = acc;
    }
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i)
        acc += k[i + r] * tmp.at(x, std::clamp(y + i, 0, img.height - 1));
      out.at(x, y) = acc;
    }
  return out;
}

Image downsample2(const Image& img) {
  Image out(img.width / 2, img.height / 2, 1);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x)
      out.at(x, y) = 0.25 * (img.at(2 * x, 2 * y) + img.at(2 * x + 1, 2 * y) +
                             img.at(2 * x, 2 * y + 1) + img.at(2 * x + 1, 2 * y + 1));
  return out;
}

/// 18 features of one MSCN patch: AGGD of the coefficients and of the four
/// neighbour products.
void patch_features(const Image& m, int x0, int y0, int size, double* out) {
  std::vector<double> vals;
  vals.reserve(static_cast<size_t>(size) * size);
  for (int y = y0; y < y0 + size; ++y)
    for (int x = x0; x < x0 + size; ++x) vals.push_back(m.at(x, y));
  const AggdFit base = fit_aggd(vals);
  out[0] = base.shape;
  out[1] = 0.5 * (base.left_scale + base.right_scale);
  constexpr int shifts[4][2] = {{1, 0}, {0, 1}, {1, 1}, {-1, 1}};
  for (int s = 0; s < 4; ++s) {
    const int sx = shifts[s][0], sy = shifts[s][1];
    vals.clear();
    for (int y = y0; y < y0 + size; ++y)
      for (int x = x0; x < x0 + size; ++x) {
        const int nx = x + sx, ny = y + sy;
        if (nx < x0 || nx >= x0 + size || ny >= y0 + size) continue;
        vals.push_back(m.at(x, y) * m.at(nx, ny));
      }
    const AggdFit f = fit_aggd(vals);
    out[2 + 4 * s] = f.shape;
    out[3 + 4 * s] = f.mean;
    out[4 + 4 * s] = f.left_scale;
    out[5 + 4 * s] = f.right_scale;
  }
}

Image gray255(const Image& image) {
  Image g = to_gray(image);
  for (double& v : g.data) v *= 255.0;
  return g;
}

}  // namespace

AggdFit fit_aggd(std::span<const double> values) {
  double left_sq = 0.0, right_sq = 0.0, abs_sum = 0.0, sq_sum = 0.0;
  size_t n_left = 0, n_right = 0;
  for (double v : values) {
    if (v < 0.0) {
      left_sq += v * v;
      ++n_left;
    } else if (v > 0.0) {
      right_sq += v * v;
      ++n_right;
    }
    abs_sum += std::abs(v);
    sq_sum += v * v;
  }
  AggdFit fit;
  if (values.empty() || sq_sum <= 0.0) return fit;
  const double n = static_cast<double>(values.size());
  const double left_std = n_left ? std::sqrt(left_sq / n_left) : 0.0;
  const double right_std = n_right ? std::sqrt(right_sq / n_right) : 0.0;
  const double gamma_hat = right_std > 0.0 ? left_std / right_std : 1.0;
  const double r_hat = (abs_sum / n) * (abs_sum / n) / (sq_sum / n);
  const double g2 = gamma_hat * gamma_hat;
  const double r_norm = r_hat * (g2 * gamma_hat + 1.0) * (gamma_hat + 1.0) / ((g2 + 1.0) * (g2 + 1.0));
  const auto& table = gamma_table();
  size_t best = 0;
  double best_err = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < table.ratio.size(); ++i) {
    const double e = (table.ratio[i] - r_norm) * (table.ratio[i] - r_norm);
    if (e < best_err) {
      best_err = e;
      best = i;
    }
  }
  fit.shape = table.shape[best];
  const double a = fit.shape;
  const double k = std::sqrt(std::exp(std::lgamma(1.0 / a) - std::lgamma(3.0 / a)));
  fit.left_scale = left_std * k;
  fit.right_scale = right_std * k;
  fit.mean = (fit.right_scale - fit.left_scale) * std::exp(std::lgamma(2.0 / a) - std::lgamma(1.0 / a));
  return fit;
}

Image mscn(const Image& gray, Image* local_sigma) {
  static const auto window = gaussian_window7();
  const Image mu = filter_same(gray, window);
  Image sq(gray.width, gray.height, 1);
  for (size_t i = 0; i < sq.data.size(); ++i) sq.data[i] = gray.data[i] * gray.data[i];
  const Image mu_sq = filter_same(sq, window);
  Image out(gray.width, gray.height, 1);
  Image sigma(gray.width, gray.height, 1);
  for (size_t i = 0; i < out.data.size(); ++i) {
    sigma.data[i] = std::sqrt(std::abs(mu_sq.data[i] - mu.data[i] * mu.data[i]));
    out.data[i] = (gray.data[i] - mu.data[i]) / (sigma.data[i] + 1.0);
  }
  if (local_sigma) *local_sigma = std::move(sigma);
  return out;
}

Eigen::MatrixXd niqe_patch_features(const Image& image, int patch_size) {
  if (patch_size < 4 || patch_size % 2 != 0)
    throw Error(ErrorCode::InvalidArgument, "NIQE patch size must be even and >= 4");
  const Image g = gray255(image);
  const int px = g.width / patch_size, py = g.height / patch_size;
  if (px < 2 || py < 2)
    throw Error(ErrorCode::ImageTooSmall, "NIQE needs two patches per dimension");

  Image sigma;
  const Image m1 = mscn(g, &sigma);
  const Image m2 = mscn(downsample2(g));
  const int half = patch_size / 2;

  std::vector<double> sharpness;
  for (int by = 0; by < py; ++by)
    for (int bx = 0; bx < px; ++bx) {
      double s = 0.0;
      for (int y = by * patch_size; y < (by + 1) * patch_size; ++y)
        for (int x = bx * patch_size; x < (bx + 1) * patch_size; ++x) s += sigma.at(x, y);
      sharpness.push_back(s / (patch_size * patch_size));
    }
  const double peak = *std::max_element(sharpness.begin(), sharpness.end());
  if (!(peak > 1e-3)) throw Error(ErrorCode::NoQualifiedPatches, "image has no local contrast");

  std::vector<int> kept;
  for (int i = 0; i < static_cast<int>(sharpness.size()); ++i)
    if (sharpness[i] > 0.75 * peak) kept.push_back(i);
  if (kept.empty()) throw Error(ErrorCode::NoQualifiedPatches, "no patch passes sharpness");

  Eigen::MatrixXd feats(static_cast<Eigen::Index>(kept.size()), kNiqeFeatures);
  for (size_t r = 0; r < kept.size(); ++r) {
    const int bx = kept[r] % px, by = kept[r] / px;
    double row[kNiqeFeatures];
    patch_features(m1, bx * patch_size, by * patch_size, patch_size, row);
    patch_features(m2, bx * half, by * half, half, row + 18);
    for (int c = 0; c < kNiqeFeatures; ++c) feats(static_cast<Eigen::Index>(r), c) = row[c];
  }
  return feats;
}

namespace {

NiqeMatrix sample_covariance(const Eigen::MatrixXd& feats, const NiqeVector& mean) {
  NiqeMatrix cov = NiqeMatrix::Zero();
  if (feats.rows() < 2) return cov;
  for (Eigen::Index r = 0; r < feats.rows(); ++r) {
    const NiqeVector d = feats.row(r).transpose() - mean;
    cov += d * d.transpose();
  }
  return cov / static_cast<double>(feats.rows() - 1);
}

}  // namespace

double niqe_score(const Image& image, const NiqeModel& model) {
  const Eigen::MatrixXd feats = niqe_patch_features(image, model.patch_size);
  const NiqeVector mu = feats.colwise().mean().transpose();
  const NiqeMatrix cov = sample_covariance(feats, mu);
  const NiqeMatrix pooled = 0.5 * (model.covariance + cov);
  const NiqeVector d = model.mean - mu;
  const NiqeMatrix pinv = pooled.completeOrthogonalDecomposition().pseudoInverse();
  return std::sqrt(std::max(0.0, d.dot(pinv * d)));
}

NiqeModel fit_niqe_model(std::span<const Image> corpus, int patch_size) {
  if (corpus.size() < 10)
    throw Error(ErrorCode::CorpusTooSmall, "NIQE model needs at least 10 images");
  std::vector<Eigen::MatrixXd> blocks;
  Eigen::Index rows = 0;
  for (const Image& img : corpus) {
    blocks.push_back(niqe_patch_features(img, patch_size));
    rows += blocks.back().rows();
  }
  Eigen::MatrixXd all(rows, kNiqeFeatures);
  Eigen::Index at = 0;
  for (const auto& b : blocks) {
    all.middleRows(at, b.rows()) = b;
    at += b.rows();
  }
  NiqeModel model;
  model.patch_size = patch_size;
  model.images = static_cast<int>(corpus.size());
  model.patches = static_cast<int>(rows);
  model.mean = all.colwise().mean().transpose();
  model.covariance = sample_covariance(all, model.mean) + 1e-6 * NiqeMatrix::Identity();
  return model;
}

namespace {
constexpr char kNiqeMagic[8] = {'M', 'M', '3', 'D', 'N', 'I', 'Q', 'E'};
constexpr uint32_t kNiqeVersion = 1;
}  // namespace

void save_niqe_model(const std::string& path, const NiqeModel& model) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::Io, "cannot open " + path);
  os.write(kNiqeMagic, 8);
  os.write(reinterpret_cast<const char*>(&kNiqeVersion), 4);
  for (int i = 0; i < kNiqeFeatures; ++i) {
    const double v = model.mean[i];
    os.write(reinterpret_cast<const char*>(&v), 8);
  }
  for (int r = 0; r < kNiqeFeatures; ++r)
    for (int c = 0; c < kNiqeFeatures; ++c) {
      const double v = model.covariance(r, c);
      os.write(reinterpret_cast<const char*>(&v), 8);
    }
  const int32_t patch = model.patch_size;
  os.write(reinterpret_cast<const char*>(&patch), 4);
  if (!os) throw Error(ErrorCode::Io, "write failed for " + path);
}

NiqeModel load_niqe_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::Io, "cannot open " + path);
  char magic[8];
  uint32_t version = 0;
  is.read(magic, 8);
  is.read(reinterpret_cast<char*>(&version), 4);
  if (!is || std::memcmp(magic, kNiqeMagic, 8) != 0 || version != kNiqeVersion)
    throw Error(ErrorCode::Io, "bad NIQE model header in " + path);
  NiqeModel model;
  for (int i = 0; i < kNiqeFeatures; ++i) is.read(reinterpret_cast<char*>(&model.mean[i]), 8);
  for (int r = 0; r < kNiqeFeatures; ++r)
    for (int c = 0; c < kNiqeFeatures; ++c)
      is.read(reinterpret_cast<char*>(&model.covariance(r, c)), 8);
  if (!is) throw Error(ErrorCode::Io, "truncated NIQE model " + path);
  int32_t patch = 96;
  if (is.read(reinterpret_cast<char*>(&patch), 4)) model.patch_size = patch;
  return model;
}

}  // namespace mm3dgs
