// Copyright Contributors to the mm3dgs Project
// SPDX-License-Identifier: Apache-2.0

#include "mm3dgs/losses.hpp"

#include <array>
#include <cmath>
#include <limits>

#include "mm3dgs/error.hpp"

namespace mm3dgs {

void LossWeights::validate() const {
  if (!(lambda_c >= 0.0 && lambda_s >= 0.0 && lambda_d >= 0.0))
    throw Error(ErrorCode::InvalidArgument, "loss weights must be non-negative");
}

namespace {

void require_same_shape(const Image& a, const Image& b, const char* what) {
  if (!a.same_shape(b)) throw Error(ErrorCode::ShapeMismatch, what);
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

std::array<double, kSsimWindow> ssim_kernel() {
  std::array<double, kSsimWindow> k{};
  double sum = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double d = i - kSsimWindow / 2;
    k[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
    sum += k[i];
  }
  for (double& v : k) v /= sum;
  return k;
}

/// Valid-mode separable correlation of a single-channel plane.
std::vector<double> filter_valid(const std::vector<double>& src, int w, int h,
                                 const std::array<double, kSsimWindow>& k) {
  const int ow = w - kSsimWindow + 1, oh = h - kSsimWindow + 1;
  std::vector<double> tmp(static_cast<size_t>(ow) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < kSsimWindow; ++i) acc += k[i] * src[static_cast<size_t>(y) * w + x + i];
      tmp[static_cast<size_t>(y) * ow + x] = acc;
    }
  std::vector<double> out(static_cast<size_t>(ow) * oh);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < kSsimWindow; ++i) acc += k[i] * tmp[static_cast<size_t>(y + i) * ow + x];
      out[static_cast<size_t>(y) * ow + x] = acc;
    }
  return out;
}

/// Adjoint of filter_valid: scatters a valid-size map back to full size.
std::vector<double> filter_adjoint(const std::vector<double>& src, int w, int h,
                                   const std::array<double, kSsimWindow>& k) {
  const int ow = w - kSsimWindow + 1, oh = h - kSsimWindow + 1;
  std::vector<double> tmp(static_cast<size_t>(ow) * h, 0.0);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      const double v = src[static_cast<size_t>(y) * ow + x];
      for (int i = 0; i < kSsimWindow; ++i) tmp[static_cast<size_t>(y + i) * ow + x] += k[i] * v;
    }
  std::vector<double> out(static_cast<size_t>(w) * h, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      const double v = tmp[static_cast<size_t>(y) * ow + x];
      for (int i = 0; i < kSsimWindow; ++i) out[static_cast<size_t>(y) * w + x + i] += k[i] * v;
    }
  return out;
}

constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

/// Mean SSIM of one channel; optionally writes d(mean SSIM)/d(a).
double ssim_channel(const Image& a, const Image& b, int c, std::vector<double>* grad) {
  const int w = a.width, h = a.height;
  const size_t n = a.pixel_count();
  std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
  for (size_t i = 0; i < n; ++i) {
    x[i] = a.data[i * a.channels + c];
    y[i] = b.data[i * b.channels + c];
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  static const auto k = ssim_kernel();
  const auto mx = filter_valid(x, w, h, k), my = filter_valid(y, w, h, k);
  const auto sxx = filter_valid(xx, w, h, k), syy = filter_valid(yy, w, h, k),
             sxy = filter_valid(xy, w, h, k);
  const size_t m = mx.size();
  std::vector<double> ca, cb, cc;
  if (grad) {
    ca.resize(m);
    cb.resize(m);
    cc.resize(m);
  }
  double total = 0.0;
  for (size_t i = 0; i < m; ++i) {
    const double vx = sxx[i] - mx[i] * mx[i];
    const double vy = syy[i] - my[i] * my[i];
    const double cxy = sxy[i] - mx[i] * my[i];
    const double a1 = 2.0 * mx[i] * my[i] + kC1, a2 = 2.0 * cxy + kC2;
    const double b1 = mx[i] * mx[i] + my[i] * my[i] + kC1, b2 = vx + vy + kC2;
    const double s = (a1 * a2) / (b1 * b2);
    total += s;
    if (grad) {
      // dS/dx_k = w_k (ca + cb x_k + cc y_k)
      const double inv = 1.0 / (b1 * b2);
      cb[i] = -2.0 * s / b2 / static_cast<double>(m);
      cc[i] = 2.0 * a1 * inv / static_cast<double>(m);
      ca[i] = ((2.0 * my[i] * a2 - 2.0 * a1 * my[i]) * inv -
               s * (2.0 * mx[i] * b2 - 2.0 * b1 * mx[i]) * inv) /
              static_cast<double>(m);
    }
  }
  if (grad) {
    const auto ga = filter_adjoint(ca, w, h, k), gb = filter_adjoint(cb, w, h, k),
               gc = filter_adjoint(cc, w, h, k);
    grad->resize(n);
    for (size_t i = 0; i < n; ++i) (*grad)[i] = ga[i] + gb[i] * x[i] + gc[i] * y[i];
  }
  return total / static_cast<double>(m);
}

void require_ssim_size(const Image& a) {
  if (a.width < kSsimWindow || a.height < kSsimWindow)
    throw Error(ErrorCode::ImageTooSmall, "SSIM needs at least 11x11 pixels");
}

}  // namespace

ScalarGrad photometric_l1(const Image& rendered, const Image& target, const PixelMask* mask) {
  require_same_shape(rendered, target, "photometric_l1 shapes differ");
  if (mask && (mask->width != rendered.width || mask->height != rendered.height))
    throw Error(ErrorCode::ShapeMismatch, "mask shape differs from image");
  const size_t pixels = rendered.pixel_count();
  size_t active = 0;
  for (size_t p = 0; p < pixels; ++p)
    if (!mask || mask->data[p]) ++active;
  if (active == 0) throw Error(ErrorCode::EmptyMask, "no unmasked pixels");
  const double count = static_cast<double>(active * rendered.channels);
  ScalarGrad out;
  out.grad = Image(rendered.width, rendered.height, rendered.channels);
  double sum = 0.0;
  for (size_t p = 0; p < pixels; ++p) {
    if (mask && !mask->data[p]) continue;
    for (int c = 0; c < rendered.channels; ++c) {
      const size_t i = p * rendered.channels + c;
      const double d = rendered.data[i] - target.data[i];
      sum += std::abs(d);
      out.grad.data[i] = sign(d) / count;
    }
  }
  out.value = sum / count;
  return out;
}

double ssim(const Image& a, const Image& b) {
  require_same_shape(a, b, "ssim shapes differ");
  require_ssim_size(a);
  double total = 0.0;
  for (int c = 0; c < a.channels; ++c) total += ssim_channel(a, b, c, nullptr);
  return total / a.channels;
}

ScalarGrad dssim(const Image& rendered, const Image& target) {
  require_same_shape(rendered, target, "dssim shapes differ");
  require_ssim_size(rendered);
  ScalarGrad out;
  out.grad = Image(rendered.width, rendered.height, rendered.channels);
  double total = 0.0;
  std::vector<double> g;
  const double scale = -0.5 / rendered.channels;
  for (int c = 0; c < rendered.channels; ++c) {
    total += ssim_channel(rendered, target, c, &g);
    for (size_t i = 0; i < g.size(); ++i) out.grad.data[i * rendered.channels + c] = scale * g[i];
  }
  out.value = 0.5 * (1.0 - total / rendered.channels);
  return out;
}

ScalarGrad pearson_depth(const Image& d_est, const Image& d_ren, const PixelMask& mask) {
  require_same_shape(d_est, d_ren, "pearson_depth shapes differ");
  if (d_est.channels != 1) throw Error(ErrorCode::ShapeMismatch, "depth maps are single-channel");
  if (mask.width != d_est.width || mask.height != d_est.height)
    throw Error(ErrorCode::ShapeMismatch, "mask shape differs from depth");
  const size_t pixels = d_est.pixel_count();
  size_t n = 0;
  double mx = 0.0, my = 0.0;
  for (size_t p = 0; p < pixels; ++p) {
    if (!mask.data[p]) continue;
    ++n;
    mx += d_est.data[p];
    my += d_ren.data[p];
  }
  if (n < 2) throw Error(ErrorCode::DegenerateVariance, "fewer than two unmasked pixels");
  mx /= n;
  my /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (size_t p = 0; p < pixels; ++p) {
    if (!mask.data[p]) continue;
    const double dx = d_est.data[p] - mx, dy = d_ren.data[p] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx / n <= 1e-12 || syy / n <= 1e-12)
    throw Error(ErrorCode::DegenerateVariance, "constant depth over the mask");
  const double denom = std::sqrt(sxx * syy);
  const double r = sxy / denom;
  ScalarGrad out;
  out.value = 1.0 - r;
  out.grad = Image(d_ren.width, d_ren.height, 1);
  for (size_t p = 0; p < pixels; ++p) {
    if (!mask.data[p]) continue;
    const double dx = d_est.data[p] - mx, dy = d_ren.data[p] - my;
    out.grad.data[p] = -(dx / denom - r * dy / syy);
  }
  return out;
}

namespace {

/// Adds weight * Pearson term into `result`; silently drops it when the
/// masked depth is degenerate.
void add_depth_term(const RenderOutput& render, const DepthTarget& depth, const PixelMask& base,
                    double weight, LossResult& result) {
  const Image& est = depth.values;
  if (est.width != render.depth.width || est.height != render.depth.height || est.channels != 1)
    throw Error(ErrorCode::ShapeMismatch, "depth target shape differs from render");
  PixelMask mask = base;
  Image ren = render.depth;
  for (size_t p = 0; p < mask.data.size(); ++p) {
    const bool ok = mask.data[p] && est.data[p] > 0.0 && render.depth.data[p] > 0.0;
    mask.data[p] = ok;
    if (ok && depth.inverse) ren.data[p] = 1.0 / render.depth.data[p];
  }
  ScalarGrad term;
  try {
    term = pearson_depth(est, ren, mask);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::DegenerateVariance) throw;
    return;
  }
  result.depth = term.value;
  result.depth_used = true;
  result.total += weight * term.value;
  if (result.upstream.depth.empty()) result.upstream.depth = Image(ren.width, ren.height, 1);
  for (size_t p = 0; p < mask.data.size(); ++p) {
    if (!mask.data[p]) continue;
    double g = weight * term.grad.data[p];
    if (depth.inverse) g *= -ren.data[p] * ren.data[p];
    result.upstream.depth.data[p] += g;
  }
}

}  // namespace

LossResult tracking_loss(const RenderOutput& render, const Image& rgb, const DepthTarget* depth,
                         const LossWeights& w) {
  w.validate();
  require_same_shape(render.color, rgb, "tracking_loss: frame and render differ in shape");
  PixelMask mask(rgb.width, rgb.height, false);
  for (size_t p = 0; p < mask.data.size(); ++p)
    mask.data[p] = render.opacity.data[p] > kTrackingOpacity;
  LossResult result;
  result.mask_fraction = static_cast<double>(mask.count()) / static_cast<double>(mask.data.size());
  ScalarGrad photo = photometric_l1(render.color, rgb, &mask);
  result.photometric = photo.value;
  result.total = photo.value;
  result.upstream.color = std::move(photo.grad);
  if (depth && w.lambda_d > 0.0) add_depth_term(render, *depth, mask, w.lambda_d, result);
  return result;
}

LossResult mapping_loss(const RenderOutput& render, const Image& rgb, const DepthTarget* depth,
                        const LossWeights& w) {
  w.validate();
  require_same_shape(render.color, rgb, "mapping_loss: frame and render differ in shape");
  LossResult result;
  result.upstream.color = Image(rgb.width, rgb.height, 3);
  if (w.lambda_c > 0.0) {
    ScalarGrad photo = photometric_l1(render.color, rgb, nullptr);
    result.photometric = photo.value;
    result.total += w.lambda_c * photo.value;
    for (size_t i = 0; i < photo.grad.data.size(); ++i)
      result.upstream.color.data[i] += w.lambda_c * photo.grad.data[i];
  }
  if (w.lambda_s > 0.0) {
    ScalarGrad d = dssim(render.color, rgb);
    result.ssim_term = d.value;
    result.total += w.lambda_s * d.value;
    for (size_t i = 0; i < d.grad.data.size(); ++i)
      result.upstream.color.data[i] += w.lambda_s * d.grad.data[i];
  }
  if (depth && w.lambda_d > 0.0) {
    PixelMask support(rgb.width, rgb.height, false);
    for (size_t p = 0; p < support.data.size(); ++p)
      support.data[p] = render.opacity.data[p] > kDepthSupportOpacity;
    add_depth_term(render, *depth, support, w.lambda_d, result);
  }
  return result;
}

double psnr(const Image& rendered, const Image& target) {
  require_same_shape(rendered, target, "psnr shapes differ");
  double mse = 0.0;
  for (size_t i = 0; i < rendered.data.size(); ++i) {
    const double d = rendered.data[i] - target.data[i];
    mse += d * d;
  }
  mse /= static_cast<double>(rendered.data.size());
  if (mse < 1e-12) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

}  // namespace mm3dgs
