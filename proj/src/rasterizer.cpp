// Copyright Contributors to the mm3dgs Project
// SPDX-License-Identifier: Apache-2.0

#include "mm3dgs/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mm3dgs/error.hpp"
#include "mm3dgs/parallel.hpp"

namespace mm3dgs {

namespace {

constexpr int kSubtile = 4;
constexpr int kSubtilesPerSide = kTileSize / kSubtile;

using Mat23 = Eigen::Matrix<double, 2, 3>;

/// View-space quantities shared by the forward projection and the backward
/// chain rule.
struct ViewGaussian {
  Vec3 mean;   // view-space mean
  Mat3 cov;    // view-space covariance
  Mat23 jac;   // pinhole Jacobian at mean
  Mat2 cov2d;  // regularized screen covariance
};

ViewGaussian to_view(const Gaussian3D& g, const Mat3& rt, const Vec3& t, const Intrinsics& k) {
  ViewGaussian vg;
  vg.mean = rt * (g.mu - t);
  const Mat3 r = g.rot.normalized().toRotationMatrix();
  const Mat3 m = r * g.scale().asDiagonal();
  const Mat3 rtm = rt * m;
  vg.cov = rtm * rtm.transpose();
  const double iz = 1.0 / vg.mean.z();
  vg.jac << k.fx * iz, 0.0, -k.fx * vg.mean.x() * iz * iz,
            0.0, k.fy * iz, -k.fy * vg.mean.y() * iz * iz;
  vg.cov2d = vg.jac * vg.cov * vg.jac.transpose();
  vg.cov2d(0, 0) += kCov2dRegularizer;
  vg.cov2d(1, 1) += kCov2dRegularizer;
  return vg;
}

bool make_splat(const Gaussian3D& g, uint32_t index, const Mat3& rt, const Vec3& t,
                const Intrinsics& k, detail::Splat& s) {
  const Vec3 mean = rt * (g.mu - t);
  if (!(mean.z() > kNearPlane)) return false;
  const double opacity = g.opacity();
  if (!(opacity > kMinAlpha)) return false;
  const ViewGaussian vg = to_view(g, rt, t, k);
  const Mat2& c2 = vg.cov2d;
  const double det = c2(0, 0) * c2(1, 1) - c2(0, 1) * c2(0, 1);
  if (!(det > 0.0)) return false;
  s.u = k.fx * mean.x() / mean.z() + k.cx;
  s.v = k.fy * mean.y() / mean.z() + k.cy;
  s.ca = c2(1, 1) / det;
  s.cb = -c2(0, 1) / det;
  s.cc = c2(0, 0) / det;
  s.opacity = opacity;
  s.depth = mean.z();
  s.r = g.color.x();
  s.g = g.color.y();
  s.b = g.color.z();
  s.q_max = 2.0 * std::log(opacity / kMinAlpha);
  s.source = index;
  // axis-aligned bounds of the ellipse q <= q_max, sampled at pixel centers
  const double hx = std::sqrt(s.q_max * c2(0, 0));
  const double hy = std::sqrt(s.q_max * c2(1, 1));
  s.x0 = std::max(0, static_cast<int>(std::ceil(s.u - hx - 0.5)));
  s.x1 = std::min(k.width - 1, static_cast<int>(std::floor(s.u + hx - 0.5)));
  s.y0 = std::max(0, static_cast<int>(std::ceil(s.v - hy - 0.5)));
  s.y1 = std::min(k.height - 1, static_cast<int>(std::floor(s.v + hy - 0.5)));
  return std::isfinite(s.u) && std::isfinite(s.v) && s.x0 <= s.x1 && s.y0 <= s.y1;
}

// Per-tile copy of the splat fields read in the pixel loop.
struct PackedSplat {
  double u, v, ca, cb2, cc, q_max, opacity, r, g, b, depth;
};

double quadratic_at(const detail::Splat& s, double x, double y) {
  const double dx = x - s.u, dy = y - s.v;
  return s.ca * dx * dx + 2.0 * s.cb * dx * dy + s.cc * dy * dy;
}

// Minimum of the splat's quadratic form over [x0, x1] x [y0, y1].
double min_quadratic_on_box(const detail::Splat& s, double x0, double y0, double x1, double y1) {
  if (s.u >= x0 && s.u <= x1 && s.v >= y0 && s.v <= y1) return 0.0;
  double best = std::numeric_limits<double>::infinity();
  // on a vertical edge x = const the minimum over y is at v - cb (x - u) / cc
  for (const double x : {x0, x1}) {
    const double y = std::clamp(s.v - s.cb * (x - s.u) / s.cc, y0, y1);
    best = std::min(best, quadratic_at(s, x, y));
  }
  for (const double y : {y0, y1}) {
    const double x = std::clamp(s.u - s.cb * (y - s.v) / s.ca, x0, x1);
    best = std::min(best, quadratic_at(s, x, y));
  }
  return best;
}

// Per-tile gradient partial, screen-space.
struct SplatGrad {
  double u = 0, v = 0, ca = 0, cb = 0, cc = 0, opacity = 0, depth = 0;
  double r = 0, g = 0, b = 0;

  SplatGrad& operator+=(const SplatGrad& o) {
    u += o.u; v += o.v; ca += o.ca; cb += o.cb; cc += o.cc;
    opacity += o.opacity; depth += o.depth; r += o.r; g += o.g; b += o.b;
    return *this;
  }
};

void check_intrinsics(const Intrinsics& k) {
  if (k.width <= 0 || k.height <= 0 || !(k.fx > 0.0) || !(k.fy > 0.0))
    throw Error(ErrorCode::InvalidArgument, "invalid intrinsics for rendering");
}

}  // namespace

std::vector<ProjectedGaussian> project_all(const GaussianMap& map, const Pose& cam,
                                           const Intrinsics& k) {
  check_intrinsics(k);
  const Mat3 rt = cam.rotation_matrix().transpose();
  std::vector<ProjectedGaussian> out;
  for (size_t i = 0; i < map.size(); ++i) {
    const Gaussian3D& g = map[i];
    const Vec3 mean = rt * (g.mu - cam.translation);
    if (!(mean.z() > kNearPlane)) continue;
    const ViewGaussian vg = to_view(g, rt, cam.translation, k);
    ProjectedGaussian p;
    p.mean2d = {k.fx * mean.x() / mean.z() + k.cx, k.fy * mean.y() / mean.z() + k.cy};
    p.cov2d = vg.cov2d;
    p.depth = mean.z();
    p.alpha_peak = std::min(g.opacity(), kMaxAlpha);
    p.color = g.color;
    p.source_index = static_cast<uint32_t>(i);
    out.push_back(p);
  }
  return out;
}

std::vector<std::pair<uint32_t, double>> RenderContext::contributors(int x, int y) const {
  const int tx = x / kTileSize, ty = y / kTileSize;
  const auto& tile = tiles[static_cast<size_t>(ty) * tiles_x + tx];
  const int x0 = tx * kTileSize, y0 = ty * kTileSize;
  const int tw = std::min(kTileSize, width - x0);
  const int local = (y - y0) * tw + (x - x0);
  std::vector<std::pair<uint32_t, double>> out;
  for (uint32_t e = tile.pixel_offsets[local]; e < tile.pixel_offsets[local + 1]; ++e) {
    const auto& c = tile.entries[e];
    out.emplace_back(splats[tile.list[c.list_pos]].source, splat_alpha(c.falloff));
  }
  return out;
}

RenderOutput render(const GaussianMap& map, const Pose& cam, const Intrinsics& k,
                    const RenderSettings& settings) {
  check_intrinsics(k);
  const int width = k.width, height = k.height;
  RenderOutput out;
  out.color = Image(width, height, 3);
  out.opacity = Image(width, height, 1);
  out.depth = Image(width, height, 1);
  RenderContext& ctx = out.context;
  ctx.width = width;
  ctx.height = height;
  ctx.map_size = map.size();
  ctx.tiles_x = (width + kTileSize - 1) / kTileSize;
  ctx.tiles_y = (height + kTileSize - 1) / kTileSize;
  const size_t tile_count = static_cast<size_t>(ctx.tiles_x) * ctx.tiles_y;
  ctx.tiles.resize(tile_count);
  ctx.final_transmittance.assign(static_cast<size_t>(width) * height, 1.0);

  const Mat3 rt = cam.rotation_matrix().transpose();
  ctx.splats.reserve(map.size());
  for (size_t i = 0; i < map.size(); ++i) {
    detail::Splat s;
    if (make_splat(map[i], static_cast<uint32_t>(i), rt, cam.translation, k, s))
      ctx.splats.push_back(s);
  }
  out.stats.visible = ctx.splats.size();
  out.stats.culled = map.size() - ctx.splats.size();

  // bin splats into tiles in map order, then depth-sort each tile
  std::vector<uint32_t> counts(tile_count, 0);
  for (const auto& s : ctx.splats)
    for (int ty = s.y0 / kTileSize; ty <= s.y1 / kTileSize; ++ty)
      for (int tx = s.x0 / kTileSize; tx <= s.x1 / kTileSize; ++tx)
        ++counts[static_cast<size_t>(ty) * ctx.tiles_x + tx];
  for (size_t t = 0; t < tile_count; ++t) ctx.tiles[t].list.reserve(counts[t]);
  for (uint32_t si = 0; si < ctx.splats.size(); ++si) {
    const auto& s = ctx.splats[si];
    for (int ty = s.y0 / kTileSize; ty <= s.y1 / kTileSize; ++ty)
      for (int tx = s.x0 / kTileSize; tx <= s.x1 / kTileSize; ++tx)
        ctx.tiles[static_cast<size_t>(ty) * ctx.tiles_x + tx].list.push_back(si);
  }

  const auto& splats = ctx.splats;
  parallel_for(tile_count, settings.workers, [&](size_t t) {
    detail::TileRecord& tile = ctx.tiles[t];
    std::sort(tile.list.begin(), tile.list.end(), [&](uint32_t a, uint32_t b) {
      const auto &sa = splats[a], &sb = splats[b];
      if (sa.depth != sb.depth) return sa.depth < sb.depth;
      return sa.source < sb.source;
    });
    const int tx = static_cast<int>(t % ctx.tiles_x), ty = static_cast<int>(t / ctx.tiles_x);
    const int x0 = tx * kTileSize, y0 = ty * kTileSize;
    const int tw = std::min(kTileSize, width - x0), th = std::min(kTileSize, height - y0);
    tile.pixel_offsets.assign(static_cast<size_t>(tw) * th + 1, 0);

    // depth-ordered copy of the fields the pixel loop reads
    std::vector<PackedSplat> packed(tile.list.size());
    for (size_t pos = 0; pos < packed.size(); ++pos) {
      const auto& s = splats[tile.list[pos]];
      packed[pos] = {s.u, s.v, s.ca, 2.0 * s.cb, s.cc, s.q_max, s.opacity, s.r, s.g, s.b, s.depth};
    }

    // per-subtile candidate lists keep depth order
    std::vector<uint32_t> sub[kSubtilesPerSide * kSubtilesPerSide];
    for (uint32_t pos = 0; pos < tile.list.size(); ++pos) {
      const auto& s = splats[tile.list[pos]];
      const int sx0 = std::max(s.x0 - x0, 0) / kSubtile;
      const int sx1 = std::min(s.x1 - x0, tw - 1) / kSubtile;
      const int sy0 = std::max(s.y0 - y0, 0) / kSubtile;
      const int sy1 = std::min(s.y1 - y0, th - 1) / kSubtile;
      for (int sy = sy0; sy <= sy1; ++sy)
        for (int sx = sx0; sx <= sx1; ++sx) {
          const double bx0 = x0 + sx * kSubtile + 0.5, by0 = y0 + sy * kSubtile + 0.5;
          if (min_quadratic_on_box(s, bx0, by0, bx0 + kSubtile - 1, by0 + kSubtile - 1) > s.q_max)
            continue;
          sub[sy * kSubtilesPerSide + sx].push_back(pos);
        }
    }

    // pixels are visited in row-major order, so each pixel's entries are
    // contiguous in the tile list
    auto& entries = tile.entries;
    entries.reserve(tile.list.size() * 32);
    for (int ly = 0; ly < th; ++ly) {
      for (int lx = 0; lx < tw; ++lx) {
        const int px = x0 + lx, py = y0 + ly;
        const double fx = px + 0.5, fy = py + 0.5;
        const auto& cand = sub[(ly / kSubtile) * kSubtilesPerSide + lx / kSubtile];
        tile.pixel_offsets[static_cast<size_t>(ly) * tw + lx] = static_cast<uint32_t>(entries.size());
        double trans = 1.0, acc = 0.0, cr = 0.0, cg = 0.0, cb = 0.0, dn = 0.0;
        for (uint32_t pos : cand) {
          const PackedSplat& s = packed[pos];
          const double dx = fx - s.u, dy = fy - s.v;
          const double q = s.ca * dx * dx + s.cb2 * dx * dy + s.cc * dy * dy;
          if (q > s.q_max) continue;
          const double falloff = s.opacity * std::exp(-0.5 * q);
          if (falloff <= kMinAlpha) continue;
          const double alpha = splat_alpha(falloff);
          const double w = alpha * trans;
          cr += s.r * w;
          cg += s.g * w;
          cb += s.b * w;
          acc += w;
          dn += s.depth * w;
          entries.push_back({pos, falloff});
          trans *= 1.0 - alpha;
          if (trans < kMinTransmittance) break;
        }
        const size_t p = static_cast<size_t>(py) * width + px;
        out.color.data[3 * p] = cr;
        out.color.data[3 * p + 1] = cg;
        out.color.data[3 * p + 2] = cb;
        out.opacity.data[p] = acc;
        out.depth.data[p] = acc < kMinDepthOpacity ? 0.0 : dn / acc;
        ctx.final_transmittance[p] = trans;
      }
    }
    tile.pixel_offsets.back() = static_cast<uint32_t>(entries.size());
  });
  for (const auto& tile : ctx.tiles) out.stats.contributions += tile.entries.size();
  return out;
}

void RenderGradients::resize(size_t n) {
  d_mu.assign(n, Vec3::Zero());
  d_rot.assign(n, Eigen::Vector4d::Zero());
  d_scale.assign(n, Vec3::Zero());
  d_opacity.assign(n, 0.0);
  d_color.assign(n, Vec3::Zero());
  d_pose.setZero();
}

bool RenderGradients::all_finite() const {
  for (size_t i = 0; i < d_mu.size(); ++i) {
    if (!d_mu[i].allFinite() || !d_rot[i].allFinite() || !d_scale[i].allFinite() ||
        !std::isfinite(d_opacity[i]) || !d_color[i].allFinite())
      return false;
  }
  return d_pose.allFinite();
}

namespace {

/// dL/dq for R(q/|q|) given dL/dR, q = (w, x, y, z) raw.
Eigen::Vector4d quat_backward(const Quat& q_raw, const Mat3& g) {
  const double n = q_raw.norm();
  const Quat q = q_raw.normalized();
  const double w = q.w(), x = q.x(), y = q.y(), z = q.z();
  Eigen::Vector4d dq;
  dq[0] = 2.0 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
  dq[1] = 2.0 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2.0 * x * g(1, 1) - w * g(1, 2) +
                 z * g(2, 0) + w * g(2, 1) - 2.0 * x * g(2, 2));
  dq[2] = 2.0 * (-2.0 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) -
                 w * g(2, 0) + z * g(2, 1) - 2.0 * y * g(2, 2));
  dq[3] = 2.0 * (-2.0 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2.0 * z * g(1, 1) +
                 y * g(1, 2) + x * g(2, 0) + y * g(2, 1));
  const Eigen::Vector4d qv(w, x, y, z);
  return (dq - qv * qv.dot(dq)) / n;
}

}  // namespace

RenderGradients render_backward(const RenderContext& ctx, const RenderUpstream& upstream,
                                const GaussianMap& map, const Pose& cam, const Intrinsics& k,
                                const RenderSettings& settings, const BackwardOptions& options) {
  if (ctx.map_size != map.size())
    throw Error(ErrorCode::ContextMismatch, "context built for " + std::to_string(ctx.map_size) +
                                                " Gaussians, map has " + std::to_string(map.size()));
  if (ctx.width != k.width || ctx.height != k.height)
    throw Error(ErrorCode::ContextMismatch, "context image size differs from intrinsics");
  auto check_up = [&](const Image& img, int channels, const char* name) {
    if (!img.empty() && (img.width != ctx.width || img.height != ctx.height || img.channels != channels))
      throw Error(ErrorCode::ShapeMismatch, std::string("upstream ") + name + " has wrong shape");
  };
  check_up(upstream.color, 3, "color");
  check_up(upstream.opacity, 1, "opacity");
  check_up(upstream.depth, 1, "depth");

  const int width = ctx.width, height = ctx.height;
  const size_t tile_count = ctx.tiles.size();
  const auto& splats = ctx.splats;
  std::vector<std::vector<SplatGrad>> partials(tile_count);

  parallel_for(tile_count, settings.workers, [&](size_t t) {
    const detail::TileRecord& tile = ctx.tiles[t];
    auto& part = partials[t];
    part.assign(tile.list.size(), SplatGrad{});
    const int tx = static_cast<int>(t % ctx.tiles_x), ty = static_cast<int>(t / ctx.tiles_x);
    const int x0 = tx * kTileSize, y0 = ty * kTileSize;
    const int tw = std::min(kTileSize, width - x0), th = std::min(kTileSize, height - y0);
    for (int ly = 0; ly < th; ++ly) {
      for (int lx = 0; lx < tw; ++lx) {
        const int local = ly * tw + lx;
        const uint32_t begin = tile.pixel_offsets[local], end = tile.pixel_offsets[local + 1];
        if (begin == end) continue;
        const int px = x0 + lx, py = y0 + ly;
        const size_t p = static_cast<size_t>(py) * width + px;
        const double gr = upstream.color.empty() ? 0.0 : upstream.color.data[3 * p];
        const double gg = upstream.color.empty() ? 0.0 : upstream.color.data[3 * p + 1];
        const double gb = upstream.color.empty() ? 0.0 : upstream.color.data[3 * p + 2];
        const double go = upstream.opacity.empty() ? 0.0 : upstream.opacity.data[p];
        const double gd = upstream.depth.empty() ? 0.0 : upstream.depth.data[p];
        if (gr == 0.0 && gg == 0.0 && gb == 0.0 && go == 0.0 && gd == 0.0) continue;

        // recover accumulated opacity and depth for the normalization term
        double acc = 0.0, dn = 0.0, trans = 1.0;
        for (uint32_t e = begin; e < end; ++e) {
          const auto& c = tile.entries[e];
          const double alpha = splat_alpha(c.falloff);
          const double w = alpha * trans;
          acc += w;
          dn += splats[tile.list[c.list_pos]].depth * w;
          trans *= 1.0 - alpha;
        }
        double g_dn = 0.0, g_acc = go;
        if (acc >= kMinDepthOpacity) {
          g_dn = gd / acc;
          g_acc -= g_dn * (dn / acc);
        }

        const double fx = px + 0.5, fy = py + 0.5;
        double suffix = 0.0;
        for (uint32_t e = end; e-- > begin;) {
          const auto& c = tile.entries[e];
          const auto& s = splats[tile.list[c.list_pos]];
          const double alpha = splat_alpha(c.falloff);
          const double one_minus = 1.0 - alpha;
          trans /= one_minus;  // transmittance in front of this splat
          const double w = alpha * trans;
          const double value = gr * s.r + gg * s.g + gb * s.b + g_acc + g_dn * s.depth;
          const double d_alpha = value * trans - suffix / one_minus;
          suffix += value * w;

          SplatGrad& sg = part[c.list_pos];
          sg.r += gr * w;
          sg.g += gg * w;
          sg.b += gb * w;
          sg.depth += g_dn * w;
          const double d_falloff = d_alpha * splat_alpha_slope(c.falloff);
          if (d_falloff == 0.0) continue;  // clamped: flat in every input
          const double dx = fx - s.u, dy = fy - s.v;
          sg.opacity += d_falloff * c.falloff / s.opacity;
          const double d_q = -0.5 * c.falloff * d_falloff;
          sg.ca += d_q * dx * dx;
          sg.cb += d_q * 2.0 * dx * dy;
          sg.cc += d_q * dy * dy;
          sg.u += d_q * -2.0 * (s.ca * dx + s.cb * dy);
          sg.v += d_q * -2.0 * (s.cb * dx + s.cc * dy);
        }
      }
    }
  });

  // fixed tile order keeps the sum independent of the worker count
  std::vector<SplatGrad> screen(splats.size());
  for (size_t t = 0; t < tile_count; ++t) {
    const auto& list = ctx.tiles[t].list;
    for (size_t pos = 0; pos < list.size(); ++pos) screen[list[pos]] += partials[t][pos];
  }

  RenderGradients grads;
  grads.resize(map.size());
  const Mat3 r_cam = cam.rotation_matrix();
  const Mat3 rt = r_cam.transpose();
  const Vec3& t_cam = cam.translation;
  std::vector<Vec6> pose_terms(splats.size(), Vec6::Zero());

  parallel_for(splats.size(), settings.workers, [&](size_t si) {
    const detail::Splat& s = splats[si];
    const SplatGrad& sg = screen[si];
    const Gaussian3D& g = map[s.source];
    const ViewGaussian vg = to_view(g, rt, t_cam, k);

    // conic -> cov2d
    Mat2 g_conic;
    g_conic << sg.ca, 0.5 * sg.cb, 0.5 * sg.cb, sg.cc;
    const Mat2 conic = vg.cov2d.inverse();
    const Mat2 g_cov2d = -conic * g_conic * conic;

    // cov2d = J C J^T + reg
    const Mat3 g_view_cov = vg.jac.transpose() * g_cov2d * vg.jac;
    const Mat23 g_jac = 2.0 * g_cov2d * vg.jac * vg.cov;

    const double x = vg.mean.x(), y = vg.mean.y(), z = vg.mean.z();
    const double iz = 1.0 / z, iz2 = iz * iz, iz3 = iz2 * iz;
    Vec3 g_mean = vg.jac.transpose() * Vec2(sg.u, sg.v);
    g_mean.z() += sg.depth;
    g_mean.x() += g_jac(0, 2) * (-k.fx * iz2);
    g_mean.y() += g_jac(1, 2) * (-k.fy * iz2);
    g_mean.z() += g_jac(0, 0) * (-k.fx * iz2) + g_jac(0, 2) * (2.0 * k.fx * x * iz3) +
                  g_jac(1, 1) * (-k.fy * iz2) + g_jac(1, 2) * (2.0 * k.fy * y * iz3);

    const Vec3 g_mu = r_cam * g_mean;
    const Mat3 g_cov = r_cam * g_view_cov * rt;  // world-frame dL/dSigma

    if (options.gaussians) {
      grads.d_mu[s.source] = g_mu;
      const Mat3 rg = g.rot.normalized().toRotationMatrix();
      const Vec3 sc = g.scale();
      const Mat3 m = rg * sc.asDiagonal();
      const Mat3 g_m = 2.0 * g_cov * m;
      const Mat3 rtg = rg.transpose() * g_m;
      grads.d_scale[s.source] = Vec3(rtg(0, 0) * sc.x(), rtg(1, 1) * sc.y(), rtg(2, 2) * sc.z());
      grads.d_rot[s.source] = quat_backward(g.rot, g_m * sc.asDiagonal());
      grads.d_opacity[s.source] = sg.opacity * s.opacity * (1.0 - s.opacity);
      grads.d_color[s.source] = Vec3(sg.r, sg.g, sg.b);
    }
    if (options.pose) {
      const Mat3 sigma = covariance(g);
      const Mat3 comm = g_cov * sigma - sigma * g_cov;
      const Vec3 axial(comm(2, 1), comm(0, 2), comm(1, 0));
      Vec6 term;
      term.head<3>() = g_mu.cross(g.mu - t_cam) - 2.0 * axial;
      term.tail<3>() = -g_mu;
      pose_terms[si] = term;
    }
  });
  for (const Vec6& term : pose_terms) grads.d_pose += term;
  return grads;
}

void dump_render_png(const RenderOutput& out, const std::string& prefix) {
  write_png8(prefix + "_color.png", out.color);
  write_png16(prefix + "_depth.png", out.depth, 5000.0);
  write_png8(prefix + "_opacity.png", out.opacity);
}

}  // namespace mm3dgs
