#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>
#include <optional>
#include <stdexcept>
#include <vector>

#include "streamskip/core.hpp"
#include "streamskip/engine.hpp"

namespace streamskip::flow {

struct FlowParams {
  int pyramid_levels = 3;
  double pyramid_scale = 0.5;
  int window_size = 15;
  int iterations = 3;
  int poly_n = 5;
  double poly_sigma = 1.1;
};

inline void validate(const FlowParams& p) {
  if (p.pyramid_levels < 1) throw std::invalid_argument("flow: pyramid_levels must be >= 1");
  if (!(p.pyramid_scale > 0.0 && p.pyramid_scale < 1.0))
    throw std::invalid_argument("flow: pyramid_scale must be in (0,1)");
  if (p.window_size < 1 || p.window_size % 2 == 0)
    throw std::invalid_argument("flow: window_size must be odd and positive");
  if (p.iterations < 1) throw std::invalid_argument("flow: iterations must be >= 1");
  if (p.poly_n < 3 || p.poly_n % 2 == 0)
    throw std::invalid_argument("flow: poly_n must be odd and >= 3");
  if (!(p.poly_sigma > 0.0)) throw std::invalid_argument("flow: poly_sigma must be > 0");
}

enum class FlowResolution { full, half };

namespace detail {

struct Plane {
  int w = 0;
  int h = 0;
  std::vector<float> v;
};

inline Plane plane_from_gray(const FrameImage& img) {
  Plane p{img.width, img.height, {}};
  p.v = img.data;
  return p;
}

inline Plane resize_plane(const Plane& in, int ow, int oh) {
  Plane out{ow, oh, std::vector<float>(static_cast<std::size_t>(ow) * oh)};
  const double sx = static_cast<double>(in.w) / ow;
  const double sy = static_cast<double>(in.h) / oh;
  for (int y = 0; y < oh; ++y) {
    float src_y = static_cast<float>((y + 0.5) * sy - 0.5);
    for (int x = 0; x < ow; ++x) {
      float src_x = static_cast<float>((x + 0.5) * sx - 0.5);
      out.v[static_cast<std::size_t>(y) * ow + x] =
          streamskip::detail::sample_bilinear_clamped(in.v.data(), in.w, in.h, 1,
                                                      src_x, src_y);
    }
  }
  return out;
}

/// Separable binomial smoothing ([1 4 6 4 1]/16) with replicated edges,
/// applied before pyramid decimation.
inline Plane smooth5(const Plane& in) {
  static constexpr float k[5] = {1.0f / 16, 4.0f / 16, 6.0f / 16, 4.0f / 16, 1.0f / 16};
  Plane tmp{in.w, in.h, std::vector<float>(in.v.size())};
  for (int y = 0; y < in.h; ++y) {
    const float* row = in.v.data() + static_cast<std::size_t>(y) * in.w;
    float* dst = tmp.v.data() + static_cast<std::size_t>(y) * in.w;
    for (int x = 0; x < in.w; ++x) {
      float s = 0.0f;
      for (int o = -2; o <= 2; ++o)
        s += k[o + 2] * row[std::clamp(x + o, 0, in.w - 1)];
      dst[x] = s;
    }
  }
  Plane out{in.w, in.h, std::vector<float>(in.v.size())};
  for (int y = 0; y < in.h; ++y) {
    float* dst = out.v.data() + static_cast<std::size_t>(y) * in.w;
    for (int x = 0; x < in.w; ++x) {
      float s = 0.0f;
      for (int o = -2; o <= 2; ++o)
        s += k[o + 2] *
             tmp.v[static_cast<std::size_t>(std::clamp(y + o, 0, in.h - 1)) * in.w + x];
      dst[x] = s;
    }
  }
  return out;
}

/// Per-pixel quadratic fit f(p+u) ~ c + b.u + u'Au over a Gaussian-weighted
/// (2n+1)^2 neighborhood, computed with separable correlations. Stored per
/// pixel as (bx, by, axx, ayy, axy) where the xy term of the quadratic is
/// axy*ux*uy (so A12 = axy/2).
struct PolyExpansion {
  int w = 0;
  int h = 0;
  std::vector<float> coef;  // 5 interleaved floats per pixel
};

inline PolyExpansion poly_expansion(const Plane& img, int n, double sigma) {
  const int taps = 2 * n + 1;
  std::vector<double> g(taps), xg(taps), xxg(taps);
  double gsum = 0.0;
  for (int i = -n; i <= n; ++i) gsum += std::exp(-0.5 * i * i / (sigma * sigma));
  double s2 = 0.0, s4 = 0.0;
  for (int i = -n; i <= n; ++i) {
    double w = std::exp(-0.5 * i * i / (sigma * sigma)) / gsum;
    g[i + n] = w;
    xg[i + n] = i * w;
    xxg[i + n] = static_cast<double>(i) * i * w;
    s2 += w * i * i;
    s4 += w * static_cast<double>(i) * i * i * i;
  }
  // Moment inverses of the weighted LS normal matrix; the constant term is
  // eliminated against the quadratic terms.
  const double inv_s2 = 1.0 / s2;
  const double inv_d = 1.0 / (s4 - s2 * s2);
  const double inv_s22 = 1.0 / (s2 * s2);

  const int w = img.w, h = img.h;
  // Vertical pass: y-moments 0..2 of the image.
  std::vector<float> t0(static_cast<std::size_t>(w) * h);
  std::vector<float> t1(t0.size()), t2(t0.size());
  for (int y = 0; y < h; ++y) {
    float* r0 = t0.data() + static_cast<std::size_t>(y) * w;
    float* r1 = t1.data() + static_cast<std::size_t>(y) * w;
    float* r2 = t2.data() + static_cast<std::size_t>(y) * w;
    for (int x = 0; x < w; ++x) {
      double a0 = 0.0, a1 = 0.0, a2 = 0.0;
      for (int j = -n; j <= n; ++j) {
        const float s =
            img.v[static_cast<std::size_t>(std::clamp(y + j, 0, h - 1)) * w + x];
        a0 += g[j + n] * s;
        a1 += xg[j + n] * s;
        a2 += xxg[j + n] * s;
      }
      r0[x] = static_cast<float>(a0);
      r1[x] = static_cast<float>(a1);
      r2[x] = static_cast<float>(a2);
    }
  }

  PolyExpansion out;
  out.w = w;
  out.h = h;
  out.coef.resize(static_cast<std::size_t>(w) * h * 5);
  for (int y = 0; y < h; ++y) {
    const float* r0 = t0.data() + static_cast<std::size_t>(y) * w;
    const float* r1 = t1.data() + static_cast<std::size_t>(y) * w;
    const float* r2 = t2.data() + static_cast<std::size_t>(y) * w;
    float* dst = out.coef.data() + static_cast<std::size_t>(y) * w * 5;
    for (int x = 0; x < w; ++x) {
      double v0 = 0.0, vx = 0.0, vxx = 0.0, vy = 0.0, vxy = 0.0, vyy = 0.0;
      for (int i = -n; i <= n; ++i) {
        const int xi = std::clamp(x + i, 0, w - 1);
        const double m0 = r0[xi];
        v0 += g[i + n] * m0;
        vx += xg[i + n] * m0;
        vxx += xxg[i + n] * m0;
        const double m1 = r1[xi];
        vy += g[i + n] * m1;
        vxy += xg[i + n] * m1;
        vyy += g[i + n] * r2[xi];
      }
      float* c = dst + static_cast<std::size_t>(x) * 5;
      c[0] = static_cast<float>(vx * inv_s2);                // bx
      c[1] = static_cast<float>(vy * inv_s2);                // by
      c[2] = static_cast<float>((vxx - s2 * v0) * inv_d);    // axx
      c[3] = static_cast<float>((vyy - s2 * v0) * inv_d);    // ayy
      c[4] = static_cast<float>(vxy * inv_s22);              // axy
    }
  }
  return out;
}

inline void sample_coef(const PolyExpansion& p, float x, float y, float out[5]) {
  for (int c = 0; c < 5; ++c)
    out[c] = streamskip::detail::sample_bilinear_clamped(p.coef.data() + c, p.w, p.h,
                                                         5, x, y);
}

/// Box blur with replicated edges, O(1) per pixel via sliding sums.
inline void box_blur(const std::vector<float>& src, std::vector<float>& dst, int w,
                     int h, int radius) {
  const int taps = 2 * radius + 1;
  std::vector<float> tmp(src.size());
  for (int y = 0; y < h; ++y) {
    const float* row = src.data() + static_cast<std::size_t>(y) * w;
    float* out = tmp.data() + static_cast<std::size_t>(y) * w;
    double sum = 0.0;
    for (int o = -radius; o <= radius; ++o) sum += row[std::clamp(o, 0, w - 1)];
    out[0] = static_cast<float>(sum);
    for (int x = 1; x < w; ++x) {
      sum += row[std::clamp(x + radius, 0, w - 1)] -
             row[std::clamp(x - 1 - radius, 0, w - 1)];
      out[x] = static_cast<float>(sum);
    }
  }
  std::vector<double> colsum(w, 0.0);
  const double norm = 1.0 / (static_cast<double>(taps) * taps);
  for (int x = 0; x < w; ++x) {
    double s = 0.0;
    for (int o = -radius; o <= radius; ++o)
      s += tmp[static_cast<std::size_t>(std::clamp(o, 0, h - 1)) * w + x];
    colsum[x] = s;
  }
  for (int y = 0; y < h; ++y) {
    if (y > 0) {
      const float* add =
          tmp.data() + static_cast<std::size_t>(std::clamp(y + radius, 0, h - 1)) * w;
      const float* sub =
          tmp.data() +
          static_cast<std::size_t>(std::clamp(y - 1 - radius, 0, h - 1)) * w;
      for (int x = 0; x < w; ++x) colsum[x] += static_cast<double>(add[x]) - sub[x];
    }
    float* out = dst.data() + static_cast<std::size_t>(y) * w;
    for (int x = 0; x < w; ++x) out[x] = static_cast<float>(colsum[x] * norm);
  }
}

/// One displacement refinement: average the two expansions (the moving one
/// sampled at the current displacement), build per-pixel normal equations,
/// average them over the correlation window, and solve 2x2 per pixel.
inline void flow_iteration(const PolyExpansion& prev, const PolyExpansion& next,
                           int window_size, std::vector<float>& dx,
                           std::vector<float>& dy) {
  const int w = prev.w, h = prev.h;
  const std::size_t npx = static_cast<std::size_t>(w) * h;
  static thread_local std::vector<float> m11, m12, m22, h1v, h2v, b11, b12, b22, bh1, bh2;
  for (auto* v : {&m11, &m12, &m22, &h1v, &h2v, &b11, &b12, &b22, &bh1, &bh2})
    v->resize(npx);

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      const float* cp = prev.coef.data() + i * 5;
      float cn[5];
      sample_coef(next, static_cast<float>(x) + dx[i], static_cast<float>(y) + dy[i], cn);
      const float a11 = 0.5f * (cp[2] + cn[2]);
      const float a22 = 0.5f * (cp[3] + cn[3]);
      const float a12 = 0.25f * (cp[4] + cn[4]);
      const float db1 = -0.5f * (cn[0] - cp[0]) + a11 * dx[i] + a12 * dy[i];
      const float db2 = -0.5f * (cn[1] - cp[1]) + a12 * dx[i] + a22 * dy[i];
      m11[i] = a11 * a11 + a12 * a12;
      m12[i] = a12 * (a11 + a22);
      m22[i] = a22 * a22 + a12 * a12;
      h1v[i] = a11 * db1 + a12 * db2;
      h2v[i] = a12 * db1 + a22 * db2;
    }
  }

  const int radius = window_size / 2;
  box_blur(m11, b11, w, h, radius);
  box_blur(m12, b12, w, h, radius);
  box_blur(m22, b22, w, h, radius);
  box_blur(h1v, bh1, w, h, radius);
  box_blur(h2v, bh2, w, h, radius);

  for (std::size_t i = 0; i < npx; ++i) {
    const double g11 = b11[i], g12 = b12[i], g22 = b22[i];
    const double det = g11 * g22 - g12 * g12;
    if (det > 1e-12) {
      dx[i] = static_cast<float>((g22 * bh1[i] - g12 * bh2[i]) / det);
      dy[i] = static_cast<float>((g11 * bh2[i] - g12 * bh1[i]) / det);
    }
    // Degenerate neighborhoods keep their incoming estimate.
  }
}

}  // namespace detail

/// Dense displacement from prev toward next (backward-warp convention:
/// next(x) ~ prev(x - flow(x))), estimated by quadratic polynomial expansion
/// refined coarse-to-fine over an image pyramid.
inline FlowField farneback_flow(const FrameImage& prev, const FrameImage& next,
                                const FlowParams& params = {}) {
  validate(params);
  if (prev.channels != 1 || next.channels != 1)
    throw std::invalid_argument("farneback_flow: inputs must be single-channel");
  if (prev.width != next.width || prev.height != next.height)
    throw std::invalid_argument("farneback_flow: frame dimension mismatch");
  if (prev.width < params.window_size || prev.height < params.window_size)
    throw std::invalid_argument("farneback_flow: image smaller than window_size");

  // Pyramid, finest first. Levels below the polynomial window are skipped.
  std::vector<detail::Plane> pyr_prev{detail::plane_from_gray(prev)};
  std::vector<detail::Plane> pyr_next{detail::plane_from_gray(next)};
  const int min_dim = 2 * params.poly_n + 1;
  for (int l = 1; l < params.pyramid_levels; ++l) {
    const detail::Plane& p = pyr_prev.back();
    int nw = static_cast<int>(std::lround(p.w * params.pyramid_scale));
    int nh = static_cast<int>(std::lround(p.h * params.pyramid_scale));
    if (nw < min_dim || nh < min_dim) break;
    pyr_prev.push_back(detail::resize_plane(detail::smooth5(pyr_prev.back()), nw, nh));
    pyr_next.push_back(detail::resize_plane(detail::smooth5(pyr_next.back()), nw, nh));
  }

  std::vector<float> dx, dy;
  for (int l = static_cast<int>(pyr_prev.size()) - 1; l >= 0; --l) {
    const detail::Plane& lp = pyr_prev[l];
    const detail::Plane& ln = pyr_next[l];
    const std::size_t npx = static_cast<std::size_t>(lp.w) * lp.h;
    if (dx.empty()) {
      dx.assign(npx, 0.0f);
      dy.assign(npx, 0.0f);
    } else {
      // Upsample the coarser estimate and rescale displacements.
      const detail::Plane& coarser = pyr_prev[l + 1];
      detail::Plane pdx{coarser.w, coarser.h, std::move(dx)};
      detail::Plane pdy{coarser.w, coarser.h, std::move(dy)};
      const float rx = static_cast<float>(lp.w) / coarser.w;
      const float ry = static_cast<float>(lp.h) / coarser.h;
      detail::Plane udx = detail::resize_plane(pdx, lp.w, lp.h);
      detail::Plane udy = detail::resize_plane(pdy, lp.w, lp.h);
      for (auto& v : udx.v) v *= rx;
      for (auto& v : udy.v) v *= ry;
      dx = std::move(udx.v);
      dy = std::move(udy.v);
    }
    detail::PolyExpansion ep = detail::poly_expansion(lp, params.poly_n, params.poly_sigma);
    detail::PolyExpansion en = detail::poly_expansion(ln, params.poly_n, params.poly_sigma);
    for (int it = 0; it < params.iterations; ++it)
      detail::flow_iteration(ep, en, params.window_size, dx, dy);
  }

  FlowField field;
  field.width = prev.width;
  field.height = prev.height;
  field.dx = std::move(dx);
  field.dy = std::move(dy);
  return field;
}

/// Bilinear flow upsampling with displacement values scaled by the size
/// ratio (a half-resolution displacement of 1 px is 2 px at full size).
inline FlowField upscale_flow(const FlowField& flow, int out_w, int out_h) {
  if (out_w < 1 || out_h < 1)
    throw std::invalid_argument("upscale_flow: bad target size");
  detail::Plane px{flow.width, flow.height, flow.dx};
  detail::Plane py{flow.width, flow.height, flow.dy};
  detail::Plane ux = detail::resize_plane(px, out_w, out_h);
  detail::Plane uy = detail::resize_plane(py, out_w, out_h);
  const float rx = static_cast<float>(out_w) / flow.width;
  const float ry = static_cast<float>(out_h) / flow.height;
  for (auto& v : ux.v) v *= rx;
  for (auto& v : uy.v) v *= ry;
  FlowField out;
  out.width = out_w;
  out.height = out_h;
  out.dx = std::move(ux.v);
  out.dy = std::move(uy.v);
  return out;
}

/// Flow on 2x-downscaled inputs, upscaled back with displacements doubled.
inline FlowField half_res_flow(const FrameImage& prev, const FrameImage& next,
                               const FlowParams& params = {}) {
  if (prev.width != next.width || prev.height != next.height)
    throw std::invalid_argument("half_res_flow: frame dimension mismatch");
  if (prev.width % 2 != 0 || prev.height % 2 != 0)
    throw std::invalid_argument("half_res_flow: dimensions must be even");
  const FrameImage gp = prev.channels == 3 ? to_grayscale(prev) : prev;
  const FrameImage gn = next.channels == 3 ? to_grayscale(next) : next;
  FrameImage hp = resize_bilinear(gp, prev.width / 2, prev.height / 2);
  FrameImage hn = resize_bilinear(gn, next.width / 2, next.height / 2);
  FlowField half = farneback_flow(hp, hn, params);
  return upscale_flow(half, prev.width, prev.height);
}

/// Backward warp: out(x,y) samples the frame at (x - dx, y - dy) with edge
/// clamping, so the result has no holes and stays in the input value range.
inline FrameImage warp_bilinear(const FrameImage& frame, const FlowField& flow) {
  if (frame.width != flow.width || frame.height != flow.height)
    throw std::invalid_argument("warp_bilinear: frame/flow dimension mismatch");
  FrameImage out = make_frame(frame.width, frame.height, frame.channels);
  out.frame_id = frame.frame_id;
  out.capture_timestamp_ns = frame.capture_timestamp_ns;
  for (int y = 0; y < frame.height; ++y) {
    for (int x = 0; x < frame.width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * frame.width + x;
      const float sx = static_cast<float>(x) - flow.dx[i];
      const float sy = static_cast<float>(y) - flow.dy[i];
      for (int c = 0; c < frame.channels; ++c)
        out.at(x, y, c) = streamskip::detail::sample_bilinear_clamped(
            frame.data.data() + c, frame.width, frame.height, frame.channels, sx, sy);
    }
  }
  return out;
}

/// Average cost of a schedule that runs the full chain once every n frames
/// and warps the other n-1: (unet + (n-1)*warp) / n.
inline double theoretical_ms_per_frame(double unet_ms, double warp_ms, int n) {
  if (n < 1) throw std::invalid_argument("theoretical_ms_per_frame: n must be >= 1");
  if (unet_ms < 0.0 || warp_ms < 0.0)
    throw std::invalid_argument("theoretical_ms_per_frame: latencies must be >= 0");
  return (unet_ms + (n - 1) * warp_ms) / static_cast<double>(n);
}

struct SkipSchedule {
  int n = 1;
  FlowResolution flow_resolution = FlowResolution::half;
};

enum class FrameLabel { unet, warp };

/// Produces the in-between frames of a skip schedule.
class WarpSynthesizer {
 public:
  virtual ~WarpSynthesizer() = default;
  virtual FrameImage synthesize(const FrameImage& prev_out, const FrameImage& prev_in,
                                const FrameImage& cur_in) = 0;
  virtual std::optional<double> declared_ms() const { return std::nullopt; }
};

class FlowWarpSynthesizer : public WarpSynthesizer {
 public:
  FlowWarpSynthesizer(FlowParams params, FlowResolution resolution)
      : params_(params), resolution_(resolution) {}

  FrameImage synthesize(const FrameImage& prev_out, const FrameImage& prev_in,
                        const FrameImage& cur_in) override {
    FlowField f;
    if (resolution_ == FlowResolution::half) {
      f = half_res_flow(prev_in, cur_in, params_);
    } else {
      const FrameImage gp = prev_in.channels == 3 ? to_grayscale(prev_in) : prev_in;
      const FrameImage gn = cur_in.channels == 3 ? to_grayscale(cur_in) : cur_in;
      f = farneback_flow(gp, gn, params_);
    }
    return warp_bilinear(prev_out, f);
  }

 private:
  FlowParams params_;
  FlowResolution resolution_;
};

/// Latency-modelled warp: sleeps to its deadline and reuses the previous
/// output, for scheduling benchmarks where warp cost is configured.
class StubWarpSynthesizer : public WarpSynthesizer {
 public:
  explicit StubWarpSynthesizer(double latency_ms) : latency_ms_(latency_ms) {
    if (latency_ms < 0.0)
      throw std::invalid_argument("StubWarpSynthesizer: latency must be >= 0");
  }
  FrameImage synthesize(const FrameImage& prev_out, const FrameImage&,
                        const FrameImage& cur_in) override {
    auto deadline = engine::Clock::now() +
                    std::chrono::duration_cast<engine::Clock::duration>(
                        std::chrono::duration<double, std::milli>(latency_ms_));
    FrameImage out = prev_out;
    out.frame_id = cur_in.frame_id;
    backend::detail2::sleep_until_deadline(deadline);
    return out;
  }
  std::optional<double> declared_ms() const override { return latency_ms_; }

 private:
  double latency_ms_;
};

struct SkipRunResult {
  engine::PipelineReport report;
  std::vector<FrameLabel> labels;
  double ms_per_frame = 0.0;
  std::optional<double> theoretical_ms;
  std::optional<double> overhead_ms;
};

/// Run the chain on frame indices = 0 (mod n) and synthesize the others by
/// warping the previous output with the flow between the previous and current
/// inputs. Single-threaded by design.
inline SkipRunResult skip_pipeline(const SkipSchedule& schedule,
                                   const std::vector<engine::StageSpec>& chain,
                                   engine::FrameSource& source, std::size_t n_frames,
                                   WarpSynthesizer& warp,
                                   const engine::FrameSink& on_output = {}) {
  if (schedule.n < 1) throw std::invalid_argument("skip_pipeline: n must be >= 1");
  if (n_frames < 1) throw std::invalid_argument("skip_pipeline: n_frames must be >= 1");
  engine::validate_chain(chain);

  SkipRunResult result;
  std::vector<std::vector<double>> stage_ms(chain.size());
  std::vector<double> warp_ms;
  std::vector<double> frame_ms;
  std::optional<FrameImage> prev_in;
  std::optional<FrameImage> prev_out;
  const std::size_t warmup = n_frames > engine::kWarmupFrames
                                 ? engine::kWarmupFrames
                                 : n_frames - 1;
  engine::Clock::time_point measured_start{};
  std::size_t processed = 0;

  for (std::size_t i = 0; i < n_frames; ++i) {
    auto frame = source.next();
    if (!frame) break;
    const bool measured = i >= warmup;
    auto t0 = engine::Clock::now();
    if (i == warmup) measured_start = t0;
    FrameImage out;
    if (i % static_cast<std::size_t>(schedule.n) == 0 || !prev_out) {
      backend::Payload payload = *frame;
      payload = engine::detail::run_chain(chain, std::move(payload), frame->frame_id,
                                          measured ? &stage_ms : nullptr);
      auto* img = std::get_if<FrameImage>(&payload);
      if (!img)
        throw std::runtime_error("skip_pipeline: chain must produce a frame output");
      out = std::move(*img);
      result.labels.push_back(FrameLabel::unet);
    } else {
      out = warp.synthesize(*prev_out, *prev_in, *frame);
      out.frame_id = frame->frame_id;
      if (measured) warp_ms.push_back(engine::ms_between(t0, engine::Clock::now()));
      result.labels.push_back(FrameLabel::warp);
    }
    if (measured) frame_ms.push_back(engine::ms_between(t0, engine::Clock::now()));
    if (on_output) on_output(out);
    prev_in = std::move(*frame);
    prev_out = std::move(out);
    ++processed;
  }
  if (processed == 0) throw std::runtime_error("skip_pipeline: source produced no frames");

  engine::PipelineReport& report = result.report;
  report.warmup_excluded = std::min(warmup, processed);
  for (std::size_t i = 0; i < chain.size(); ++i)
    report.stages.push_back(engine::detail::summarize(chain[i].name, stage_ms[i]));
  report.stages.push_back(engine::detail::summarize("flow+warp", warp_ms));
  report.end_to_end_mean_ms = engine::detail::mean_of(frame_ms);
  report.frames_measured = frame_ms.size();
  if (!frame_ms.empty()) {
    report.duration_s = engine::ms_between(measured_start, engine::Clock::now()) / 1000.0;
    if (report.duration_s > 0.0)
      report.achieved_fps = static_cast<double>(frame_ms.size()) / report.duration_s;
  }
  result.ms_per_frame = report.end_to_end_mean_ms;

  bool have_declared = !chain.empty();
  double unet_ms = 0.0;
  for (const auto& s : chain) {
    if (!s.declared_latency_ms) {
      have_declared = false;
      break;
    }
    unet_ms += *s.declared_latency_ms;
  }
  if (have_declared && warp.declared_ms()) {
    result.theoretical_ms =
        theoretical_ms_per_frame(unet_ms, *warp.declared_ms(), schedule.n);
    result.overhead_ms = result.ms_per_frame - *result.theoretical_ms;
  }
  return result;
}

}  // namespace streamskip::flow
