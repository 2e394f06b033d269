#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "streamskip/core.hpp"
#include "streamskip/engine.hpp"
#include "streamskip/rng.hpp"

namespace streamskip::synthetic {

enum class Pattern { gradient, checker, bandlimited_noise };

inline Pattern pattern_from_string(const std::string& s) {
  if (s == "gradient") return Pattern::gradient;
  if (s == "checker") return Pattern::checker;
  if (s == "bandlimited-noise") return Pattern::bandlimited_noise;
  throw std::invalid_argument("unknown pattern '" + s +
                              "'; valid: gradient, checker, bandlimited-noise");
}

struct FrameSpec {
  int width = 256;
  int height = 256;
  int channels = 3;
  Pattern pattern = Pattern::bandlimited_noise;
  double motion_dx = 0.0;  // per-frame displacement in pixels
  double motion_dy = 0.0;
  Seed seed{1};
};

namespace detail {

/// Low-pass noise: a coarse uniform grid (stride 8) bilinearly upsampled and
/// binomially smoothed, normalized into [0.1, 0.9]. Smooth enough for
/// gradient-based flow estimation while keeping texture everywhere.
inline FrameImage bandlimited_noise_frame(int w, int h, int channels, Seed seed) {
  constexpr int kStride = 8;
  const int gw = std::max(2, w / kStride);
  const int gh = std::max(2, h / kStride);
  Rng rng(seed.value ^ 0x8BADF00DDEADBEEFull);
  FrameImage img = make_frame(w, h, channels);
  std::vector<float> grid(static_cast<std::size_t>(gw) * gh);
  for (int c = 0; c < channels; ++c) {
    for (auto& g : grid) g = rng.uniform_float();
    for (int y = 0; y < h; ++y) {
      const float gy = (y + 0.5f) * gh / h - 0.5f;
      for (int x = 0; x < w; ++x) {
        const float gx = (x + 0.5f) * gw / w - 0.5f;
        img.at(x, y, c) = streamskip::detail::sample_bilinear_clamped(grid.data(), gw,
                                                                      gh, 1, gx, gy);
      }
    }
  }
  // One binomial pass per axis to soften the piecewise-linear creases.
  static constexpr float k[3] = {0.25f, 0.5f, 0.25f};
  FrameImage tmp = img;
  for (int c = 0; c < channels; ++c) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        float s = 0.0f;
        for (int o = -1; o <= 1; ++o)
          s += k[o + 1] * img.at(std::clamp(x + o, 0, w - 1), y, c);
        tmp.at(x, y, c) = s;
      }
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        float s = 0.0f;
        for (int o = -1; o <= 1; ++o)
          s += k[o + 1] * tmp.at(x, std::clamp(y + o, 0, h - 1), c);
        img.at(x, y, c) = streamskip::detail::clampf(0.1f + 0.8f * s, 0.0f, 1.0f);
      }
  }
  return img;
}

inline FrameImage base_frame(const FrameSpec& spec) {
  switch (spec.pattern) {
    case Pattern::gradient: {
      FrameImage img = make_frame(spec.width, spec.height, spec.channels);
      for (int y = 0; y < spec.height; ++y)
        for (int x = 0; x < spec.width; ++x)
          for (int c = 0; c < spec.channels; ++c) {
            const float fx = spec.width > 1
                                 ? static_cast<float>(x) / (spec.width - 1)
                                 : 0.0f;
            const float fy = spec.height > 1
                                 ? static_cast<float>(y) / (spec.height - 1)
                                 : 0.0f;
            img.at(x, y, c) = c == 0 ? fx : (c == 1 ? fy : 0.5f * (fx + fy));
          }
      return img;
    }
    case Pattern::checker: {
      constexpr int kTile = 16;
      FrameImage img = make_frame(spec.width, spec.height, spec.channels);
      for (int y = 0; y < spec.height; ++y)
        for (int x = 0; x < spec.width; ++x) {
          const bool on = ((x / kTile) + (y / kTile)) % 2 == 0;
          for (int c = 0; c < spec.channels; ++c)
            img.at(x, y, c) = on ? 0.85f : 0.15f;
        }
      return img;
    }
    case Pattern::bandlimited_noise:
      return bandlimited_noise_frame(spec.width, spec.height, spec.channels, spec.seed);
  }
  throw std::invalid_argument("unknown pattern");
}

}  // namespace detail

/// Frame t is frame 0 translated by t*(dx,dy) with edge clamping; integer
/// displacements reproduce samples exactly.
inline FrameImage translate(const FrameImage& base, double dx, double dy) {
  FrameImage out = make_frame(base.width, base.height, base.channels);
  out.frame_id = base.frame_id;
  out.capture_timestamp_ns = base.capture_timestamp_ns;
  for (int y = 0; y < base.height; ++y) {
    const float sy = static_cast<float>(y - dy);
    for (int x = 0; x < base.width; ++x) {
      const float sx = static_cast<float>(x - dx);
      for (int c = 0; c < base.channels; ++c)
        out.at(x, y, c) = streamskip::detail::sample_bilinear_clamped(
            base.data.data() + c, base.width, base.height, base.channels, sx, sy);
    }
  }
  return out;
}

/// Deterministic frame stream: a seeded base pattern drifting at a constant
/// per-frame velocity. Stands in for camera capture.
class SyntheticSource : public engine::FrameSource {
 public:
  SyntheticSource(FrameSpec spec, std::optional<std::size_t> count = std::nullopt)
      : spec_(spec), count_(count), base_(detail::base_frame(spec)) {}

  std::optional<FrameImage> next() override {
    if (count_ && emitted_ >= *count_) return std::nullopt;
    FrameImage out;
    if (spec_.motion_dx == 0.0 && spec_.motion_dy == 0.0) {
      out = base_;
    } else {
      out = translate(base_, spec_.motion_dx * static_cast<double>(emitted_),
                      spec_.motion_dy * static_cast<double>(emitted_));
    }
    out.frame_id = next_frame_id_++;
    out.capture_timestamp_ns = engine::now_ns();
    ++emitted_;
    return out;
  }

  const FrameImage& base() const { return base_; }

 private:
  FrameSpec spec_;
  std::optional<std::size_t> count_;
  FrameImage base_;
  std::size_t emitted_ = 0;
  std::uint64_t next_frame_id_ = 0;
};

// ---------------------------------------------------------------------------
// Synthetic embedding data

inline std::vector<float> random_vectors(std::size_t n, std::size_t dim, Seed seed) {
  Rng rng(seed.value);
  std::vector<float> out(n * dim);
  for (auto& v : out) v = rng.normal_float();
  return out;
}

/// Isotropic Gaussian clusters around uniformly drawn centers, populated
/// round-robin so every cluster holds the same number of points; the classic
/// regime where inverted-file search shines.
inline std::vector<float> clustered_vectors(std::size_t n, std::size_t dim,
                                            std::size_t n_clusters, float cluster_std,
                                            Seed seed) {
  if (n_clusters < 1) throw std::invalid_argument("clustered_vectors: need >= 1 cluster");
  Rng rng(seed.value);
  std::vector<float> centers(n_clusters * dim);
  for (auto& v : centers) v = rng.uniform_float();
  std::vector<float> out(n * dim);
  for (std::size_t i = 0; i < n; ++i) {
    const float* ctr = centers.data() + (i % n_clusters) * dim;
    float* dst = out.data() + i * dim;
    for (std::size_t j = 0; j < dim; ++j)
      dst[j] = ctr[j] + cluster_std * rng.normal_float();
  }
  return out;
}

}  // namespace streamskip::synthetic
