#pragma once

#include <algorithm>
#include <optional>
#include <stdexcept>

#include "streamskip/backend.hpp"
#include "streamskip/core.hpp"
#include "streamskip/rng.hpp"

namespace streamskip::coherence {

struct NoiseConfig {
  Seed seed{0};
  float strength = 0.1f;
};

/// Adds strength-scaled standard-normal noise drawn from a generator that is
/// re-seeded on every call, so the noise tensor is identical frame after
/// frame for a fixed seed and shape.
inline LatentTensor add_noise(const LatentTensor& lat, const NoiseConfig& cfg) {
  if (cfg.strength < 0.0f)
    throw std::invalid_argument("add_noise: strength must be >= 0");
  if (cfg.strength == 0.0f) return lat;
  Rng rng(cfg.seed.value);
  LatentTensor out = lat;
  for (auto& v : out.data) v += cfg.strength * rng.normal_float();
  return out;
}

struct FeedbackState {
  float alpha = 0.3f;
  std::optional<LatentTensor> prev_latent;
};

/// First-order IIR over latents: out = (1-alpha)*new + alpha*prev, and the
/// blended output becomes the new feedback value.
inline LatentTensor feedback_blend(const LatentTensor& new_lat, FeedbackState& state) {
  if (!(state.alpha >= 0.0f && state.alpha <= 1.0f))
    throw std::invalid_argument("feedback_blend: alpha must be in [0,1]");
  if (state.prev_latent) {
    const LatentTensor& p = *state.prev_latent;
    if (p.channels != new_lat.channels || p.height != new_lat.height ||
        p.width != new_lat.width)
      throw std::invalid_argument("feedback_blend: latent shape mismatch");
  }
  if (!state.prev_latent || state.alpha == 0.0f) {
    state.prev_latent = new_lat;
    return new_lat;
  }
  const LatentTensor& prev = *state.prev_latent;
  if (state.alpha == 1.0f) {
    LatentTensor out = prev;
    out.source_frame_id = new_lat.source_frame_id;
    state.prev_latent = out;
    return out;
  }
  LatentTensor out = new_lat;
  const float a = state.alpha;
  const float na = 1.0f - a;
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = na * new_lat.data[i] + a * prev.data[i];
  state.prev_latent = out;
  return out;
}

struct EmaState {
  float beta = 0.4f;
  std::optional<FrameImage> accum;
};

/// accum <- beta*frame + (1-beta)*accum; the first frame initializes accum.
inline FrameImage ema_update(EmaState& state, const FrameImage& frame) {
  if (!(state.beta > 0.0f && state.beta <= 1.0f))
    throw std::invalid_argument("ema_update: beta must be in (0,1]");
  if (!state.accum || state.beta == 1.0f) {
    state.accum = frame;
    return frame;
  }
  FrameImage& acc = *state.accum;
  if (acc.width != frame.width || acc.height != frame.height ||
      acc.channels != frame.channels)
    throw std::invalid_argument("ema_update: frame dimension mismatch");
  const float b = state.beta;
  const float nb = 1.0f - b;
  for (std::size_t i = 0; i < acc.data.size(); ++i)
    acc.data[i] = detail::clampf(b * frame.data[i] + nb * acc.data[i], 0.0f, 1.0f);
  acc.frame_id = frame.frame_id;
  acc.capture_timestamp_ns = frame.capture_timestamp_ns;
  return acc;
}

/// Per-pixel convex blend (1-t)*a + t*b; exact at both endpoints.
inline FrameImage linear_interpolate(const FrameImage& a, const FrameImage& b, float t) {
  if (a.width != b.width || a.height != b.height || a.channels != b.channels)
    throw std::invalid_argument("linear_interpolate: frame dimension mismatch");
  if (!(t >= 0.0f && t <= 1.0f))
    throw std::invalid_argument("linear_interpolate: t must be in [0,1]");
  if (t == 0.0f) return a;
  if (t == 1.0f) return b;
  FrameImage out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    float va = a.data[i];
    float vb = b.data[i];
    float v = va + t * (vb - va);
    out.data[i] = detail::clampf(v, std::min(va, vb), std::max(va, vb));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Stage adapters so the temporal operators can sit inside an engine chain.

class NoiseStage : public backend::Stage {
 public:
  explicit NoiseStage(NoiseConfig cfg) : cfg_(cfg) {}
  backend::StageKind kind() const override { return backend::StageKind::custom; }
  backend::Payload process(backend::Payload input) override {
    auto* lat = std::get_if<LatentTensor>(&input);
    if (!lat) throw std::invalid_argument("noise stage expects a latent input");
    return add_noise(*lat, cfg_);
  }

 private:
  NoiseConfig cfg_;
};

class FeedbackStage : public backend::Stage {
 public:
  explicit FeedbackStage(float alpha) { state_.alpha = alpha; }
  backend::StageKind kind() const override { return backend::StageKind::custom; }
  backend::Payload process(backend::Payload input) override {
    auto* lat = std::get_if<LatentTensor>(&input);
    if (!lat) throw std::invalid_argument("feedback stage expects a latent input");
    return feedback_blend(*lat, state_);
  }

 private:
  FeedbackState state_;
};

class EmaStage : public backend::Stage {
 public:
  explicit EmaStage(float beta) { state_.beta = beta; }
  backend::StageKind kind() const override { return backend::StageKind::custom; }
  backend::Payload process(backend::Payload input) override {
    auto* img = std::get_if<FrameImage>(&input);
    if (!img) throw std::invalid_argument("ema stage expects a frame input");
    return ema_update(state_, *img);
  }

 private:
  EmaState state_;
};

}  // namespace streamskip::coherence
