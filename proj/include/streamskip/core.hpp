#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace streamskip {

/// H x W x C raster with samples in [0,1], row-major, channel-interleaved.
struct FrameImage {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<float> data;
  std::uint64_t frame_id = 0;
  std::uint64_t capture_timestamp_ns = 0;

  std::size_t sample_count() const {
    return static_cast<std::size_t>(width) * height * channels;
  }
  float& at(int x, int y, int c) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  float at(int x, int y, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

inline FrameImage make_frame(int width, int height, int channels, float fill = 0.0f) {
  if (width < 1 || height < 1 || channels < 1)
    throw std::invalid_argument("make_frame: dimensions must be positive");
  FrameImage img;
  img.width = width;
  img.height = height;
  img.channels = channels;
  img.data.assign(static_cast<std::size_t>(width) * height * channels, fill);
  return img;
}

inline void validate(const FrameImage& img) {
  if (img.width < 1 || img.height < 1 || img.channels < 1)
    throw std::invalid_argument("FrameImage: non-positive dimensions");
  if (img.data.size() != img.sample_count())
    throw std::invalid_argument("FrameImage: data length != width*height*channels");
  for (float v : img.data)
    if (!(v >= 0.0f && v <= 1.0f))
      throw std::invalid_argument("FrameImage: sample outside [0,1]");
}

/// C x H x W tensor, row-major per channel plane, unbounded finite values.
struct LatentTensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;
  std::uint64_t source_frame_id = 0;

  std::size_t element_count() const {
    return static_cast<std::size_t>(channels) * height * width;
  }
  float& at(int c, int y, int x) {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  float at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
};

inline LatentTensor make_latent(int channels, int height, int width, float fill = 0.0f) {
  if (channels < 1 || height < 1 || width < 1)
    throw std::invalid_argument("make_latent: dimensions must be positive");
  LatentTensor lat;
  lat.channels = channels;
  lat.height = height;
  lat.width = width;
  lat.data.assign(static_cast<std::size_t>(channels) * height * width, fill);
  return lat;
}

inline void validate(const LatentTensor& lat) {
  if (lat.channels < 1 || lat.height < 1 || lat.width < 1)
    throw std::invalid_argument("LatentTensor: non-positive dimensions");
  if (lat.data.size() != lat.element_count())
    throw std::invalid_argument("LatentTensor: data length != channels*height*width");
  for (float v : lat.data)
    if (!std::isfinite(v))
      throw std::invalid_argument("LatentTensor: non-finite value");
}

/// Per-pixel displacement map. dx/dy are in pixels, plane layout matches the frame.
struct FlowField {
  int width = 0;
  int height = 0;
  std::vector<float> dx;
  std::vector<float> dy;

  std::size_t pixel_count() const {
    return static_cast<std::size_t>(width) * height;
  }
};

inline FlowField make_flow(int width, int height, float fill_dx = 0.0f, float fill_dy = 0.0f) {
  FlowField f;
  f.width = width;
  f.height = height;
  f.dx.assign(static_cast<std::size_t>(width) * height, fill_dx);
  f.dy.assign(static_cast<std::size_t>(width) * height, fill_dy);
  return f;
}

struct EmbeddingVector {
  std::vector<float> data;
  bool normalized = false;

  std::size_t dim() const { return data.size(); }
};

struct Seed {
  std::uint64_t value = 0;
};

namespace detail {

inline float clampf(float v, float lo, float hi) {
  return v < lo ? lo : (v > hi ? hi : v);
}

/// Bilinear sample of one channel with edge clamping and half-pixel-free
/// coordinates (x,y are positions in pixel-center space). The result is
/// clamped to the range of the four taps so interpolation can never leave
/// the local value range.
inline float sample_bilinear_clamped(const float* plane, int w, int h, int stride,
                                     float x, float y) {
  float fx = std::floor(x);
  float fy = std::floor(y);
  int x0 = static_cast<int>(fx);
  int y0 = static_cast<int>(fy);
  float tx = x - fx;
  float ty = y - fy;
  int x0c = std::clamp(x0, 0, w - 1);
  int x1c = std::clamp(x0 + 1, 0, w - 1);
  int y0c = std::clamp(y0, 0, h - 1);
  int y1c = std::clamp(y0 + 1, 0, h - 1);
  float v00 = plane[(static_cast<std::size_t>(y0c) * w + x0c) * stride];
  float v01 = plane[(static_cast<std::size_t>(y0c) * w + x1c) * stride];
  float v10 = plane[(static_cast<std::size_t>(y1c) * w + x0c) * stride];
  float v11 = plane[(static_cast<std::size_t>(y1c) * w + x1c) * stride];
  float top = v00 + tx * (v01 - v00);
  float bot = v10 + tx * (v11 - v10);
  float v = top + ty * (bot - top);
  float lo = std::min(std::min(v00, v01), std::min(v10, v11));
  float hi = std::max(std::max(v00, v01), std::max(v10, v11));
  return clampf(v, lo, hi);
}

}  // namespace detail

/// Bilinear resize with edge-clamped, half-pixel-center sampling.
/// Identity-size calls return a bitwise copy; constants map to constants.
inline FrameImage resize_bilinear(const FrameImage& img, int out_w, int out_h) {
  if (out_w < 1 || out_h < 1)
    throw std::invalid_argument("resize_bilinear: target dimensions must be positive");
  if (img.width < 1 || img.height < 1 || img.channels < 1 ||
      img.data.size() != img.sample_count())
    throw std::invalid_argument("resize_bilinear: invalid input frame");
  if (out_w == img.width && out_h == img.height) return img;

  FrameImage out = make_frame(out_w, out_h, img.channels);
  out.frame_id = img.frame_id;
  out.capture_timestamp_ns = img.capture_timestamp_ns;
  const double sx = static_cast<double>(img.width) / out_w;
  const double sy = static_cast<double>(img.height) / out_h;
  for (int y = 0; y < out_h; ++y) {
    float src_y = static_cast<float>((y + 0.5) * sy - 0.5);
    for (int x = 0; x < out_w; ++x) {
      float src_x = static_cast<float>((x + 0.5) * sx - 0.5);
      for (int c = 0; c < img.channels; ++c) {
        float v = detail::sample_bilinear_clamped(img.data.data() + c, img.width,
                                                  img.height, img.channels, src_x, src_y);
        out.at(x, y, c) = detail::clampf(v, 0.0f, 1.0f);
      }
    }
  }
  return out;
}

/// ITU-R BT.601 luma: 0.299 R + 0.587 G + 0.114 B.
inline FrameImage to_grayscale(const FrameImage& img) {
  if (img.channels != 3)
    throw std::invalid_argument("to_grayscale: input must have 3 channels");
  FrameImage out = make_frame(img.width, img.height, 1);
  out.frame_id = img.frame_id;
  out.capture_timestamp_ns = img.capture_timestamp_ns;
  const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
  for (std::size_t i = 0; i < n; ++i) {
    double r = img.data[i * 3 + 0];
    double g = img.data[i * 3 + 1];
    double b = img.data[i * 3 + 2];
    out.data[i] = detail::clampf(static_cast<float>(0.299 * r + 0.587 * g + 0.114 * b),
                                 0.0f, 1.0f);
  }
  return out;
}

}  // namespace streamskip
