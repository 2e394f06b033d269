#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include "streamskip/core.hpp"

namespace streamskip {

namespace detail {

inline void write_u32_le(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_u32_le(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw std::runtime_error("unexpected end of file");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void write_f32_le(std::ostream& os, const float* p, std::size_t n) {
  // Library targets little-endian hosts; floats are written verbatim.
  os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * 4));
}

inline void read_f32_le(std::istream& is, float* p, std::size_t n) {
  is.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * 4));
  if (!is) throw std::runtime_error("unexpected end of file");
}

}  // namespace detail

/// Binary PPM (P6, maxval 255). Samples are quantized with round-to-nearest.
inline void write_ppm(const FrameImage& img, const std::filesystem::path& path) {
  if (img.channels != 1 && img.channels != 3)
    throw std::invalid_argument("write_ppm: only 1- or 3-channel frames supported");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("write_ppm: cannot open " + path.string());
  os << "P6\n" << img.width << " " << img.height << "\n255\n";
  std::string row;
  row.reserve(static_cast<std::size_t>(img.width) * 3);
  for (int y = 0; y < img.height; ++y) {
    row.clear();
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        int src_c = img.channels == 3 ? c : 0;
        float v = detail::clampf(img.at(x, y, src_c), 0.0f, 1.0f);
        row.push_back(static_cast<char>(
            static_cast<unsigned char>(std::lround(v * 255.0f))));
      }
    }
    os.write(row.data(), static_cast<std::streamsize>(row.size()));
  }
  if (!os) throw std::runtime_error("write_ppm: write failed for " + path.string());
}

inline FrameImage read_ppm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("read_ppm: cannot open " + path.string());
  std::string magic;
  is >> magic;
  if (magic != "P6") throw std::runtime_error("read_ppm: not a P6 file: " + path.string());
  int w = 0, h = 0, maxval = 0;
  is >> w >> h >> maxval;
  if (!is || w < 1 || h < 1 || maxval != 255)
    throw std::runtime_error("read_ppm: unsupported header in " + path.string());
  is.get();  // single whitespace after maxval
  FrameImage img = make_frame(w, h, 3);
  std::vector<unsigned char> buf(static_cast<std::size_t>(w) * h * 3);
  is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!is) throw std::runtime_error("read_ppm: truncated pixel data in " + path.string());
  for (std::size_t i = 0; i < buf.size(); ++i)
    img.data[i] = static_cast<float>(buf[i]) / 255.0f;
  return img;
}

/// Raw float container: magic "FRAM", u32 width, u32 height, u32 channels,
/// then width*height*channels little-endian f32 samples.
inline void write_fram(const FrameImage& img, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("write_fram: cannot open " + path.string());
  os.write("FRAM", 4);
  detail::write_u32_le(os, static_cast<std::uint32_t>(img.width));
  detail::write_u32_le(os, static_cast<std::uint32_t>(img.height));
  detail::write_u32_le(os, static_cast<std::uint32_t>(img.channels));
  detail::write_f32_le(os, img.data.data(), img.data.size());
  if (!os) throw std::runtime_error("write_fram: write failed for " + path.string());
}

inline FrameImage read_fram(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("read_fram: cannot open " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "FRAM", 4) != 0)
    throw std::runtime_error("read_fram: bad magic in " + path.string());
  std::uint32_t w = detail::read_u32_le(is);
  std::uint32_t h = detail::read_u32_le(is);
  std::uint32_t c = detail::read_u32_le(is);
  if (w < 1 || h < 1 || c < 1)
    throw std::runtime_error("read_fram: bad dimensions in " + path.string());
  FrameImage img = make_frame(static_cast<int>(w), static_cast<int>(h), static_cast<int>(c));
  detail::read_f32_le(is, img.data.data(), img.data.size());
  return img;
}

}  // namespace streamskip
