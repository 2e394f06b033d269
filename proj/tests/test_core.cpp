#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "streamskip/core.hpp"
#include "streamskip/image_io.hpp"
#include "streamskip/rng.hpp"

using namespace streamskip;

namespace {

FrameImage random_frame(int w, int h, int c, std::uint64_t seed) {
  FrameImage img = make_frame(w, h, c);
  Rng rng(seed);
  for (auto& v : img.data) v = rng.uniform_float();
  return img;
}

// Independent reference sampler: half-pixel centers, edge clamp, plain
// double-precision bilinear weights.
double reference_bilinear(const FrameImage& img, int c, double out_w, double out_h,
                          int x, int y) {
  const double sx = img.width / out_w;
  const double sy = img.height / out_h;
  const double src_x = (x + 0.5) * sx - 0.5;
  const double src_y = (y + 0.5) * sy - 0.5;
  const int x0 = static_cast<int>(std::floor(src_x));
  const int y0 = static_cast<int>(std::floor(src_y));
  const double tx = src_x - x0;
  const double ty = src_y - y0;
  auto px = [&](int xx, int yy) {
    xx = std::clamp(xx, 0, img.width - 1);
    yy = std::clamp(yy, 0, img.height - 1);
    return static_cast<double>(img.at(xx, yy, c));
  };
  return (1 - tx) * (1 - ty) * px(x0, y0) + tx * (1 - ty) * px(x0 + 1, y0) +
         (1 - tx) * ty * px(x0, y0 + 1) + tx * ty * px(x0 + 1, y0 + 1);
}

}  // namespace

TEST_CASE("resize_bilinear identity size is a bitwise copy") {
  FrameImage img = random_frame(512, 512, 3, 11);
  FrameImage out = resize_bilinear(img, 512, 512);
  REQUIRE(out.data == img.data);
}

TEST_CASE("resize_bilinear maps constant images to constant images") {
  FrameImage img = make_frame(17, 23, 3, 0.7f);
  for (auto [w, h] : {std::pair{40, 9}, std::pair{5, 64}, std::pair{17, 23}}) {
    FrameImage out = resize_bilinear(img, w, h);
    REQUIRE(out.width == w);
    REQUIRE(out.height == h);
    for (float v : out.data) REQUIRE(v == 0.7f);
  }
}

TEST_CASE("resize_bilinear matches the per-pixel reference on a ramp downscale") {
  FrameImage img = make_frame(4, 4, 1);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) img.at(x, y, 0) = static_cast<float>(x) / 3.0f;
  FrameImage out = resize_bilinear(img, 2, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 2; ++x)
      REQUIRE_THAT(out.at(x, y, 0),
                   Catch::Matchers::WithinAbs(reference_bilinear(img, 0, 2, 4, x, y), 1e-6));
}

TEST_CASE("resize_bilinear matches the reference on random frames") {
  FrameImage img = random_frame(13, 9, 3, 29);
  FrameImage out = resize_bilinear(img, 31, 6);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x)
      for (int c = 0; c < 3; ++c)
        REQUIRE_THAT(out.at(x, y, c),
                     Catch::Matchers::WithinAbs(reference_bilinear(img, c, 31, 6, x, y), 1e-5));
}

TEST_CASE("resize_bilinear output range stays inside the input range") {
  Rng rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    const int w = 4 + static_cast<int>(rng.uniform_index(28));
    const int h = 4 + static_cast<int>(rng.uniform_index(28));
    FrameImage img = random_frame(w, h, 1, rng.next_u64());
    float lo = 1.0f, hi = 0.0f;
    for (float v : img.data) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    FrameImage out = resize_bilinear(img, 2 + static_cast<int>(rng.uniform_index(40)),
                                     2 + static_cast<int>(rng.uniform_index(40)));
    for (float v : out.data) {
      REQUIRE(v >= lo);
      REQUIRE(v <= hi);
    }
  }
}

TEST_CASE("resize_bilinear rejects bad targets") {
  FrameImage img = make_frame(8, 8, 1);
  REQUIRE_THROWS_AS(resize_bilinear(img, 0, 8), std::invalid_argument);
  REQUIRE_THROWS_AS(resize_bilinear(img, 8, -1), std::invalid_argument);
}

TEST_CASE("to_grayscale uses the fixed luma weights") {
  FrameImage img = make_frame(2, 1, 3);
  img.at(0, 0, 0) = 1.0f;  // pure red
  img.at(0, 0, 1) = 0.0f;
  img.at(0, 0, 2) = 0.0f;
  img.at(1, 0, 0) = 1.0f;  // pure white
  img.at(1, 0, 1) = 1.0f;
  img.at(1, 0, 2) = 1.0f;
  FrameImage g = to_grayscale(img);
  REQUIRE(g.channels == 1);
  REQUIRE(g.at(0, 0, 0) == 0.299f);
  REQUIRE(g.at(1, 0, 0) == 1.0f);
}

TEST_CASE("to_grayscale matches the weighted-sum oracle on random input") {
  FrameImage img = random_frame(3, 3, 3, 99);
  FrameImage g = to_grayscale(img);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 3; ++x) {
      const double want = 0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) +
                          0.114 * img.at(x, y, 2);
      REQUIRE_THAT(g.at(x, y, 0), Catch::Matchers::WithinAbs(want, 1e-6));
      REQUIRE(g.at(x, y, 0) >= 0.0f);
      REQUIRE(g.at(x, y, 0) <= 1.0f);
    }
}

TEST_CASE("to_grayscale rejects non-3-channel input") {
  REQUIRE_THROWS_AS(to_grayscale(make_frame(4, 4, 1)), std::invalid_argument);
}

TEST_CASE("frame validation catches broken invariants") {
  FrameImage img = make_frame(4, 4, 1, 0.5f);
  REQUIRE_NOTHROW(validate(img));
  img.data[3] = 1.5f;
  REQUIRE_THROWS_AS(validate(img), std::invalid_argument);
  img.data[3] = 0.5f;
  img.data.pop_back();
  REQUIRE_THROWS_AS(validate(img), std::invalid_argument);
}

TEST_CASE("latent validation catches non-finite values") {
  LatentTensor lat = make_latent(4, 2, 2);
  REQUIRE_NOTHROW(validate(lat));
  lat.data[5] = std::numeric_limits<float>::quiet_NaN();
  REQUIRE_THROWS_AS(validate(lat), std::invalid_argument);
}

TEST_CASE("FRAM container round-trips exactly") {
  const auto path = std::filesystem::temp_directory_path() / "streamskip_test.fram";
  FrameImage img = random_frame(19, 7, 3, 5);
  write_fram(img, path);
  FrameImage back = read_fram(path);
  REQUIRE(back.width == img.width);
  REQUIRE(back.height == img.height);
  REQUIRE(back.channels == img.channels);
  REQUIRE(back.data == img.data);
  std::filesystem::remove(path);
}

TEST_CASE("PPM round-trip is exact at 8-bit resolution") {
  const auto path = std::filesystem::temp_directory_path() / "streamskip_test.ppm";
  FrameImage img = random_frame(23, 11, 3, 6);
  // Snap to the 8-bit grid so quantization is the identity.
  for (auto& v : img.data) v = std::round(v * 255.0f) / 255.0f;
  write_ppm(img, path);
  FrameImage back = read_ppm(path);
  REQUIRE(back.data.size() == img.data.size());
  for (std::size_t i = 0; i < img.data.size(); ++i)
    REQUIRE_THAT(back.data[i], Catch::Matchers::WithinAbs(img.data[i], 1e-6));
  std::filesystem::remove(path);
}

TEST_CASE("read_ppm rejects garbage") {
  const auto path = std::filesystem::temp_directory_path() / "streamskip_bad.ppm";
  {
    std::ofstream os(path);
    os << "P5\n2 2\n255\nxxxx";
  }
  REQUIRE_THROWS(read_ppm(path));
  std::filesystem::remove(path);
}
