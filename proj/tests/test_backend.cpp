#include <catch2/catch_amalgamated.hpp>

#include <chrono>

#include "streamskip/backend.hpp"
#include "streamskip/rng.hpp"

using namespace streamskip;
using namespace streamskip::backend;

namespace {

FrameImage random_frame(int w, int h, std::uint64_t seed) {
  FrameImage img = make_frame(w, h, 3);
  Rng rng(seed);
  for (auto& v : img.data) v = rng.uniform_float();
  return img;
}

double psnr(const FrameImage& a, const FrameImage& b) {
  double mse = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - b.data[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.data.size());
  return 10.0 * std::log10(1.0 / mse);
}

}  // namespace

TEST_CASE("stub_encode maps a constant mid-gray image to a zero latent") {
  FrameImage img = make_frame(32, 32, 3, 0.5f);
  LatentTensor lat = stub_encode(img);
  REQUIRE(lat.channels == 4);
  REQUIRE(lat.height == 4);
  REQUIRE(lat.width == 4);
  for (float v : lat.data) REQUIRE(v == 0.0f);
}

TEST_CASE("stub_encode shape contract for 512x512") {
  LatentTensor lat = stub_encode(make_frame(512, 512, 3, 0.3f));
  REQUIRE(lat.channels == 4);
  REQUIRE(lat.height == 64);
  REQUIRE(lat.width == 64);
}

TEST_CASE("stub_encode matches the per-block box-average oracle") {
  FrameImage img = random_frame(16, 16, 3);
  LatentTensor lat = stub_encode(img);
  for (int c = 0; c < 3; ++c)
    for (int by = 0; by < 2; ++by)
      for (int bx = 0; bx < 2; ++bx) {
        double sum = 0.0;
        for (int y = by * 8; y < by * 8 + 8; ++y)
          for (int x = bx * 8; x < bx * 8 + 8; ++x) sum += img.at(x, y, c);
        const double want = 2.0 * (sum / 64.0) - 1.0;
        REQUIRE_THAT(lat.at(c, by, bx), Catch::Matchers::WithinAbs(want, 1e-5));
      }
  for (int by = 0; by < 2; ++by)
    for (int bx = 0; bx < 2; ++bx) REQUIRE(lat.at(3, by, bx) == 0.0f);
}

TEST_CASE("stub_encode rejects indivisible dimensions") {
  REQUIRE_THROWS_AS(stub_encode(make_frame(20, 16, 3)), std::invalid_argument);
  REQUIRE_THROWS_AS(stub_encode(make_frame(16, 16, 1)), std::invalid_argument);
}

TEST_CASE("stub_decode of a zero latent is a constant mid-gray image") {
  LatentTensor lat = make_latent(4, 2, 2);
  FrameImage img = stub_decode(lat);
  REQUIRE(img.width == 16);
  REQUIRE(img.height == 16);
  for (float v : img.data) REQUIRE(v == 0.5f);
}

TEST_CASE("stub_decode rejects wrong channel counts") {
  REQUIRE_THROWS_AS(stub_decode(make_latent(3, 2, 2)), std::invalid_argument);
}

TEST_CASE("encode-decode round trip preserves constant images exactly") {
  for (float c : {0.0f, 0.25f, 0.7f, 1.0f}) {
    FrameImage img = make_frame(24, 24, 3, c);
    FrameImage back = stub_decode(stub_encode(img));
    REQUIRE(back.data == img.data);
  }
}

TEST_CASE("encode-decode round trip keeps a gentle gradient above 30 dB") {
  FrameImage img = make_frame(128, 128, 3);
  for (int y = 0; y < 128; ++y)
    for (int x = 0; x < 128; ++x)
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = static_cast<float>(x) / 127.0f;
  FrameImage back = stub_decode(stub_encode(img));
  REQUIRE(psnr(img, back) >= 30.0);
  for (float v : back.data) {
    REQUIRE(v >= 0.0f);
    REQUIRE(v <= 1.0f);
  }
}

TEST_CASE("stub_denoise is deterministic and seed-sensitive") {
  LatentTensor lat = make_latent(4, 8, 8);
  Rng rng(3);
  for (auto& v : lat.data) v = rng.normal_float();
  LatentTensor a = stub_denoise(lat, Seed{42});
  LatentTensor b = stub_denoise(lat, Seed{42});
  REQUIRE(a.data == b.data);
  LatentTensor c = stub_denoise(lat, Seed{43});
  REQUIRE(a.data != c.data);
}

// Golden values generated once from this implementation and frozen; they pin
// the seed-0 transform of a zero latent against accidental drift.
TEST_CASE("stub_denoise seed-0 golden values") {
  LatentTensor zero = make_latent(4, 8, 8);
  LatentTensor out = stub_denoise(zero, Seed{0});
  struct Golden {
    std::size_t idx;
    float value;
  };
  static constexpr Golden golden[] = {
      {0, -0.005664662f},  {37, -0.011167702f}, {63, 0.018374113f},
      {64, 0.070960008f},  {123, 0.044571385f}, {128, 0.016335547f},
      {200, 0.076153412f}, {255, 0.124799676f},
  };
  for (const auto& g : golden)
    REQUIRE_THAT(out.data[g.idx], Catch::Matchers::WithinAbs(g.value, 1e-7));
}

TEST_CASE("stub stage latency is a lower bound on wall time") {
  StubStage stage(StageKind::denoise, 12.0, Seed{1});
  LatentTensor lat = make_latent(4, 4, 4);
  auto t0 = std::chrono::steady_clock::now();
  Payload out = stage.process(Payload(lat));
  const double ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
          .count();
  REQUIRE(ms >= 12.0);
  REQUIRE(ms < 20.0);
  REQUIRE(std::holds_alternative<LatentTensor>(out));
}

TEST_CASE("stub stages validate payload types") {
  StubStage encode(StageKind::encode, 0.0);
  REQUIRE_THROWS_AS(encode.process(Payload(make_latent(4, 2, 2))), std::invalid_argument);
  StubStage decode(StageKind::decode, 0.0);
  REQUIRE_THROWS_AS(decode.process(Payload(make_frame(8, 8, 3))), std::invalid_argument);
}

TEST_CASE("profile presets reproduce the published stage sums") {
  REQUIRE_THAT(profile_preset("sdturbo-coreml").total_ms(),
               Catch::Matchers::WithinAbs(77.7, 1e-9));
  REQUIRE_THAT(profile_preset("sdxs-coreml").total_ms(),
               Catch::Matchers::WithinAbs(44.4, 1e-9));
  REQUIRE_THAT(profile_preset("pix2pix-turbo").total_ms(),
               Catch::Matchers::WithinAbs(250.0, 1e-9));
  REQUIRE(profile_preset("custom").total_ms() == 0.0);
}

TEST_CASE("unknown preset errors list the valid names") {
  try {
    profile_preset("sd-turbo");
    FAIL("expected an exception");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    REQUIRE(msg.find("sdturbo-coreml") != std::string::npos);
    REQUIRE(msg.find("pix2pix-turbo") != std::string::npos);
  }
}
