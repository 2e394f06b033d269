#pragma once

#include <cmath>
#include <cstdint>

namespace streamskip {

/// Deterministic 64-bit generator (splitmix64 recurrence).
///
/// All seed-derived values in the library come from this generator so that
/// stub transforms, noise tensors and synthetic data are reproducible
/// bit-for-bit across runs. Constants are the splitmix64 reference set:
/// increment 0x9E3779B97F4A7C15, mix multipliers 0xBF58476D1CE4E5B9 and
/// 0x94D049BB133111EB.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  /// Uniform in [0,1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  float uniform_float() { return static_cast<float>(uniform()); }

  /// Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t uniform_index(std::uint64_t bound) {
    // Multiply-shift range reduction; bias is negligible for bound << 2^64.
    return static_cast<std::uint64_t>(
        (static_cast<__uint128_t>(next_u64()) * bound) >> 64);
  }

  /// Standard normal variate via Box-Muller over the uniform stream.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform();  // (0,1], keeps log() finite
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  float normal_float() { return static_cast<float>(normal()); }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace streamskip
