#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace gtwr {

// Deterministic random numbers for the whole library.
//
// The generator is SplitMix64 (Steele, Lea & Flood): a counter-based stream
// whose state advances by a fixed odd constant and whose output is a strong
// 64-bit mix of the counter.  Every random consumer (noise draws, covariate
// innovations, Monte-Carlo oracles, ...) receives its own child seed derived
// from the single experiment seed plus a stream tag, so results never depend
// on evaluation order or thread scheduling.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform double in [0, 1) with 53 random bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform double in the open interval (0, 1]; safe as a log() argument.
  double next_double_pos() { return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53; }

  // Standard normal via Box-Muller; the paired deviate is cached.
  double next_gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = next_double_pos();
    const double u2 = next_double();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 6.283185307179586476925286766559 * u2;
    spare_ = radius * std::sin(angle);
    have_spare_ = true;
    return radius * std::cos(angle);
  }

  // Uniform integer in [0, bound) by rejection-free scaling (bound << 2^64,
  // bias is negligible for the index ranges used here).
  std::uint64_t next_below(std::uint64_t bound) {
    if (bound == 0) throw std::invalid_argument("Rng::next_below: bound must be positive");
    return next_u64() % bound;
  }

  // Deterministic child-seed derivation: mixes a stream tag into a seed.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t tag) {
    std::uint64_t z = seed ^ (0x9e3779b97f4a7c15ULL + tag * 0xd1b54a32d192ed03ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  static std::uint64_t derive(std::uint64_t seed, std::uint64_t tag_a, std::uint64_t tag_b) {
    return derive(derive(seed, tag_a), tag_b);
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// Stream tags for the library's random consumers; fixed values keep child
// streams stable across releases.
namespace rng_stream {
inline constexpr std::uint64_t noise = 1;
inline constexpr std::uint64_t covariates = 2;
inline constexpr std::uint64_t mc_oracle = 3;
inline constexpr std::uint64_t probes = 4;
inline constexpr std::uint64_t targets = 5;
}  // namespace rng_stream

}  // namespace gtwr
