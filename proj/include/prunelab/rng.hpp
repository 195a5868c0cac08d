#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace prunelab {

// Counter-based generator (splitmix64). The whole stream is a pure function of
// (seed, counter), which keeps checkpoint round-trips trivial: two u64 words.
// Named substreams are derived from the seed alone, so split("data") yields the
// same stream no matter how many draws the parent has made.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Box-Muller without spare caching: always two draws per call, so the
  // stream position stays a simple function of the call count.
  double normal(double mean = 0.0, double stddev = 1.0) {
    double u1 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(2.0 * std::numbers::pi * u2);
  }

  // Uniform integer in [0, n). Lemire-style multiply-shift; bias is < 2^-40
  // for any n this project uses.
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  Rng split(std::string_view name) const {
    return Rng(mix(seed_ ^ fnv1a(name)));
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t state() const { return state_; }
  void restore(std::uint64_t seed, std::uint64_t state) {
    seed_ = seed;
    state_ = state;
  }

 private:
  static std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (char c : s) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001B3ull;
    }
    return h;
  }

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 33)) * 0xFF51AFD7ED558CCDull;
    z = (z ^ (z >> 33)) * 0xC4CEB9FE1A85EC53ull;
    return z ^ (z >> 33);
  }

  std::uint64_t seed_;
  std::uint64_t state_;
};

}  // namespace prunelab
