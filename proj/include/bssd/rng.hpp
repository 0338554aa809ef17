#pragma once

#include <cstdint>
#include <string>

#include "bssd/common.hpp"

namespace bssd {

// Deterministic, platform-independent random stream (splitmix64). All
// project randomness flows from one seed through named sub-streams, so
// every fixture can be regenerated bit-identically.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  // Sub-stream derived from this seed and a label, e.g. rng.stream("rooms").
  Rng stream(const std::string& name) const {
    return Rng(state_ ^ (fnv1a64(name) | 1ull));
  }

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t uniform_int(std::uint64_t n) {
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  // Standard normal via Box-Muller; no state beyond the uniform stream.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }

 private:
  std::uint64_t state_;
};

}  // namespace bssd
