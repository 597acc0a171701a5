#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "steerode/errors.hpp"

namespace steerode {

namespace detail {

// SplitMix64 output mix (Steele, Lea, Flood 2014). Bijective on 64 bits.
inline constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

}  // namespace detail

// Deterministic, splittable generator. A stream is identified by
// (seed, stream id); splitting derives a child stream whose output is
// unrelated to the parent's, so parallel consumers can be seeded up front
// without sharing mutable state. Same (seed, stream) gives the same
// sequence on every platform: only 64-bit integer ops and IEEE doubles.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0)
      : seed_(seed), stream_(stream) {
    state_ = detail::mix64(detail::mix64(seed) ^
                           detail::mix64(stream + detail::kGolden));
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  // Child stream `k` of this stream. Children of distinct (stream, k)
  // pairs get distinct stream ids via the mix chain.
  RngStream split(std::uint64_t k) const {
    return RngStream(seed_, detail::mix64(stream_ + detail::kGolden * (k + 1)));
  }

  std::uint64_t next_u64() {
    state_ += detail::kGolden;
    return detail::mix64(state_);
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) {
    if (!(lo <= hi)) throw ContractError("uniform: lo > hi");
    return lo + (hi - lo) * uniform01();
  }

  // Standard normal via the trigonometric Box-Muller transform.
  // Always consumes exactly two uniforms per call.
  double normal() {
    const double u1 = 1.0 - uniform01();  // (0, 1]
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  // Uniform integer in [0, n) by 128-bit multiply-shift.
  std::uint64_t uniform_index(std::uint64_t n) {
    if (n == 0) throw ContractError("uniform_index: n must be positive");
    const unsigned __int128 wide =
        static_cast<unsigned __int128>(next_u64()) * n;
    return static_cast<std::uint64_t>(wide >> 64);
  }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t state_;
};

// Fisher-Yates driven by uniform_index, so permutations are identical
// across platforms.
inline void shuffle_indices(std::vector<int>& v, RngStream& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = rng.uniform_index(i);
    std::swap(v[i - 1], v[static_cast<std::size_t>(j)]);
  }
}

}  // namespace steerode
