// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string_view>

namespace echo {

namespace detail {

constexpr std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Deterministic random stream keyed by (seed, label).
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the
/// standard; every distribution below is implemented here rather than taken
/// from <random> because the standard distributions are
/// implementation-defined. Two processes on different hosts that open the
/// same (seed, label) therefore observe the same draws.
///
/// Streams are single-owner: copying is disabled so that two consumers can
/// never silently share (and interleave) one sequence.
class RngStream {
 public:
  RngStream(std::int64_t seed, std::string_view label)
      : engine_(derive_key(seed, label)) {}

  RngStream(const RngStream&) = delete;
  RngStream& operator=(const RngStream&) = delete;
  RngStream(RngStream&&) noexcept = default;
  RngStream& operator=(RngStream&&) noexcept = default;

  static std::uint64_t derive_key(std::int64_t seed, std::string_view label) {
    return detail::splitmix64(static_cast<std::uint64_t>(seed) ^
                              detail::splitmix64(detail::fnv1a64(label)));
  }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform integer in [0, n); n must be positive. Rejection sampling keeps
  /// it unbiased.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x = 0;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  /// Standard normal via Box-Muller (one value per call, second discarded).
  double normal() {
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Fisher-Yates shuffle.
  template <class It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      const auto j = below(i);
      using std::swap;
      swap(first[i - 1], first[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

/// Opens the stream for (seed, stream_label).
inline RngStream seeded_rng(std::int64_t seed, std::string_view stream_label) {
  return RngStream(seed, stream_label);
}

}  // namespace echo
