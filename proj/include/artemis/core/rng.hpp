#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace artemis {

/// SplitMix64 finalizer. Used as the mixing function of the counter RNG.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Counter-based generator: every draw is a pure function of
/// (key, stream, counter), so results never depend on evaluation order or
/// on how work is split across threads.
class CounterRng {
 public:
  constexpr explicit CounterRng(std::uint64_t key) noexcept : key_(mix64(key ^ 0x5851f42d4c957f2dULL)) {}

  /// Derive an independent generator, e.g. one per pipeline stage.
  constexpr CounterRng split(std::uint64_t tag) const noexcept {
    CounterRng r(0);
    r.key_ = mix64(key_ ^ mix64(tag + 0x632be59bd9b4e019ULL));
    return r;
  }

  constexpr std::uint64_t bits(std::uint64_t stream, std::uint64_t counter) const noexcept {
    return mix64(mix64(key_ ^ mix64(stream)) + counter * 0xd1b54a32d192ed03ULL);
  }

  /// Uniform in the open interval (0, 1).
  double uniform(std::uint64_t stream, std::uint64_t counter) const noexcept {
    return (static_cast<double>(bits(stream, counter) >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller on two uniforms drawn from sub-counters.
  double normal(std::uint64_t stream, std::uint64_t counter) const noexcept {
    const double u1 = uniform(stream, 2 * counter);
    const double u2 = uniform(stream, 2 * counter + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Standard Gumbel(0, 1).
  double gumbel(std::uint64_t stream, std::uint64_t counter) const noexcept {
    return -std::log(-std::log(uniform(stream, counter)));
  }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n, std::uint64_t stream, std::uint64_t counter) const noexcept {
    return static_cast<std::uint64_t>(uniform(stream, counter) * static_cast<double>(n)) % n;
  }

  std::uint64_t key() const noexcept { return key_; }

 private:
  std::uint64_t key_;
};

/// Stream identifiers, kept in one place so that stages never collide.
namespace streams {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kSdeNoise = 2;
inline constexpr std::uint64_t kCollocation = 3;
inline constexpr std::uint64_t kMprTimes = 4;
inline constexpr std::uint64_t kShuffle = 5;
inline constexpr std::uint64_t kGumbel = 6;
inline constexpr std::uint64_t kEvalNoise = 7;
}  // namespace streams

inline std::uint64_t stream_id(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0) noexcept {
  return mix64(base * 0x9e3779b97f4a7c15ULL ^ mix64(a * 0xff51afd7ed558ccdULL + b));
}

}  // namespace artemis
