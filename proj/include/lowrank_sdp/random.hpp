#pragma once

// Counter-based pseudo-random numbers. Every draw is a pure function of a
// 64-bit key, so results never depend on iteration order or on the standard
// library's distribution implementations.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace lowrank_sdp {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Mixes a seed with two counters into a well-distributed 64-bit key.
constexpr std::uint64_t hash_key(std::uint64_t seed, std::uint64_t a, std::uint64_t b) noexcept {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ (a * 0xd6e8feb86659fd93ULL));
  h = splitmix64(h ^ (b * 0xa0761d6478bd642fULL + 0x5851f42d4c957f2dULL));
  return h;
}

/// Uniform in (0, 1]; never returns zero so log() is always finite.
constexpr double to_unit_open_closed(std::uint64_t x) noexcept {
  return (static_cast<double>(x >> 11) + 1.0) * 0x1.0p-53;
}

/// Uniform in [0, 1).
constexpr double to_unit(std::uint64_t x) noexcept { return static_cast<double>(x >> 11) * 0x1.0p-53; }

/// Standard normal deviate keyed by (seed, a, b), via Box-Muller.
inline double keyed_normal(std::uint64_t seed, std::uint64_t a, std::uint64_t b) noexcept {
  const std::uint64_t base = hash_key(seed, a, b);
  const double u1 = to_unit_open_closed(splitmix64(base));
  const double u2 = to_unit(splitmix64(base ^ 0x632be59bd9b4e019ULL));
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

/// Child seed for a labeled consumer (problem generation, GOE draw, initial
/// point, PGD noise, Lanczos starts). FNV-1a over the label.
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::string_view label) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char c : label) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return splitmix64(parent ^ splitmix64(h));
}

/// Sequential stream on top of the keyed generator.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) noexcept : seed_(seed) {}

  std::uint64_t next_u64() noexcept { return hash_key(seed_, counter_++, 0); }
  double uniform() noexcept { return to_unit(next_u64()); }
  double normal() noexcept { return keyed_normal(seed_, counter_++, 1); }

  std::uint64_t seed() const noexcept { return seed_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

}  // namespace lowrank_sdp
