#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace cdbandit {

// mt19937_64 is fully specified by the standard; the conversions below avoid
// std:: distributions, whose output is implementation-defined.
using Rng = std::mt19937_64;

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Stable per-trial seed: mix of (base seed, trial index, salt).
/// The salt is 0 for reward tapes and fnv1a64(policy name) for policy streams.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t trial,
                                    std::uint64_t salt = 0) noexcept {
  return splitmix64(splitmix64(splitmix64(base) ^ trial) ^ salt);
}

/// Top 53 bits of a 64-bit word mapped to [0, 1).
constexpr double to_unit(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

inline double uniform01(Rng& rng) { return to_unit(rng()); }

inline bool bernoulli(Rng& rng, double p) { return uniform01(rng) < p; }

__extension__ using uint128 = unsigned __int128;

/// Unbiased integer in [0, n) (Lemire's multiply-and-reject).
inline int uniform_index(Rng& rng, int n) {
  const auto range = static_cast<std::uint64_t>(n);
  uint128 m = static_cast<uint128>(rng()) * range;
  auto low = static_cast<std::uint64_t>(m);
  if (low < range) {
    const std::uint64_t threshold = (0 - range) % range;
    while (low < threshold) {
      m = static_cast<uint128>(rng()) * range;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<int>(m >> 64);
}

/// Counter-based Bernoulli rewards: the outcome of pulling `arm` at slot `t`
/// depends only on (seed, t, arm), so every policy run against the same tape
/// sees the same reward for the same (t, arm) regardless of its choices.
class RewardTape {
 public:
  explicit RewardTape(std::uint64_t seed) : seed_(splitmix64(seed)) {}

  double uniform(std::int64_t t, int arm) const noexcept {
    const auto key = splitmix64(seed_ ^ static_cast<std::uint64_t>(t)) +
                     0x632be59bd9b4e019ULL * static_cast<std::uint64_t>(arm + 1);
    return to_unit(splitmix64(key));
  }

  double draw(double mean, std::int64_t t, int arm) const noexcept {
    return uniform(t, arm) < mean ? 1.0 : 0.0;
  }

 private:
  std::uint64_t seed_;
};

}  // namespace cdbandit
