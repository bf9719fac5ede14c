#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace fusenet {

// std::mt19937_64 has a standardized output sequence; the std distributions do
// not, so the few transforms we need are written out here to keep seeded runs
// identical across standard libraries.
using Rng = std::mt19937_64;

inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

/// Index in [0, n) by multiply-shift.
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return static_cast<std::size_t>((static_cast<unsigned __int128>(rng()) * n) >> 64);
}

/// Irwin-Hall approximation of a standard normal (sum of 12 uniforms minus 6).
/// Arithmetic only, so it is bit-reproducible.
inline double approx_normal(Rng& rng) {
  double s = 0;
  for (int i = 0; i < 12; ++i) s += uniform01(rng);
  return s - 6.0;
}

/// Derives an independent stream seed from a base seed and a salt.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace fusenet
