#pragma once

#include <cstdint>
#include <random>

namespace ltts {

// SplitMix64 step. Used to derive independent per-item seeds from a master
// seed so that generation order (or parallelism) cannot change the result.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(seed + 0x632BE59BD9B4E019ULL * (stream + 1));
}

using Rng = std::mt19937_64;

}  // namespace ltts
