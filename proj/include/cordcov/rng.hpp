#pragma once

#include <cstdint>
#include <random>

namespace cordcov {

// splitmix64 step; used to decorrelate derived seeds.
inline std::uint64_t mix_seed(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Independent stream for replicate `index` of a run seeded with `seed`.
// Results are identical no matter how replicates are scheduled.
inline std::mt19937_64 substream(std::uint64_t seed, std::uint64_t index) {
  return std::mt19937_64(mix_seed(mix_seed(seed) ^ (index + 1)));
}

inline double draw_gaussian(std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, 1.0);
  return d(rng);
}

inline double draw_uniform(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(0.0, 1.0);
  return d(rng);
}

}  // namespace cordcov
