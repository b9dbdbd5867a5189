#pragma once

#include <cstdint>
#include <random>

#include "trajdiffuse/core.hpp"

namespace trajdiffuse {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; used to derive independent per-stream seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for stream `stream` of a run seeded with `seed`.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return mix_seed(mix_seed(seed) ^ mix_seed(stream + 0x632be59bd9b4e019ULL));
}

inline void fill_normal(TrajBatch& b, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& v : b.data()) v = n(rng);
}

inline TrajBatch normal_like(const TrajBatch& shape, Rng& rng) {
  TrajBatch out(shape.k(), shape.t_obs(), shape.t_pred());
  fill_normal(out, rng);
  return out;
}

}  // namespace trajdiffuse
