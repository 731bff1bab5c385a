#pragma once

#include <cstdint>
#include <random>

#include "asam/linalg.hpp"

namespace asam {

using Rng = std::mt19937_64;

/// splitmix64 finalizer over (seed, stream); used to derive independent
/// sub-seeds for per-variant, per-step and per-edit randomness.
inline std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t x = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline Vector gaussian_vector(Rng& rng, Eigen::Index n, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = dist(rng);
  return v;
}

inline Vector uniform_vector(Rng& rng, Eigen::Index n, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = dist(rng);
  return v;
}

/// Uniformly distributed direction on the unit l2 sphere.
inline Vector random_unit_vector(Rng& rng, Eigen::Index n) {
  for (;;) {
    Vector v = gaussian_vector(rng, n);
    const double norm = v.norm();
    if (norm > 1e-12) return v / norm;
  }
}

}  // namespace asam
