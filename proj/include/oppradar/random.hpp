// SPDX-License-Identifier: Apache-2.0
//
// Reproducible per-trial random streams.

#pragma once

#include <cstdint>
#include <random>

#include "oppradar/types.hpp"

namespace oppradar {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed of stream `index` derived from a campaign seed. Streams are
/// independent of the worker that consumes them.
inline std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(splitmix64(seed) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

inline Rng make_stream(std::uint64_t seed, std::uint64_t index) {
  return Rng(stream_seed(seed, index));
}

/// Circularly-symmetric complex Gaussian with unit variance.
inline cdouble complex_normal(Rng& rng) {
  std::normal_distribution<double> n(0.0, std::sqrt(0.5));
  const double re = n(rng);
  return {re, n(rng)};
}

}  // namespace oppradar
