// Copyright (c) 2026 The streamkv Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

namespace streamkv {

// splitmix64. Every random draw in the library (weights, traces, embedder
// projections) goes through this generator so that runs are bit-identical
// across platforms and standard-library versions. std::* distributions are
// deliberately avoided: their output is implementation-defined.
class SplitMix64 {
public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53 bits of mantissa.
  double next_double() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double next_in(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Uniform integer in [0, n). Modulo bias is < 2^-32 for the n used here.
  std::uint64_t next_below(std::uint64_t n) { return n == 0 ? 0 : next() % n; }

private:
  std::uint64_t state_;
};

// Derives an independent stream from (seed, tag). Used to give each weight
// tensor, trace section and embedder its own substream of one user seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
  SplitMix64 g(seed ^ (0x9e3779b97f4a7c15ull * (tag + 1)));
  return g.next();
}

} // namespace streamkv
