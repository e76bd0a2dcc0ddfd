// Copyright (c) 2026 The fragdiff authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "fragdiff/types.hpp"

namespace fragdiff {

/// SplitMix64 finalizer; used to spawn independent per-task seeds from one
/// master seed (counter-mode splitting).
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed of the `index`-th derived stream of `master`.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(master ^ splitmix64(index + 1));
}

/// Uniform integer in [0, n) from a raw 64-bit draw, without modulo bias
/// (fixed-point multiply; n is tiny compared to 2^64 so the bias of the
/// truncated variant is negligible and the draw count is constant).
inline std::uint64_t bounded_uniform(std::uint64_t raw, std::uint64_t n) {
  return static_cast<std::uint64_t>(
      (static_cast<unsigned __int128>(raw) * n) >> 64);
}

/// Seeded random stream with a fixed draw discipline: every normal() consumes
/// exactly two engine draws, so seed-derived streams stay aligned regardless
/// of platform library details.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t raw() { return engine_(); }

  /// Uniform double in [0, 1).
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller (two uniforms per value, no cached spare).
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  Vec3 normal3() { return Vec3(normal(), normal(), normal()); }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace fragdiff
