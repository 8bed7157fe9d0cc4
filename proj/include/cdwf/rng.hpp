// Copyright (c) 2026, The CDWF Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace cdwf {

/// Tags separating independent random streams derived from the same (seed, id).
enum class StreamTag : std::uint32_t {
  Condition = 1,
  SensorNoise = 2,
  AttackBias = 3,
  AttackDrift = 4,
  AttackSpike = 5,
  Split = 6,
  Shuffle = 7,
  Init = 8,
  Lora = 9,
};

/// Counter-style substream: the generator state is a pure function of
/// (seed, id, tag), so draws never depend on generation order or thread count.
///
/// Only the engine comes from <random> (its output sequence is fixed by the
/// standard); the distributions below are written out so results are
/// bit-identical across standard library implementations.
class Substream {
 public:
  Substream(std::uint64_t seed, std::uint64_t id, StreamTag tag) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(id), static_cast<std::uint32_t>(id >> 32),
                      static_cast<std::uint32_t>(tag)};
    engine_.seed(seq);
  }

  std::uint64_t next() { return engine_(); }

  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer on the closed range [lo, hi]; rejection sampling, no modulo bias.
  std::uint64_t uniform_int(std::uint64_t lo, std::uint64_t hi) {
    const std::uint64_t span = hi - lo;
    if (span == ~std::uint64_t{0}) return next();
    const std::uint64_t range = span + 1;
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % range);
    std::uint64_t x = next();
    while (x >= limit) x = next();
    return lo + x % range;
  }

  /// Standard normal via Box-Muller (one value per call).
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mean, double sigma) { return mean + sigma * normal(); }

  /// Fair coin: +1 or -1.
  int sign() { return (next() >> 63) ? 1 : -1; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace cdwf
