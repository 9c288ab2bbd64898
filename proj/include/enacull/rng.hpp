#pragma once

// Portable seeded random streams.
//
// Engine: std::mt19937_64 (output sequence fixed by the C++ standard), seeded with
// derive_seed(seed, stream). derive_seed mixes both words through SplitMix64, so
// independent streams can be split off for each arc, tree or sampling step.
// Every distribution below is implemented here rather than taken from <random>,
// whose distributions are implementation-defined.

#include <cstdint>
#include <random>

namespace enacull {

std::uint64_t splitmix64(std::uint64_t x);

/// Seed for sub-stream `stream` of `seed`.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t seed, std::uint64_t stream) : engine_(derive_seed(seed, stream)) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer on [0, n); n must be positive. Lemire's multiply-shift with rejection.
  std::uint64_t below(std::uint64_t n);

  /// Poisson variate. Knuth's product method for mean < 30, Hormann's PTRS above.
  std::int64_t poisson(double mean);

 private:
  std::mt19937_64 engine_;
};

}  // namespace enacull
