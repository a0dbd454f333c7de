#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <utility>

namespace skinnet {

/// Seeded generator used for every stochastic choice in the pipeline.
///
/// Distributions are computed by hand from raw 64-bit draws rather than with
/// <random>'s distribution classes, whose output is implementation-defined.
/// That keeps shuffles, augmentation draws and dropout masks identical across
/// standard libraries for a given seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(mix(seed)) {}

  std::uint64_t seed() const noexcept { return seed_; }

  /// Independent child stream; same (seed, stream, index) gives the same child.
  Rng fork(std::string_view stream, std::uint64_t index = 0) const;

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n), unbiased (rejection sampling).
  std::uint64_t below(std::uint64_t n);

  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::span<T> items) {
    // Fisher-Yates, high index first.
    for (std::size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[below(i)]);
  }

  static std::uint64_t mix(std::uint64_t x);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace skinnet
