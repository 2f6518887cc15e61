#pragma once

#include <cstdint>
#include <random>

namespace veriseal {

/// Random source with two modes. Seeded instances are mt19937_64 streams and
/// reproduce bit-identically on every platform (the distribution functions
/// below are hand-rolled, not std::*_distribution, for that reason). Default
/// construction pulls every word from the OS entropy pool, which is the mode
/// production secrets are generated in.
class Rng {
 public:
  Rng() : system_(true) {}
  explicit Rng(std::uint64_t seed) : system_(false), engine_(seed) {}

  std::uint64_t next_u64();

  /// Unbiased integer in [0, n). Rejection sampling, n >= 1.
  std::uint64_t uniform_index(std::uint64_t n);

  /// Uniform double in [0, 1).
  double uniform01();

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Standard normal via Box-Muller.
  double normal();
  double normal(double sigma) { return sigma * normal(); }

  bool seeded() const { return !system_; }

  /// Derives an independent deterministic stream; splitmix64-style mixing so
  /// neighboring (seed, index) pairs land far apart.
  static std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

 private:
  bool system_;
  std::mt19937_64 engine_;
  std::random_device device_;
};

}  // namespace veriseal
