#pragma once

#include <cstdint>
#include <random>

namespace m2a {

/// Deterministic random stream. The core generator is mt19937-64 (fully
/// specified by the standard) and all value transforms are implemented here
/// rather than via std:: distributions, so identical seeds produce identical
/// sequences on every platform and standard library.
class Rng {
 public:
  static constexpr const char* algorithm = "mt19937-64";

  explicit Rng(std::uint64_t seed) : gen_(seed), seed_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64() { return gen_(); }

  /// Uniform in [0, 1) with 53 bits of mantissa.
  double uniform();
  /// Uniform in [lo, hi).
  double uniform(double lo, double hi);
  /// Standard normal via Box-Muller (pairs cached).
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  /// Uniform integer in [lo, hi] inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

  /// Derive an independent stream. Forking does not advance this generator,
  /// so the same (seed, stream) pair always names the same stream.
  Rng fork(std::uint64_t stream) const;

 private:
  std::mt19937_64 gen_;
  std::uint64_t seed_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace m2a
