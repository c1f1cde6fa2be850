#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace dgd {

/// Deterministic random source.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard. Distributions are implemented here rather than through
/// <random>'s distribution classes, whose algorithms are left to the library
/// vendor:
///   uniform  = top 53 bits of one engine output scaled by 2^-53, in [0, 1)
///   normal   = Box-Muller on two uniforms, the second variate is cached
///   gamma    = Marsaglia-Tsang squeeze (shape < 1 boosted by U^(1/shape))
///   beta     = X / (X + Y) with X, Y gamma-distributed
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed = 0);

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n). Rejection sampling keeps it unbiased.
  std::uint64_t below(std::uint64_t n);
  double normal();
  double gamma(double shape);
  double beta(double a, double b);

  /// Independent stream keyed by this generator's seed and the given tags.
  /// Does not advance this generator.
  SeededRng fork(std::initializer_list<std::uint64_t> tags) const;

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// SplitMix64 finalizer folded over `tags`, starting from `seed`.
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> tags);

}  // namespace dgd
