#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace maeday {

// Deterministic random stream. The engine is std::mt19937_64, whose output
// sequence is fixed by the standard; every distribution below is computed
// here rather than through <random> distributions, which are not portable.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  // Independent stream for a (seed, index) pair, via a splitmix64 mix.
  static Rng derive(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n); unbiased by rejection.
  std::size_t below(std::size_t n);
  // Standard normal via Box-Muller (one value per call).
  double normal();
  // Normal(0, sigma) resampled until inside [-2 sigma, 2 sigma].
  double truncated_normal(double sigma);

  // First k entries of a uniform random permutation of [0, n).
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace maeday
