#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace puma {

// Deterministic seeded randomness. All draws go through hand-rolled
// transformations of mt19937_64 output so that results are bit-identical
// across platforms and standard-library implementations (std::*_distribution
// is implementation-defined and must not be used anywhere in this codebase).
//
// Stream derivation: every component derives its own stream as
//   Rng::stream(master_seed, tag, index)
// where `tag` names the component ("train", "complexity/random-masking", ...)
// and `index` separates parallel instances (seed index, chain id, ...).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  static Rng stream(std::uint64_t master_seed, std::string_view tag,
                    std::uint64_t index);

  std::uint64_t next_u64() { return gen_(); }

  // Uniform double in [0, 1), 53 random bits.
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Rejection sampling, no modulo bias.
  std::uint64_t below(std::uint64_t n);

  bool bernoulli(double p) { return uniform() < p; }

  // Index draw from an explicit probability vector (CDF scan). The vector
  // must sum to ~1; any trailing mass from rounding goes to the last entry.
  std::size_t categorical(std::span<const double> probs);

 private:
  std::mt19937_64 gen_;
};

// 64-bit FNV-1a, used only for turning stream tags into seed material.
std::uint64_t fnv1a64(std::string_view s);

// SplitMix64 finalizer; decorrelates structured seed inputs.
std::uint64_t split_mix64(std::uint64_t x);

}  // namespace puma
