#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "puma/rng.hpp"

namespace puma {

// Caller broke a documented precondition.
struct ContractViolation : std::logic_error {
  using std::logic_error::logic_error;
};

// A masked context that no support sequence is consistent with. Raised by the
// exact-posterior oracle instead of falling back to a uniform row; a silent
// fallback would hide teacher-forced-chain bugs.
struct ImpossibleContext : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Exact dynamic programming refused to run; callers should switch to Monte
// Carlo estimation.
struct StateSpaceTooLarge : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Token = std::int32_t;

// Clean sequence: entries in [0, |V|).
using Sequence = std::vector<Token>;

// Partially masked sequence: entries in [0, |V|]; the value |V| is the mask.
using MaskedSequence = std::vector<Token>;

using IndexSet = std::vector<int>;  // always sorted ascending

// Token ids are dense integers 0..size-1. The mask is the sentinel `size`,
// one past the vocabulary, so a masked sequence over vocab size m is a
// base-(m+1) numeral; context keys and exact enumeration fall out of that.
struct Vocab {
  int size = 0;

  explicit Vocab(int s = 0) : size(s) {
    if (s < 2) throw ContractViolation("Vocab: |V| must be >= 2");
  }

  Token mask() const { return size; }
  bool is_token(Token v) const { return v >= 0 && v < size; }
  bool is_mask(Token v) const { return v == size; }
};

// True when the base-(|V|+1) encoding of a length-L sequence fits in 64 bits.
bool key_space_fits(const Vocab& vocab, int length);

// Base-(|V|+1) numeral of z, position 0 most significant. Requires
// key_space_fits; used as the context key for tabular models and DP states.
std::uint64_t context_key(const Vocab& vocab, const MaskedSequence& z);
MaskedSequence key_to_state(const Vocab& vocab, int length, std::uint64_t key);

void validate_sequence(const Vocab& vocab, const Sequence& x);
void validate_masked(const Vocab& vocab, const MaskedSequence& z);

struct Partition {
  IndexSet unmasked;
  IndexSet masked;
};

// um(z) / msk(z), both sorted ascending so downstream tie-breaking is
// deterministic.
Partition partition_indices(const Vocab& vocab, const MaskedSequence& z);

IndexSet masked_indices(const Vocab& vocab, const MaskedSequence& z);
int count_unmasked(const Vocab& vocab, const MaskedSequence& z);
bool fully_masked(const Vocab& vocab, const MaskedSequence& z);
bool fully_unmasked(const Vocab& vocab, const MaskedSequence& z);

// Copy of z with position i (currently masked) set to token v.
MaskedSequence apply_reveal(const Vocab& vocab, const MaskedSequence& z, int i,
                            Token v);

// Independently masks each position of x0 with probability t.
MaskedSequence iid_mask(const Vocab& vocab, const Sequence& x0, double t,
                        Rng& rng);

// (1-t)^|um(z)| * t^(L-|um(z)|) if z agrees with x0 on um(z), else 0.
double pattern_probability(const Vocab& vocab, const MaskedSequence& z,
                           const Sequence& x0, double t);

// Inference grid t_j = 1 - j/K, j = 0..K.
struct TimeGrid {
  int steps;  // K

  explicit TimeGrid(int k) : steps(k) {
    if (k < 1) throw ContractViolation("TimeGrid: K must be >= 1");
  }

  double time(int j) const { return 1.0 - static_cast<double>(j) / steps; }
};

}  // namespace puma
