#pragma once

#include <unordered_map>
#include <vector>

#include "puma/dist.hpp"

namespace puma {

struct Categorical {
  std::vector<double> probs;  // |V| entries, sums to 1 +- 1e-12
};

// max_v c(v): the confidence score used by the max-prob policy and by
// threshold fast-forwarding.
double confidence(const Categorical& c);

// Per-masked-index posteriors of one context z. Rows exist exactly for
// msk(z), in ascending index order.
struct PosteriorTable {
  IndexSet indices;
  std::vector<Categorical> rows;

  bool empty() const { return indices.empty(); }
  std::size_t size() const { return indices.size(); }
  // Row for masked position i; throws when i has no row.
  const Categorical& row_for(int i) const;
};

// Exact unmasking posterior P(x0^i = . | x0 agrees with z on um(z)), computed
// by filtering the enumerated support and renormalizing. Depends only on z
// (never on a time value): the forward process's time-agnosticism is baked
// into the API.
Categorical exact_posterior(const TabularDistribution& dist,
                            const MaskedSequence& z, int i);

PosteriorTable posterior_table(const TabularDistribution& dist,
                               const MaskedSequence& z);

// Memoizing wrapper around posterior_table; chains over small state spaces
// revisit the same contexts constantly.
class OracleCache {
 public:
  explicit OracleCache(const TabularDistribution& dist) : dist_(&dist) {}

  const PosteriorTable& table(const MaskedSequence& z);

 private:
  const TabularDistribution* dist_;
  std::unordered_map<std::uint64_t, PosteriorTable> memo_;
};

}  // namespace puma
