#include "puma/oracle.hpp"

#include <algorithm>
#include <cmath>

namespace puma {

double confidence(const Categorical& c) {
  if (c.probs.empty()) throw ContractViolation("confidence: empty categorical");
  return *std::max_element(c.probs.begin(), c.probs.end());
}

const Categorical& PosteriorTable::row_for(int i) const {
  auto it = std::lower_bound(indices.begin(), indices.end(), i);
  if (it == indices.end() || *it != i)
    throw ContractViolation("PosteriorTable: no row for index " +
                            std::to_string(i));
  return rows[static_cast<std::size_t>(it - indices.begin())];
}

namespace {

bool consistent(const Vocab& vocab, const MaskedSequence& z,
                const Sequence& x0) {
  for (std::size_t p = 0; p < z.size(); ++p)
    if (!vocab.is_mask(z[p]) && z[p] != x0[p]) return false;
  return true;
}

}  // namespace

Categorical exact_posterior(const TabularDistribution& dist,
                            const MaskedSequence& z, int i) {
  if (static_cast<int>(z.size()) != dist.length)
    throw ContractViolation("exact_posterior: context length mismatch");
  if (i < 0 || i >= dist.length || !dist.vocab.is_mask(z[static_cast<std::size_t>(i)]))
    throw ContractViolation("exact_posterior: index " + std::to_string(i) +
                            " is not masked");

  Categorical out;
  out.probs.assign(static_cast<std::size_t>(dist.vocab.size), 0.0);
  double total = 0.0;
  for (std::size_t s = 0; s < dist.size(); ++s) {
    const Sequence& x0 = dist.sequences[s];
    if (!consistent(dist.vocab, z, x0)) continue;
    out.probs[static_cast<std::size_t>(x0[static_cast<std::size_t>(i)])] +=
        dist.probs[s];
    total += dist.probs[s];
  }
  if (total <= 0.0)
    throw ImpossibleContext("context consistent with no support sequence");
  for (double& p : out.probs) p /= total;
  return out;
}

PosteriorTable posterior_table(const TabularDistribution& dist,
                               const MaskedSequence& z) {
  if (static_cast<int>(z.size()) != dist.length)
    throw ContractViolation("posterior_table: context length mismatch");

  PosteriorTable table;
  table.indices = masked_indices(dist.vocab, z);
  if (table.indices.empty()) return table;

  // One pass over the support fills every masked row; renormalize at the end.
  table.rows.assign(table.indices.size(), Categorical{std::vector<double>(
                                              static_cast<std::size_t>(
                                                  dist.vocab.size),
                                              0.0)});
  double total = 0.0;
  for (std::size_t s = 0; s < dist.size(); ++s) {
    const Sequence& x0 = dist.sequences[s];
    if (!consistent(dist.vocab, z, x0)) continue;
    total += dist.probs[s];
    for (std::size_t r = 0; r < table.indices.size(); ++r) {
      const int i = table.indices[r];
      table.rows[r].probs[static_cast<std::size_t>(
          x0[static_cast<std::size_t>(i)])] += dist.probs[s];
    }
  }
  if (total <= 0.0)
    throw ImpossibleContext("context consistent with no support sequence");
  for (auto& row : table.rows)
    for (double& p : row.probs) p /= total;
  return table;
}

const PosteriorTable& OracleCache::table(const MaskedSequence& z) {
  const std::uint64_t key = context_key(dist_->vocab, z);
  auto it = memo_.find(key);
  if (it != memo_.end()) return it->second;
  return memo_.emplace(key, posterior_table(*dist_, z)).first->second;
}

}  // namespace puma
