#include "puma/policy.hpp"

#include <algorithm>
#include <cmath>

namespace puma {

std::string to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::MaxProb: return "max_prob";
    case PolicyKind::Margin: return "margin";
    case PolicyKind::NegEntropy: return "neg_entropy";
    case PolicyKind::Random: return "random";
    case PolicyKind::Positional: return "positional";
  }
  throw ContractViolation("unknown policy kind");
}

PolicyKind parse_policy_kind(const std::string& name) {
  if (name == "max_prob") return PolicyKind::MaxProb;
  if (name == "margin") return PolicyKind::Margin;
  if (name == "neg_entropy") return PolicyKind::NegEntropy;
  if (name == "random") return PolicyKind::Random;
  if (name == "positional") return PolicyKind::Positional;
  throw ContractViolation("unknown policy kind '" + name + "'");
}

void PolicySpec::validate(int length) const {
  if (count < 1) throw ContractViolation("policy: count must be >= 1");
  if (threshold && !(*threshold > 0.0 && *threshold <= 1.0))
    throw ContractViolation("policy: threshold must lie in (0,1]");
  if (block_size) {
    if (*block_size < 1 || length % *block_size != 0)
      throw ContractViolation("policy: block_size must divide L");
  }
}

double score(PolicyKind kind, const Categorical& c) {
  switch (kind) {
    case PolicyKind::MaxProb:
      return confidence(c);
    case PolicyKind::Margin: {
      if (c.probs.size() < 2) return 1.0;  // degenerate |V|=1
      double top1 = -1.0, top2 = -1.0;
      for (double p : c.probs) {
        if (p > top1) {
          top2 = top1;
          top1 = p;
        } else if (p > top2) {
          top2 = p;
        }
      }
      return top1 - top2;
    }
    case PolicyKind::NegEntropy: {
      double s = 0.0;
      for (double p : c.probs)
        if (p > 0.0) s += p * std::log(p);
      return s;
    }
    case PolicyKind::Random:
    case PolicyKind::Positional:
      throw ContractViolation("score: kind has no per-row score");
  }
  throw ContractViolation("unknown policy kind");
}

IndexSet block_restrict(int block_size, const Vocab& vocab,
                        const MaskedSequence& z) {
  const int length = static_cast<int>(z.size());
  if (block_size < 1 || length % block_size != 0)
    throw ContractViolation("block_restrict: block_size must divide L");
  for (int start = 0; start < length; start += block_size) {
    IndexSet in_block;
    for (int i = start; i < start + block_size; ++i)
      if (vocab.is_mask(z[static_cast<std::size_t>(i)])) in_block.push_back(i);
    if (!in_block.empty()) return in_block;
  }
  return {};
}

namespace {

IndexSet candidates_for(const PolicySpec& spec, const Vocab& vocab,
                        const MaskedSequence& z) {
  if (spec.block_size) return block_restrict(*spec.block_size, vocab, z);
  return masked_indices(vocab, z);
}

// Top `count` candidates by score with lowest-index tie-break.
IndexSet top_by_score(const IndexSet& candidates,
                      const std::vector<double>& scores, int count) {
  std::vector<std::size_t> order(candidates.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return candidates[a] < candidates[b];
  });
  const std::size_t take =
      std::min<std::size_t>(static_cast<std::size_t>(count), order.size());
  IndexSet out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back(candidates[order[i]]);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

IndexSet select(const PolicySpec& spec, const PosteriorTable& table,
                const MaskedSequence& z, const Vocab& vocab, int count,
                Rng* rng) {
  if (count < 1) throw ContractViolation("select: count must be >= 1");
  IndexSet candidates = candidates_for(spec, vocab, z);
  if (candidates.empty())
    throw ContractViolation("select: no masked candidate positions");

  switch (spec.kind) {
    case PolicyKind::Positional: {
      const std::size_t take =
          std::min<std::size_t>(static_cast<std::size_t>(count), candidates.size());
      return IndexSet(candidates.begin(),
                      candidates.begin() + static_cast<std::ptrdiff_t>(take));
    }
    case PolicyKind::Random: {
      if (rng == nullptr)
        throw ContractViolation("select: random policy needs an rng");
      // Partial Fisher-Yates: uniform count-subset of the candidates.
      IndexSet pool = candidates;
      const std::size_t take =
          std::min<std::size_t>(static_cast<std::size_t>(count), pool.size());
      for (std::size_t i = 0; i < take; ++i) {
        const std::size_t j =
            i + static_cast<std::size_t>(rng->below(pool.size() - i));
        std::swap(pool[i], pool[j]);
      }
      IndexSet out(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(take));
      std::sort(out.begin(), out.end());
      return out;
    }
    default: {
      std::vector<double> scores(candidates.size());
      for (std::size_t i = 0; i < candidates.size(); ++i)
        scores[i] = score(spec.kind, table.row_for(candidates[i]));
      return top_by_score(candidates, scores, count);
    }
  }
}

IndexSet threshold_augment(const IndexSet& selected, const PosteriorTable& table,
                           const MaskedSequence& z, const Vocab& vocab,
                           double tau, std::optional<int> block_size) {
  if (!(tau > 0.0 && tau <= 1.0))
    throw ContractViolation("threshold_augment: tau must lie in (0,1]");
  IndexSet candidates = block_size ? block_restrict(*block_size, vocab, z)
                                   : masked_indices(vocab, z);
  IndexSet out = selected;
  for (int i : candidates) {
    if (std::find(out.begin(), out.end(), i) != out.end()) continue;
    if (confidence(table.row_for(i)) > tau) out.push_back(i);
  }
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

void k_subsets(const IndexSet& candidates, std::size_t k, std::size_t start,
               IndexSet& current, std::vector<IndexSet>& out) {
  if (current.size() == k) {
    out.push_back(current);
    return;
  }
  for (std::size_t i = start; i < candidates.size(); ++i) {
    current.push_back(candidates[i]);
    k_subsets(candidates, k, i + 1, current, out);
    current.pop_back();
  }
}

}  // namespace

std::vector<std::pair<IndexSet, double>> enumerate_selections(
    const PolicySpec& spec, const PosteriorTable& table,
    const MaskedSequence& z, const Vocab& vocab, int count) {
  if (spec.kind == PolicyKind::Random) {
    IndexSet candidates = candidates_for(spec, vocab, z);
    if (candidates.empty())
      throw ContractViolation("enumerate_selections: no candidates");
    const std::size_t take =
        std::min<std::size_t>(static_cast<std::size_t>(count), candidates.size());
    std::vector<IndexSet> subsets;
    IndexSet current;
    k_subsets(candidates, take, 0, current, subsets);
    std::vector<std::pair<IndexSet, double>> out;
    out.reserve(subsets.size());
    const double p = 1.0 / static_cast<double>(subsets.size());
    for (auto& s : subsets) out.emplace_back(std::move(s), p);
    return out;
  }
  return {{select(spec, table, z, vocab, count, nullptr), 1.0}};
}

}  // namespace puma
