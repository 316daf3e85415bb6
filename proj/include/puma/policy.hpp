#pragma once

#include <optional>
#include <string>

#include "puma/oracle.hpp"

namespace puma {

enum class PolicyKind { MaxProb, Margin, NegEntropy, Random, Positional };

// Config-file spellings: max_prob, margin, neg_entropy, random, positional.
std::string to_string(PolicyKind kind);
PolicyKind parse_policy_kind(const std::string& name);

struct PolicySpec {
  PolicyKind kind = PolicyKind::MaxProb;
  int count = 1;                      // |S| per step unless a caller supplies one
  std::optional<double> threshold;    // tau in (0,1]: confidence fast-forward
  std::optional<int> block_size;      // restricts candidates block-wise

  bool operator==(const PolicySpec&) const = default;

  void validate(int length) const;
};

// Confidence score of one posterior row. Random and Positional kinds do not
// score rows; they are resolved inside select().
double score(PolicyKind kind, const Categorical& c);

// Candidate masked indices restricted to the lowest-index block that still
// contains a mask. block_size must divide the sequence length.
IndexSet block_restrict(int block_size, const Vocab& vocab,
                        const MaskedSequence& z);

// Top-`count` masked positions by score, ties broken by lowest index; the
// result is sorted ascending and clamped to the number of masked positions.
// Random draws a uniform subset (needs rng); Positional takes the lowest
// masked indices. Honors spec.block_size when set.
IndexSet select(const PolicySpec& spec, const PosteriorTable& table,
                const MaskedSequence& z, const Vocab& vocab, int count,
                Rng* rng = nullptr);

// Union of `selected` with every candidate index whose max-prob confidence
// exceeds tau. Candidates follow the same block restriction as select().
IndexSet threshold_augment(const IndexSet& selected, const PosteriorTable& table,
                           const MaskedSequence& z, const Vocab& vocab,
                           double tau,
                           std::optional<int> block_size = std::nullopt);

// All possible outputs of select() with their probabilities, for exact DP
// over stochastic policies. Deterministic kinds yield a single entry; Random
// enumerates every count-subset of the candidates uniformly.
std::vector<std::pair<IndexSet, double>> enumerate_selections(
    const PolicySpec& spec, const PosteriorTable& table,
    const MaskedSequence& z, const Vocab& vocab, int count);

}  // namespace puma
