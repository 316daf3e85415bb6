#include "puma/chains.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace puma {

ScoreFn oracle_score_fn(const TabularDistribution& dist) {
  return [&dist](const MaskedSequence& z) { return posterior_table(dist, z); };
}

ScoreFn cached_oracle_score_fn(OracleCache& cache) {
  return [&cache](const MaskedSequence& z) { return cache.table(z); };
}

MaskedSequence teacher_forced_step(const Vocab& vocab, const Sequence& x0,
                                   const MaskedSequence& z,
                                   const IndexSet& reveal_set) {
  if (x0.size() != z.size())
    throw ContractViolation("teacher_forced_step: length mismatch");
  MaskedSequence out = z;
  for (int i : reveal_set) {
    if (i < 0 || i >= static_cast<int>(z.size()))
      throw ContractViolation("teacher_forced_step: index out of range");
    if (!vocab.is_mask(out[static_cast<std::size_t>(i)]))
      throw ContractViolation("teacher_forced_step: reveal set overlaps um(z)");
    out[static_cast<std::size_t>(i)] = x0[static_cast<std::size_t>(i)];
  }
  return out;
}

namespace {

MaskedSequence initial_state(const Vocab& vocab, int length,
                             const Sequence* clean, int prompt_len) {
  if (prompt_len < 0 || prompt_len > length)
    throw ContractViolation("chain: prompt_len out of range");
  MaskedSequence z(static_cast<std::size_t>(length), vocab.mask());
  for (int i = 0; i < prompt_len; ++i)
    z[static_cast<std::size_t>(i)] = (*clean)[static_cast<std::size_t>(i)];
  return z;
}

Token sample_row(const Categorical& row, Rng& rng, bool greedy) {
  if (greedy) {
    return static_cast<Token>(std::max_element(row.probs.begin(),
                                               row.probs.end()) -
                              row.probs.begin());
  }
  return static_cast<Token>(rng.categorical(row.probs));
}

}  // namespace

Trajectory run_teacher_forced_chain(const Vocab& vocab, const Sequence& x0,
                                    const ScoreFn& scores,
                                    const PolicySpec& policy, int steps,
                                    Rng& rng, int prompt_len) {
  if (steps < 1) throw ContractViolation("chain: K must be >= 1");
  Trajectory traj;
  traj.length = static_cast<int>(x0.size());
  traj.steps = steps;
  traj.prompt_len = prompt_len;
  traj.states.reserve(static_cast<std::size_t>(steps) + 1);
  traj.states.push_back(initial_state(vocab, traj.length, &x0, prompt_len));

  for (int j = 1; j <= steps; ++j) {
    const MaskedSequence& z = traj.states.back();
    if (fully_unmasked(vocab, z)) {
      traj.states.push_back(z);
      continue;
    }
    PosteriorTable table = scores(z);
    IndexSet reveal = select(policy, table, z, vocab, policy.count, &rng);
    if (policy.threshold)
      reveal = threshold_augment(reveal, table, z, vocab, *policy.threshold,
                                 policy.block_size);
    for (int i : reveal)
      traj.events.push_back({j, i, x0[static_cast<std::size_t>(i)]});
    traj.states.push_back(teacher_forced_step(vocab, x0, z, reveal));
  }
  return traj;
}

Trajectory run_idealized_inference(const TabularDistribution& dist,
                                   const PolicySpec& policy, int steps,
                                   Rng& rng, int prompt_len) {
  if (steps < 1) throw ContractViolation("chain: K must be >= 1");
  if (prompt_len != 0)
    throw ContractViolation(
        "run_idealized_inference: prompts require a conditioning context");
  Trajectory traj;
  traj.length = dist.length;
  traj.steps = steps;
  traj.prompt_len = 0;
  traj.states.reserve(static_cast<std::size_t>(steps) + 1);
  traj.states.push_back(
      MaskedSequence(static_cast<std::size_t>(dist.length), dist.vocab.mask()));

  for (int j = 1; j <= steps; ++j) {
    const MaskedSequence z = traj.states.back();
    if (fully_unmasked(dist.vocab, z)) {
      traj.states.push_back(z);
      continue;
    }
    PosteriorTable table = posterior_table(dist, z);
    IndexSet reveal = select(policy, table, z, dist.vocab, policy.count, &rng);
    if (policy.threshold)
      reveal = threshold_augment(reveal, table, z, dist.vocab,
                                 *policy.threshold, policy.block_size);
    // Each selected position draws independently from its own posterior row;
    // cross-position dependence is deliberately ignored, as at inference.
    MaskedSequence next = z;
    for (int i : reveal) {
      const Token v = sample_row(table.row_for(i), rng, /*greedy=*/false);
      next = apply_reveal(dist.vocab, next, i, v);
      traj.events.push_back({j, i, v});
    }
    traj.states.push_back(std::move(next));
  }
  return traj;
}

Sequence run_learned_inference(const Vocab& vocab, const ScoreFn& scores,
                               const PolicySpec& policy, int steps, Rng& rng,
                               const Sequence& prompt, int length,
                               bool greedy) {
  if (steps < 1) throw ContractViolation("chain: K must be >= 1");
  if (length < 0) length = static_cast<int>(prompt.size());
  if (length < 1 || static_cast<int>(prompt.size()) > length)
    throw ContractViolation("run_learned_inference: bad length/prompt");

  MaskedSequence z(static_cast<std::size_t>(length), vocab.mask());
  for (std::size_t i = 0; i < prompt.size(); ++i) z[i] = prompt[i];

  for (int j = 1; j <= steps; ++j) {
    if (fully_unmasked(vocab, z)) break;
    PosteriorTable table = scores(z);
    IndexSet reveal;
    if (j == steps) {
      reveal = masked_indices(vocab, z);  // t_K = 0: everything comes out
    } else {
      reveal = select(policy, table, z, vocab, policy.count, &rng);
      if (policy.threshold)
        reveal = threshold_augment(reveal, table, z, vocab, *policy.threshold,
                                   policy.block_size);
    }
    for (int i : reveal) {
      const Token v = sample_row(table.row_for(i), rng, greedy);
      z[static_cast<std::size_t>(i)] = v;
    }
  }
  return Sequence(z.begin(), z.end());
}

std::vector<int> unmask_step_map(const Trajectory& traj) {
  std::vector<int> map(static_cast<std::size_t>(traj.length), -1);
  for (int i = 0; i < traj.prompt_len; ++i) map[static_cast<std::size_t>(i)] = 0;
  for (const RevealEvent& e : traj.events)
    map[static_cast<std::size_t>(e.index)] = e.step;
  for (int u : map)
    if (u < 0)
      throw ContractViolation(
          "unmask_step_map: trajectory left positions unrevealed");
  return map;
}

double trajectory_distance(const std::vector<int>& u1,
                           const std::vector<int>& u2) {
  if (u1.size() != u2.size() || u1.empty())
    throw ContractViolation("trajectory_distance: length mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < u1.size(); ++i)
    total += std::abs(u1[i] - u2[i]);
  return total / static_cast<double>(u1.size());
}

std::string serialize_trajectory(const Trajectory& traj) {
  std::ostringstream out;
  out << traj.length << ',' << traj.steps << ',' << traj.prompt_len << '\n';
  for (const RevealEvent& e : traj.events)
    out << e.step << ',' << e.index << ',' << e.token << '\n';
  return out.str();
}

}  // namespace puma
