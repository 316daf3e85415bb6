#pragma once

#include <functional>
#include <string>

#include "puma/policy.hpp"

namespace puma {

// Score tables come either from the exact oracle or from a model's softmax;
// chain code never knows which.
using ScoreFn = std::function<PosteriorTable(const MaskedSequence&)>;

ScoreFn oracle_score_fn(const TabularDistribution& dist);
ScoreFn cached_oracle_score_fn(OracleCache& cache);

struct RevealEvent {
  int step;   // 1..K, the transition that produced states[step]
  int index;
  Token token;
};

struct Trajectory {
  int length = 0;
  int steps = 0;       // K
  int prompt_len = 0;  // prompt prefix, unmasked from step 0
  std::vector<MaskedSequence> states;  // K+1 entries
  std::vector<RevealEvent> events;
};

// Reveals x0's tokens at the positions in `reveal_set` (all currently
// masked); nothing is sampled.
MaskedSequence teacher_forced_step(const Vocab& vocab, const Sequence& x0,
                                   const MaskedSequence& z,
                                   const IndexSet& reveal_set);

// Progressive unmasking conditioned on x0: starts fully masked (prompt
// prefix preserved), selects positions with the policy over `scores` at each
// grid step, reveals ground-truth tokens. Once nothing is masked the
// remaining grid steps copy the state.
Trajectory run_teacher_forced_chain(const Vocab& vocab, const Sequence& x0,
                                    const ScoreFn& scores,
                                    const PolicySpec& policy, int steps,
                                    Rng& rng, int prompt_len = 0);

// Same loop, but revealed tokens are sampled from the exact unmasking
// posterior instead of copied from a clean sequence.
Trajectory run_idealized_inference(const TabularDistribution& dist,
                                   const PolicySpec& policy, int steps,
                                   Rng& rng, int prompt_len = 0);

// Model-driven generation: scores and sampled tokens both come from
// `scores` rows. With greedy=true tokens are argmax instead of sampled.
// The final grid step reveals every remaining masked position so the
// output is always clean.
Sequence run_learned_inference(const Vocab& vocab, const ScoreFn& scores,
                               const PolicySpec& policy, int steps, Rng& rng,
                               const Sequence& prompt = {}, int length = -1,
                               bool greedy = false);

// Per position: the step at which it was revealed (prompt positions: 0).
std::vector<int> unmask_step_map(const Trajectory& traj);

// Mean absolute difference of reveal steps: (1/L) sum_i |u1_i - u2_i|.
double trajectory_distance(const std::vector<int>& u1,
                           const std::vector<int>& u2);

// Line-based record: header "L,K,prompt_len" then one "step,index,token"
// line per event.
std::string serialize_trajectory(const Trajectory& traj);

}  // namespace puma
