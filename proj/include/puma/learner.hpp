#pragma once

#include <iosfwd>
#include <optional>
#include <unordered_map>

#include "puma/chains.hpp"

namespace puma {

// Per-context logit table realizing f_theta. Contexts are keyed by their
// base-(|V|+1) encoding; a context never written reads as all-zero logits,
// i.e. a uniform softmax. Rows are stored dense (L x |V| per context) but
// only masked positions are ever read or updated.
struct TabularMDM {
  int length = 0;
  Vocab vocab{2};
  double learning_rate = 0.1;
  std::unordered_map<std::uint64_t, std::vector<double>> logits;

  TabularMDM() = default;
  TabularMDM(int length_, Vocab vocab_, double lr = 0.1);

  // Softmax rows for the masked positions of z. Counts as one forward pass.
  PosteriorTable forward(const MaskedSequence& z) const;

  std::uint64_t forward_calls() const { return forward_calls_; }

  // Logit row view for (context, position); zeros when absent.
  std::vector<double> logit_row(const MaskedSequence& z, int position) const;

 private:
  mutable std::uint64_t forward_calls_ = 0;
};

struct GradRow {
  std::uint64_t key;
  int position;
  std::vector<double> values;  // |V| entries
};

// Rows accumulate additively: appending two rows for the same (key, position)
// is the same as summing them before the update.
using Gradients = std::vector<GradRow>;

// Mean over masked positions of -log softmax(logits[z][i])[x0^i], and the
// matching closed-form gradient rows (softmax - onehot) / |msk(z)|.
// No 1/t weighting: the minimizer is the true conditional for any
// state-measurable weight, and teacher-forced states carry no natural t.
std::pair<double, Gradients> loss_and_grad(const TabularMDM& model,
                                           const MaskedSequence& z,
                                           const Sequence& x0);

// Same computation from an already-computed forward table, so trainers can
// reuse one forward pass for both the loss and the policy scores.
double loss_and_grad_from_table(const PosteriorTable& table, const Vocab& vocab,
                                const MaskedSequence& z, const Sequence& x0,
                                Gradients& grads);

// logits <- logits - lr * grad, touched rows only; one optimizer step.
void sgd_update(TabularMDM& model, const Gradients& grads);

// One vanilla MDM step: x0 ~ dist, t ~ Unif[0,1], z = iid_mask; resamples
// until z has at least one mask; gradient step on that single example.
double vanilla_train_step(TabularMDM& model, const TabularDistribution& dist,
                          Rng& rng);

// Batch variant: B independent samples, gradients summed, one update.
double vanilla_train_batch(TabularMDM& model, const TabularDistribution& dist,
                           int batch, Rng& rng);

// Stage n of a state whose non-prompt unmasked count is `unmasked`:
// the bracket [l_eff*n/K, l_eff*(n+1)/K] containing it, boundaries assigned
// to the lower stage, full unmask pinned to stage K.
int stage_of(int unmasked, int l_eff, int k);
int stage_of(const Vocab& vocab, const MaskedSequence& z, int prompt_len,
             int k);

// Stochastic per-step reveal count: r ~ Unif[(n+1)/K, (n+2)/K] clamped to 1,
// dU = max(1, round(l_eff*r) - unmasked), clamped to the remaining masks.
int next_reveal_count(int unmasked, int stage, int k, int l_eff, Rng& rng);

struct KSchedule {
  int k0 = 4;
  int increment = 0;
  long period_steps = 1;
  int k_max = 4;

  bool operator==(const KSchedule&) const = default;

  void validate() const;
};

// min(k_max, k0 + increment * floor(step / period_steps))
int k_schedule(long step, const KSchedule& sched);

struct ChainState {
  Sequence x0;
  MaskedSequence z;
  int stage = 0;
  int chain_k = 1;  // frozen at chain start; schedule changes apply at refill
  int prompt_len = 0;
};

// Streaming buffer of B teacher-forced chains (Algorithm-1 style). Each step:
// one forward per example, one summed gradient update, then per example
// either a refill (completed chain) or a policy-driven advance whose scores
// come from the same pre-update forward pass.
class PumaTrainer {
 public:
  PumaTrainer(TabularMDM& model, const TabularDistribution& dist,
              PolicySpec policy, KSchedule schedule,
              std::optional<double> tau, int batch, Rng rng,
              int prompt_len = 0);

  double step();  // returns mean per-example loss of this iteration

  const std::vector<ChainState>& buffer() const { return buffer_; }
  long steps_done() const { return steps_done_; }

 private:
  void refill(ChainState& c, int k_now);

  TabularMDM* model_;
  const TabularDistribution* dist_;
  PolicySpec policy_;
  KSchedule schedule_;
  std::optional<double> tau_;
  int prompt_len_;
  std::vector<ChainState> buffer_;
  Rng rng_;
  long steps_done_ = 0;
};

// One full teacher-forced chain advanced with the stage rule (and optional
// threshold fast-forward), as the PUMA trainer would advance it; used for
// trajectory probes.
Trajectory stage_chain(const Vocab& vocab, const Sequence& x0,
                       const ScoreFn& scores, const PolicySpec& policy, int k,
                       std::optional<double> tau, Rng& rng,
                       int prompt_len = 0);

ScoreFn model_score_fn(const TabularMDM& model);

// Text checkpoint: one "key position v_0 .. v_{|V|-1}" line per masked row,
// printed with enough digits to round-trip bit-exactly.
void save_model(const TabularMDM& model, std::ostream& out);
TabularMDM load_model(std::istream& in);

}  // namespace puma
