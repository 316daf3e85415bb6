#pragma once

#include "puma/analysis.hpp"

namespace puma {

enum class TrainMethod { Vanilla, Puma };

std::string to_string(TrainMethod method);
TrainMethod parse_train_method(const std::string& name);

struct RunConfig {
  TabularDistribution dist;
  std::optional<int> answer_index;  // designated answer position (Z_m's Y);
                                    // switches evaluation to exact-match
  TrainMethod method = TrainMethod::Puma;
  PolicySpec policy;         // PUMA chain policy (scores from the model)
  KSchedule schedule;
  std::optional<double> tau;
  int batch = 32;
  double lr = 0.1;
  long total_steps = 1000;
  long eval_every = 100;     // must divide total_steps
  PolicySpec eval_policy;
  int eval_k = 0;            // inference grid for generation eval; 0 = L
  int traj_probes = 100;     // fixed x0 set for trajectory-distance probes
  int prompt_len = 0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct MetricRow {
  long step = 0;
  double train_loss = 0.0;
  double gen_accuracy = 0.0;   // exact-match on the answer index (Z_m) or
                               // 1 - TV(model sampler, data) for generic dists
  double posterior_l1 = 0.0;   // mean L1 to the oracle over probe contexts
  double traj_distance = 0.0;  // mean d_abs to the end-of-run model's chains
};

// Trains for total_steps, evaluating on a read-only snapshot at step 0 and
// every eval_every steps. Deterministic for a fixed config: all randomness
// derives from cfg.seed. Pass final_model to receive the end-of-run table.
std::vector<MetricRow> run_training(const RunConfig& cfg,
                                    TabularMDM* final_model = nullptr);

// Exact header: step,train_loss,gen_accuracy,posterior_l1,traj_distance
std::string metrics_csv(const std::vector<MetricRow>& rows);

struct CompareResult {
  double ratio = 1.0;          // median_a / median_b
  double median_a = 0.0;       // first step reaching the threshold (inf = never)
  double median_b = 0.0;
  std::vector<double> steps_a; // per seed, +inf when never reached
  std::vector<double> steps_b;
  bool unreachable = false;    // neither arm ever reached the threshold
};

// Ratio of median-over-seeds first-step-reaching-threshold, A over B; both
// configs are rerun per seed with that seed substituted.
CompareResult compare_runs(const RunConfig& a, const RunConfig& b,
                           double accuracy_threshold,
                           const std::vector<std::uint64_t>& seeds,
                           int jobs = 1);

// run_training with the chain and evaluation policies restricted block-wise.
std::vector<MetricRow> block_restricted_run(RunConfig cfg, int block_size);

// Generation quality (1 - TV of the exact sampler law against the data) of
// one trained model under several inference policies; reported, not asserted.
struct PolicyAccuracy {
  PolicySpec policy;
  double gen_accuracy = 0.0;
};
std::vector<PolicyAccuracy> policy_robustness_report(
    const TabularMDM& model, const TabularDistribution& dist,
    const std::vector<PolicySpec>& policies, int eval_k);

// Exact law of run_learned_inference outputs (sampling semantics, final step
// reveals everything) under the given score source; used for TV-based
// generation metrics. Throws StateSpaceTooLarge past the DP cap.
StateDistribution exact_inference_distribution(const ScoreFn& scores,
                                               const Vocab& vocab, int length,
                                               const PolicySpec& policy,
                                               int steps);

}  // namespace puma
