#include "puma/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>
#include <sstream>
#include <thread>

namespace puma {

std::string to_string(TrainMethod method) {
  return method == TrainMethod::Vanilla ? "vanilla" : "puma";
}

TrainMethod parse_train_method(const std::string& name) {
  if (name == "vanilla") return TrainMethod::Vanilla;
  if (name == "puma") return TrainMethod::Puma;
  throw ContractViolation("unknown training method '" + name + "'");
}

void RunConfig::validate() const {
  if (batch < 1) throw ContractViolation("run: batch must be >= 1");
  if (!(lr > 0.0)) throw ContractViolation("run: lr must be positive");
  if (total_steps < 1) throw ContractViolation("run: total_steps >= 1");
  if (eval_every < 1 || total_steps % eval_every != 0)
    throw ContractViolation("run: eval_every must divide total_steps");
  if (prompt_len < 0 || prompt_len >= dist.length)
    throw ContractViolation("run: prompt_len out of range");
  if (answer_index && (*answer_index < 0 || *answer_index >= dist.length))
    throw ContractViolation("run: answer_index out of range");
  if (traj_probes < 1) throw ContractViolation("run: traj_probes >= 1");
  if (eval_k < 0) throw ContractViolation("run: eval_k >= 0");
  schedule.validate();
  policy.validate(dist.length);
  eval_policy.validate(dist.length);
  if (tau && !(*tau > 0.0 && *tau <= 1.0))
    throw ContractViolation("run: tau must lie in (0,1]");
}

StateDistribution exact_inference_distribution(const ScoreFn& scores,
                                               const Vocab& vocab, int length,
                                               const PolicySpec& policy,
                                               int steps) {
  if (steps < 1) throw ContractViolation("inference DP: K must be >= 1");
  std::map<std::uint64_t, double> cur;
  cur[context_key(vocab,
                  MaskedSequence(static_cast<std::size_t>(length),
                                 vocab.mask()))] = 1.0;

  // Mirrors run_learned_inference: policy-selected reveals per step, with
  // the final step revealing every remaining mask.
  std::function<void(MaskedSequence&, const IndexSet&, std::size_t, double,
                     const PosteriorTable&, std::map<std::uint64_t, double>&)>
      expand = [&](MaskedSequence& z, const IndexSet& s, std::size_t pos,
                   double weight, const PosteriorTable& table,
                   std::map<std::uint64_t, double>& next) {
        if (pos == s.size()) {
          next[context_key(vocab, z)] += weight;
          return;
        }
        const int i = s[pos];
        const std::vector<double>& row = table.row_for(i).probs;
        for (int v = 0; v < static_cast<int>(row.size()); ++v) {
          if (row[static_cast<std::size_t>(v)] <= 0.0) continue;
          z[static_cast<std::size_t>(i)] = v;
          expand(z, s, pos + 1, weight * row[static_cast<std::size_t>(v)],
                 table, next);
        }
        z[static_cast<std::size_t>(i)] = vocab.mask();
      };

  for (int j = 1; j <= steps; ++j) {
    std::map<std::uint64_t, double> next;
    for (const auto& [key, p] : cur) {
      MaskedSequence z = key_to_state(vocab, length, key);
      if (fully_unmasked(vocab, z)) {
        next[key] += p;
        continue;
      }
      const PosteriorTable table = scores(z);
      if (j == steps) {
        expand(z, masked_indices(vocab, z), 0, p, table, next);
        continue;
      }
      for (const auto& [sel, ps] :
           enumerate_selections(policy, table, z, vocab, policy.count)) {
        IndexSet full = sel;
        if (policy.threshold)
          full = threshold_augment(sel, table, z, vocab, *policy.threshold,
                                   policy.block_size);
        expand(z, full, 0, p * ps, table, next);
      }
      if (next.size() > kMaxDpStates)
        throw StateSpaceTooLarge("inference DP: state space too large");
    }
    cur = std::move(next);
  }

  StateDistribution out;
  out.vocab = vocab;
  out.length = length;
  out.probs = std::move(cur);
  return out;
}

namespace {

StateDistribution data_state_distribution(const TabularDistribution& dist) {
  StateDistribution out;
  out.vocab = dist.vocab;
  out.length = dist.length;
  for (std::size_t i = 0; i < dist.size(); ++i)
    out.probs[context_key(dist.vocab, dist.sequences[i])] += dist.probs[i];
  return out;
}

// Exact-match accuracy on the designated answer index: reveal every other
// position of a support draw, greedy-decode the answer, score against the
// drawn token, weighted by the data law. Argmax ties resolve to the lowest
// token id.
double answer_exact_match(const TabularMDM& model,
                          const TabularDistribution& dist, int y_pos) {
  double acc = 0.0;
  for (std::size_t s = 0; s < dist.size(); ++s) {
    const Sequence& x0 = dist.sequences[s];
    MaskedSequence z = x0;
    z[static_cast<std::size_t>(y_pos)] = dist.vocab.mask();
    const PosteriorTable table = model.forward(z);
    const std::vector<double>& row = table.row_for(y_pos).probs;
    const int predicted = static_cast<int>(
        std::max_element(row.begin(), row.end()) - row.begin());
    if (predicted == x0[static_cast<std::size_t>(y_pos)]) acc += dist.probs[s];
  }
  return acc;
}

double generation_accuracy(const TabularMDM& model,
                           const TabularDistribution& dist,
                           const std::optional<int>& answer_index,
                           const PolicySpec& eval_policy, int eval_k) {
  if (answer_index) return answer_exact_match(model, dist, *answer_index);
  const StateDistribution sampled = exact_inference_distribution(
      model_score_fn(model), dist.vocab, dist.length, eval_policy,
      eval_k > 0 ? eval_k : dist.length);
  return 1.0 - tv_distance(sampled, data_state_distribution(dist));
}

// Probe contexts for the posterior-L1 metric: for a designated answer index
// the informative contexts (everything else revealed, answer masked);
// otherwise every support sequence with each single position masked.
std::vector<MaskedSequence> probe_contexts(const TabularDistribution& dist,
                                           const std::optional<int>& answer) {
  std::set<std::uint64_t> seen;
  std::vector<MaskedSequence> probes;
  for (std::size_t s = 0; s < dist.size(); ++s) {
    const Sequence& x0 = dist.sequences[s];
    if (answer) {
      MaskedSequence z = x0;
      z[static_cast<std::size_t>(*answer)] = dist.vocab.mask();
      if (seen.insert(context_key(dist.vocab, z)).second) probes.push_back(z);
    } else {
      for (int i = 0; i < dist.length; ++i) {
        MaskedSequence z = x0;
        z[static_cast<std::size_t>(i)] = dist.vocab.mask();
        if (seen.insert(context_key(dist.vocab, z)).second) probes.push_back(z);
      }
    }
  }
  return probes;
}

double posterior_l1(const TabularMDM& model, const TabularDistribution& dist,
                    const std::vector<MaskedSequence>& probes) {
  if (probes.empty()) return 0.0;
  double total = 0.0;
  int rows = 0;
  for (const MaskedSequence& z : probes) {
    const PosteriorTable predicted = model.forward(z);
    const PosteriorTable oracle = posterior_table(dist, z);
    for (std::size_t r = 0; r < predicted.size(); ++r) {
      double l1 = 0.0;
      for (std::size_t v = 0; v < predicted.rows[r].probs.size(); ++v)
        l1 += std::abs(predicted.rows[r].probs[v] - oracle.rows[r].probs[v]);
      total += l1;
      ++rows;
    }
  }
  return rows == 0 ? 0.0 : total / rows;
}

// Reveal-step maps of stage-rule teacher-forced chains on the fixed probe
// set, driven by the given model. Chain randomness is replayed from the same
// per-probe streams at every eval point, so two models are compared on
// matched noise.
std::vector<std::vector<int>> probe_step_maps(
    const TabularMDM& model, const std::vector<Sequence>& probes,
    const RunConfig& cfg) {
  const int k = cfg.schedule.k_max;
  std::vector<std::vector<int>> maps;
  maps.reserve(probes.size());
  const ScoreFn scores = model_score_fn(model);
  for (std::size_t i = 0; i < probes.size(); ++i) {
    Rng rng = Rng::stream(cfg.seed, "traj-probe", i);
    const Trajectory traj = stage_chain(cfg.dist.vocab, probes[i], scores,
                                        cfg.policy, k, cfg.tau, rng,
                                        cfg.prompt_len);
    maps.push_back(unmask_step_map(traj));
  }
  return maps;
}

double initial_loss_probe(const TabularMDM& model,
                          const TabularDistribution& dist,
                          std::uint64_t seed) {
  Rng rng = Rng::stream(seed, "init-loss", 0);
  const int samples = 64;
  double total = 0.0;
  for (int i = 0; i < samples; ++i) {
    for (;;) {
      const Sequence& x0 = sample(dist, rng);
      MaskedSequence z = iid_mask(dist.vocab, x0, rng.uniform(), rng);
      if (fully_unmasked(dist.vocab, z)) continue;
      Gradients scratch;
      total += loss_and_grad_from_table(model.forward(z), dist.vocab, z, x0,
                                        scratch);
      break;
    }
  }
  return total / samples;
}

}  // namespace

std::vector<MetricRow> run_training(const RunConfig& cfg,
                                    TabularMDM* final_model) {
  cfg.validate();
  TabularMDM model(cfg.dist.length, cfg.dist.vocab, cfg.lr);

  std::vector<Sequence> probes;
  {
    Rng probe_rng = Rng::stream(cfg.seed, "traj-probe-x0", 0);
    probes.reserve(static_cast<std::size_t>(cfg.traj_probes));
    for (int i = 0; i < cfg.traj_probes; ++i)
      probes.push_back(sample(cfg.dist, probe_rng));
  }
  const std::vector<MaskedSequence> l1_probes =
      probe_contexts(cfg.dist, cfg.answer_index);

  std::optional<PumaTrainer> puma;
  Rng train_rng = Rng::stream(cfg.seed, "train", 0);
  if (cfg.method == TrainMethod::Puma)
    puma.emplace(model, cfg.dist, cfg.policy, cfg.schedule, cfg.tau, cfg.batch,
                 Rng::stream(cfg.seed, "train", 0), cfg.prompt_len);

  std::vector<MetricRow> rows;
  std::vector<std::vector<std::vector<int>>> maps_per_eval;

  const auto evaluate = [&](long step, double train_loss) {
    MetricRow row;
    row.step = step;
    row.train_loss = train_loss;
    row.gen_accuracy = generation_accuracy(model, cfg.dist, cfg.answer_index,
                                           cfg.eval_policy, cfg.eval_k);
    row.posterior_l1 = posterior_l1(model, cfg.dist, l1_probes);
    row.traj_distance = 0.0;  // filled against the final model below
    rows.push_back(row);
    maps_per_eval.push_back(probe_step_maps(model, probes, cfg));
  };

  evaluate(0, initial_loss_probe(model, cfg.dist, cfg.seed));

  double window_loss = 0.0;
  long window_count = 0;
  for (long step = 1; step <= cfg.total_steps; ++step) {
    const double loss =
        cfg.method == TrainMethod::Puma
            ? puma->step()
            : vanilla_train_batch(model, cfg.dist, cfg.batch, train_rng);
    window_loss += loss;
    ++window_count;
    if (step % cfg.eval_every == 0) {
      evaluate(step, window_loss / static_cast<double>(window_count));
      window_loss = 0.0;
      window_count = 0;
    }
  }

  // Trajectory distances against the end-of-run model on matched noise.
  const std::vector<std::vector<int>>& reference = maps_per_eval.back();
  for (std::size_t e = 0; e < rows.size(); ++e) {
    double total = 0.0;
    for (std::size_t p = 0; p < reference.size(); ++p)
      total += trajectory_distance(maps_per_eval[e][p], reference[p]);
    rows[e].traj_distance = total / static_cast<double>(reference.size());
  }
  if (final_model != nullptr) *final_model = std::move(model);
  return rows;
}

std::string metrics_csv(const std::vector<MetricRow>& rows) {
  std::ostringstream out;
  out << "step,train_loss,gen_accuracy,posterior_l1,traj_distance\n";
  char buf[4][64];
  for (const MetricRow& row : rows) {
    std::snprintf(buf[0], sizeof buf[0], "%.17g", row.train_loss);
    std::snprintf(buf[1], sizeof buf[1], "%.17g", row.gen_accuracy);
    std::snprintf(buf[2], sizeof buf[2], "%.17g", row.posterior_l1);
    std::snprintf(buf[3], sizeof buf[3], "%.17g", row.traj_distance);
    out << row.step << ',' << buf[0] << ',' << buf[1] << ',' << buf[2] << ','
        << buf[3] << '\n';
  }
  return out.str();
}

namespace {

double first_step_reaching(const std::vector<MetricRow>& rows,
                           double threshold) {
  for (const MetricRow& row : rows)
    if (row.gen_accuracy >= threshold) return static_cast<double>(row.step);
  return std::numeric_limits<double>::infinity();
}

double median(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  if (n % 2 == 1) return xs[n / 2];
  return 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

}  // namespace

CompareResult compare_runs(const RunConfig& a, const RunConfig& b,
                           double accuracy_threshold,
                           const std::vector<std::uint64_t>& seeds,
                           int jobs) {
  if (seeds.empty()) throw ContractViolation("compare_runs: no seeds");
  if (a.dist.length != b.dist.length ||
      a.dist.vocab.size != b.dist.vocab.size)
    throw ContractViolation("compare_runs: arms use different distributions");

  CompareResult result;
  result.steps_a.resize(seeds.size());
  result.steps_b.resize(seeds.size());

  std::atomic<std::size_t> cursor{0};
  const std::size_t tasks = 2 * seeds.size();
  auto worker = [&] {
    for (;;) {
      const std::size_t task = cursor.fetch_add(1);
      if (task >= tasks) return;
      const bool arm_b = task >= seeds.size();
      const std::size_t idx = arm_b ? task - seeds.size() : task;
      RunConfig cfg = arm_b ? b : a;
      cfg.seed = seeds[idx];
      const double first =
          first_step_reaching(run_training(cfg), accuracy_threshold);
      (arm_b ? result.steps_b : result.steps_a)[idx] = first;
    }
  };
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    const int spawn = std::min<int>(jobs, static_cast<int>(tasks));
    for (int w = 0; w < spawn; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  result.median_a = median(result.steps_a);
  result.median_b = median(result.steps_b);
  if (std::isinf(result.median_a) && std::isinf(result.median_b)) {
    result.unreachable = true;
    result.ratio = std::numeric_limits<double>::quiet_NaN();
  } else if (result.median_a == result.median_b) {
    result.ratio = 1.0;  // covers 0/0: both reached at step 0
  } else if (result.median_b == 0.0) {
    result.ratio = std::numeric_limits<double>::infinity();
  } else {
    result.ratio = result.median_a / result.median_b;
  }
  return result;
}

std::vector<MetricRow> block_restricted_run(RunConfig cfg, int block_size) {
  if (block_size < 1 || cfg.dist.length % block_size != 0)
    throw ContractViolation("block_restricted_run: block_size must divide L");
  cfg.policy.block_size = block_size;
  cfg.eval_policy.block_size = block_size;
  return run_training(cfg);
}

std::vector<PolicyAccuracy> policy_robustness_report(
    const TabularMDM& model, const TabularDistribution& dist,
    const std::vector<PolicySpec>& policies, int eval_k) {
  std::vector<PolicyAccuracy> report;
  const StateDistribution data = data_state_distribution(dist);
  for (const PolicySpec& policy : policies) {
    const StateDistribution sampled = exact_inference_distribution(
        model_score_fn(model), dist.vocab, dist.length, policy,
        eval_k > 0 ? eval_k : dist.length);
    report.push_back({policy, 1.0 - tv_distance(sampled, data)});
  }
  return report;
}

}  // namespace puma
