#include "puma/analysis.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <sstream>
#include <thread>

namespace puma {

namespace {

// Work queue over [0, n); used for seed-level fan-out. Results land in
// preallocated slots, so output bytes never depend on scheduling.
void parallel_for(std::size_t n, int jobs,
                  const std::function<void(std::size_t)>& fn) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> cursor{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = cursor.fetch_add(1);
      if (i >= n) return;
      fn(i);
    }
  };
  std::vector<std::thread> pool;
  const int spawn = std::min<int>(jobs, static_cast<int>(n));
  pool.reserve(static_cast<std::size_t>(spawn));
  for (int w = 0; w < spawn; ++w) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
}

}  // namespace

double tv_distance(const StateDistribution& p, const StateDistribution& q) {
  double total = 0.0;
  auto it_p = p.probs.begin();
  auto it_q = q.probs.begin();
  while (it_p != p.probs.end() || it_q != q.probs.end()) {
    if (it_q == q.probs.end() ||
        (it_p != p.probs.end() && it_p->first < it_q->first)) {
      total += std::abs(it_p->second);
      ++it_p;
    } else if (it_p == p.probs.end() || it_q->first < it_p->first) {
      total += std::abs(it_q->second);
      ++it_q;
    } else {
      total += std::abs(it_p->second - it_q->second);
      ++it_p;
      ++it_q;
    }
  }
  return 0.5 * total;
}

namespace {

// Expands "reveal every index of S with an independently drawn token from its
// posterior row" into successor states.
void expand_product(const Vocab& vocab, MaskedSequence& z, const IndexSet& s,
                    std::size_t pos, double weight,
                    const PosteriorTable& table,
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
    expand_product(vocab, z, s, pos + 1,
                   weight * row[static_cast<std::size_t>(v)], table, next);
  }
  z[static_cast<std::size_t>(i)] = vocab.mask();
}

IndexSet selection_with_threshold(const PolicySpec& policy, const IndexSet& s,
                                  const PosteriorTable& table,
                                  const MaskedSequence& z, const Vocab& vocab) {
  if (!policy.threshold) return s;
  return threshold_augment(s, table, z, vocab, *policy.threshold,
                           policy.block_size);
}

using PairKey = std::pair<std::uint32_t, std::uint64_t>;  // (support idx, state)

std::map<PairKey, double> initial_pairs(const TabularDistribution& dist) {
  const std::uint64_t start = context_key(
      dist.vocab,
      MaskedSequence(static_cast<std::size_t>(dist.length), dist.vocab.mask()));
  std::map<PairKey, double> cur;
  for (std::uint32_t s = 0; s < dist.size(); ++s)
    cur[{s, start}] = dist.probs[s];
  return cur;
}

StateDistribution pairs_to_marginal(const TabularDistribution& dist,
                                    const std::map<PairKey, double>& pairs) {
  StateDistribution out;
  out.vocab = dist.vocab;
  out.length = dist.length;
  for (const auto& [pk, p] : pairs) out.probs[pk.second] += p;
  return out;
}

}  // namespace

std::vector<StateDistribution> marginal_trace(ChainKind kind,
                                              const TabularDistribution& dist,
                                              const PolicySpec& policy,
                                              int steps) {
  if (steps < 1) throw ContractViolation("marginal_trace: K must be >= 1");
  policy.validate(dist.length);
  OracleCache cache(dist);
  std::vector<StateDistribution> out;
  out.reserve(static_cast<std::size_t>(steps) + 1);

  if (kind == ChainKind::Idealized) {
    std::map<std::uint64_t, double> cur;
    cur[context_key(dist.vocab,
                    MaskedSequence(static_cast<std::size_t>(dist.length),
                                   dist.vocab.mask()))] = 1.0;
    for (int j = 0; j <= steps; ++j) {
      StateDistribution sd;
      sd.vocab = dist.vocab;
      sd.length = dist.length;
      sd.probs = cur;
      out.push_back(std::move(sd));
      if (j == steps) break;

      std::map<std::uint64_t, double> next;
      for (const auto& [key, p] : cur) {
        MaskedSequence z = key_to_state(dist.vocab, dist.length, key);
        if (fully_unmasked(dist.vocab, z)) {
          next[key] += p;
          continue;
        }
        const PosteriorTable& table = cache.table(z);
        for (const auto& [sel, ps] :
             enumerate_selections(policy, table, z, dist.vocab, policy.count)) {
          const IndexSet full =
              selection_with_threshold(policy, sel, table, z, dist.vocab);
          expand_product(dist.vocab, z, full, 0, p * ps, table, next);
        }
        if (next.size() > kMaxDpStates)
          throw StateSpaceTooLarge(
              "exact_marginal: state space too large, use Monte Carlo");
      }
      cur = std::move(next);
    }
    return out;
  }

  // Teacher-forced: track (x0, z) jointly; the policy only ever sees z.
  std::map<PairKey, double> cur = initial_pairs(dist);
  for (int j = 0; j <= steps; ++j) {
    out.push_back(pairs_to_marginal(dist, cur));
    if (j == steps) break;

    std::map<PairKey, double> next;
    for (const auto& [pk, p] : cur) {
      const auto [s_idx, key] = pk;
      MaskedSequence z = key_to_state(dist.vocab, dist.length, key);
      if (fully_unmasked(dist.vocab, z)) {
        next[pk] += p;
        continue;
      }
      const Sequence& x0 = dist.sequences[s_idx];
      const PosteriorTable& table = cache.table(z);
      for (const auto& [sel, ps] :
           enumerate_selections(policy, table, z, dist.vocab, policy.count)) {
        const IndexSet full =
            selection_with_threshold(policy, sel, table, z, dist.vocab);
        const MaskedSequence z2 = teacher_forced_step(dist.vocab, x0, z, full);
        next[{s_idx, context_key(dist.vocab, z2)}] += p * ps;
      }
      if (next.size() > kMaxDpStates)
        throw StateSpaceTooLarge(
            "exact_marginal: state space too large, use Monte Carlo");
    }
    cur = std::move(next);
  }
  return out;
}

StateDistribution exact_marginal(ChainKind kind,
                                 const TabularDistribution& dist,
                                 const PolicySpec& policy, int steps, int j) {
  if (j < 0 || j > steps)
    throw ContractViolation("exact_marginal: j outside 0..K");
  return marginal_trace(kind, dist, policy, steps)[static_cast<std::size_t>(j)];
}

MarginalReport verify_marginal_agreement(const TabularDistribution& dist,
                                         const PolicySpec& policy, int steps) {
  const auto ideal = marginal_trace(ChainKind::Idealized, dist, policy, steps);
  const auto forced =
      marginal_trace(ChainKind::TeacherForced, dist, policy, steps);
  MarginalReport report;
  report.exact = true;
  for (int j = 0; j <= steps; ++j) {
    const double tv = tv_distance(ideal[static_cast<std::size_t>(j)],
                                  forced[static_cast<std::size_t>(j)]);
    report.tv.push_back(tv);
    report.max_tv = std::max(report.max_tv, tv);
  }
  return report;
}

MarginalReport verify_marginal_agreement_mc(const TabularDistribution& dist,
                                            const PolicySpec& policy,
                                            int steps, long mc_runs,
                                            std::uint64_t master_seed) {
  if (mc_runs < 1)
    throw ContractViolation("verify_marginal_agreement_mc: runs >= 1");
  policy.validate(dist.length);
  OracleCache cache(dist);
  const ScoreFn scores = cached_oracle_score_fn(cache);

  std::vector<std::map<std::uint64_t, double>> ideal(
      static_cast<std::size_t>(steps) + 1);
  std::vector<std::map<std::uint64_t, double>> forced(
      static_cast<std::size_t>(steps) + 1);
  const double w = 1.0 / static_cast<double>(mc_runs);

  for (long run = 0; run < mc_runs; ++run) {
    Rng rng_i = Rng::stream(master_seed, "marginal-mc/idealized",
                            static_cast<std::uint64_t>(run));
    const Trajectory ti = run_idealized_inference(dist, policy, steps, rng_i);
    for (int j = 0; j <= steps; ++j)
      ideal[static_cast<std::size_t>(j)]
           [context_key(dist.vocab, ti.states[static_cast<std::size_t>(j)])] +=
          w;

    Rng rng_t = Rng::stream(master_seed, "marginal-mc/teacher-forced",
                            static_cast<std::uint64_t>(run));
    const Sequence x0 = sample(dist, rng_t);
    const Trajectory tt = run_teacher_forced_chain(dist.vocab, x0, scores,
                                                   policy, steps, rng_t);
    for (int j = 0; j <= steps; ++j)
      forced[static_cast<std::size_t>(j)]
            [context_key(dist.vocab, tt.states[static_cast<std::size_t>(j)])] +=
          w;
  }

  MarginalReport report;
  report.exact = false;
  report.mc_runs = mc_runs;
  for (int j = 0; j <= steps; ++j) {
    StateDistribution a, b;
    a.vocab = b.vocab = dist.vocab;
    a.length = b.length = dist.length;
    a.probs = ideal[static_cast<std::size_t>(j)];
    b.probs = forced[static_cast<std::size_t>(j)];
    const double tv = tv_distance(a, b);
    report.tv.push_back(tv);
    report.max_tv = std::max(report.max_tv, tv);
    std::map<std::uint64_t, double> uni = a.probs;
    for (const auto& [k, v] : b.probs) uni[k] += v;
    report.bound.push_back(
        4.0 * std::sqrt(static_cast<double>(uni.size()) /
                        static_cast<double>(mc_runs)));
  }
  return report;
}

std::string to_string(ForwardKind kind) {
  switch (kind) {
    case ForwardKind::Iid: return "iid";
    case ForwardKind::TeacherForced: return "teacher-forced";
    case ForwardKind::Leaking: return "leaking";
  }
  throw ContractViolation("unknown forward kind");
}

ForwardKind parse_forward_kind(const std::string& name) {
  if (name == "iid") return ForwardKind::Iid;
  if (name == "teacher-forced") return ForwardKind::TeacherForced;
  if (name == "leaking") return ForwardKind::Leaking;
  throw ContractViolation("unknown forward kind '" + name + "'");
}

namespace {

// visits[z key][masked index] -> per-token visitation mass
using Visitation =
    std::map<std::uint64_t, std::map<int, std::vector<double>>>;

void add_visit(Visitation& visits, const Vocab& vocab, std::uint64_t key,
               const MaskedSequence& z, const Sequence& x0, double w) {
  auto& per_index = visits[key];
  for (int i = 0; i < static_cast<int>(z.size()); ++i) {
    if (!vocab.is_mask(z[static_cast<std::size_t>(i)])) continue;
    auto& row = per_index[i];
    if (row.empty()) row.assign(static_cast<std::size_t>(vocab.size), 0.0);
    row[static_cast<std::size_t>(x0[static_cast<std::size_t>(i)])] += w;
  }
}

// Integral of t^masked (1-t)^unmasked over [0,1]:
// masked! * unmasked! / (L+1)!
double beta_pattern_weight(int masked, int unmasked) {
  double value = 1.0;
  // value = masked! unmasked! / (masked+unmasked+1)!
  // computed as prod_{i=1..unmasked} i / (masked+i)  / (L+1)
  for (int i = 1; i <= unmasked; ++i)
    value *= static_cast<double>(i) / static_cast<double>(masked + i);
  return value / static_cast<double>(masked + unmasked + 1);
}

// The deliberate leak: where to reveal depends on a hidden token of x0.
IndexSet leaking_selection(const Vocab& vocab, const MaskedSequence& z,
                           const Sequence& x0) {
  const IndexSet msk = masked_indices(vocab, z);
  const Token hidden = x0[static_cast<std::size_t>(msk.front())];
  return {hidden == 0 ? msk.back() : msk.front()};
}

}  // namespace

MinimizerReport verify_minimizer_preservation(const TabularDistribution& dist,
                                              ForwardKind kind,
                                              const PolicySpec& policy,
                                              int steps) {
  Visitation visits;

  if (kind == ForwardKind::Iid) {
    const int length = dist.length;
    if (length > 20 ||
        dist.size() * (1ull << length) > kMaxDpStates)
      throw StateSpaceTooLarge("iid visitation: 2^L enumeration too large");
    for (std::size_t s = 0; s < dist.size(); ++s) {
      const Sequence& x0 = dist.sequences[s];
      for (std::uint64_t pattern = 0; pattern < (1ull << length); ++pattern) {
        const int masked = static_cast<int>(std::popcount(pattern));
        if (masked == 0) continue;  // no training signal in a clean state
        MaskedSequence z = x0;
        for (int i = 0; i < length; ++i)
          if ((pattern >> i) & 1) z[static_cast<std::size_t>(i)] = dist.vocab.mask();
        const double w =
            dist.probs[s] * beta_pattern_weight(masked, length - masked);
        add_visit(visits, dist.vocab, context_key(dist.vocab, z), z, x0, w);
      }
    }
  } else {
    OracleCache cache(dist);
    std::map<PairKey, double> cur = initial_pairs(dist);
    for (int j = 0; j < steps; ++j) {
      std::map<PairKey, double> next;
      for (const auto& [pk, p] : cur) {
        const auto [s_idx, key] = pk;
        MaskedSequence z = key_to_state(dist.vocab, dist.length, key);
        const Sequence& x0 = dist.sequences[s_idx];
        if (fully_unmasked(dist.vocab, z)) {
          next[pk] += p;
          continue;
        }
        add_visit(visits, dist.vocab, key, z, x0, p);
        if (kind == ForwardKind::Leaking) {
          const MaskedSequence z2 = teacher_forced_step(
              dist.vocab, x0, z, leaking_selection(dist.vocab, z, x0));
          next[{s_idx, context_key(dist.vocab, z2)}] += p;
        } else {
          const PosteriorTable& table = cache.table(z);
          for (const auto& [sel, ps] : enumerate_selections(
                   policy, table, z, dist.vocab, policy.count)) {
            const IndexSet full =
                selection_with_threshold(policy, sel, table, z, dist.vocab);
            const MaskedSequence z2 =
                teacher_forced_step(dist.vocab, x0, z, full);
            next[{s_idx, context_key(dist.vocab, z2)}] += p * ps;
          }
        }
        if (next.size() > kMaxDpStates)
          throw StateSpaceTooLarge("visitation DP: state space too large");
      }
      cur = std::move(next);
    }
  }

  MinimizerReport report;
  for (const auto& [key, per_index] : visits) {
    const MaskedSequence z = key_to_state(dist.vocab, dist.length, key);
    for (const auto& [i, row] : per_index) {
      double total = 0.0;
      for (double v : row) total += v;
      if (total <= 0.0) continue;
      const Categorical oracle = exact_posterior(dist, z, i);
      double linf = 0.0;
      for (std::size_t v = 0; v < row.size(); ++v)
        linf = std::max(linf, std::abs(row[v] / total - oracle.probs[v]));
      if (linf > report.max_linf) {
        report.max_linf = linf;
        report.worst_context = key;
        report.worst_index = i;
      }
    }
  }
  return report;
}

double chernoff_information(const std::vector<double>& p,
                            const std::vector<double>& q) {
  if (p.size() != q.size() || p.empty())
    throw ContractViolation("chernoff_information: mismatched supports");
  if (p == q) return 0.0;

  const auto coefficient = [&](double s) {
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (p[i] <= 0.0 || q[i] <= 0.0) continue;  // zero for s in (0,1)
      total += std::exp((1.0 - s) * std::log(p[i]) + s * std::log(q[i]));
    }
    return total;
  };

  // Golden-section: the coefficient is a sum of exponentials of affine
  // functions of s, hence convex.
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = 1e-4, b = 1.0 - 1e-4;
  double c = b - invphi * (b - a);
  double d = a + invphi * (b - a);
  double fc = coefficient(c), fd = coefficient(d);
  while (b - a > 1e-8) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - invphi * (b - a);
      fc = coefficient(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + invphi * (b - a);
      fd = coefficient(d);
    }
  }
  const double min_coeff = std::min(fc, fd);
  return std::max(0.0, -std::log(min_coeff));
}

double chernoff_information(const TabularDistribution& p,
                            const TabularDistribution& q) {
  if (p.length != q.length || p.vocab.size != q.vocab.size)
    throw ContractViolation("chernoff_information: different state spaces");
  std::map<std::uint64_t, std::pair<double, double>> joint;
  for (std::size_t i = 0; i < p.size(); ++i)
    joint[context_key(p.vocab, p.sequences[i])].first = p.probs[i];
  for (std::size_t i = 0; i < q.size(); ++i)
    joint[context_key(q.vocab, q.sequences[i])].second = q.probs[i];
  std::vector<double> pv, qv;
  pv.reserve(joint.size());
  qv.reserve(joint.size());
  for (const auto& [key, pq] : joint) {
    pv.push_back(pq.first);
    qv.push_back(pq.second);
  }
  return chernoff_information(pv, qv);
}

ThetaFamily zm_family(int m, int d, double eta,
                      const std::vector<int>& permutation) {
  ThetaFamily family;
  for (int theta : {0, m / 2}) {
    ZmSpec spec;
    spec.m = m;
    spec.d = d;
    spec.eta = eta;
    spec.theta = theta;
    spec.permutation = permutation;
    family.thetas.push_back(theta);
    family.dists.push_back(build_zm(spec));
  }
  return family;
}

int map_estimate(const std::vector<Sequence>& samples,
                 const ThetaFamily& family) {
  if (family.thetas.empty() || family.thetas.size() != family.dists.size())
    throw ContractViolation("map_estimate: empty or inconsistent family");
  if (samples.empty())
    return family.thetas.front();  // vacuous likelihoods tie; smallest theta

  for (const Sequence& x : samples) {
    bool possible = false;
    for (const auto& dist : family.dists)
      if (dist.prob_of(x) > 0.0) {
        possible = true;
        break;
      }
    if (!possible)
      throw ContractViolation(
          "map_estimate: sample impossible under every theta");
  }

  int best_theta = family.thetas.front();
  double best_ll = -std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < family.thetas.size(); ++t) {
    double ll = 0.0;
    for (const Sequence& x : samples) ll += family.dists[t].log_prob(x);
    if (ll > best_ll) {  // ties keep the earlier (smaller) theta
      best_ll = ll;
      best_theta = family.thetas[t];
    }
  }
  return best_theta;
}

double zm_log_prob(const ZmSpec& spec, const Sequence& x) {
  spec.validate();
  if (static_cast<int>(x.size()) != spec.length())
    throw ContractViolation("zm_log_prob: length mismatch");
  int latent_sum = 0;
  for (int k = 0; k < spec.d; ++k) {
    const Token u = x[static_cast<std::size_t>(spec.slot_position(k))];
    if (u != 0 && u != spec.delta())
      return -std::numeric_limits<double>::infinity();
    latent_sum += u;
  }
  const Token y = x[static_cast<std::size_t>(spec.observation_position())];
  const int e = ((y - spec.theta - latent_sum) % spec.m + spec.m) % spec.m;
  const double pe = e == 0 ? 1.0 - spec.eta : spec.eta / (spec.m - 1);
  return -spec.d * std::log(2.0) + std::log(pe);
}

std::vector<std::pair<MaskedSequence, Sequence>> oracle_trajectory_samples(
    const ZmSpec& spec, const TabularDistribution& dist, OracleCache& cache,
    int trajectories, Rng& rng) {
  if (trajectories < 0)
    throw ContractViolation("oracle_trajectory_samples: negative count");
  PolicySpec policy;  // max-prob, one reveal per step
  const int length = spec.length();

  std::vector<std::pair<MaskedSequence, Sequence>> out;
  out.reserve(static_cast<std::size_t>(trajectories) *
              static_cast<std::size_t>(length));
  for (int t = 0; t < trajectories; ++t) {
    const Sequence x0 = sample(dist, rng);
    MaskedSequence z(static_cast<std::size_t>(length), dist.vocab.mask());
    for (int j = 0; j < length; ++j) {
      out.emplace_back(z, x0);
      if (j == length - 1) break;  // last pair keeps only Y masked
      const PosteriorTable& table = cache.table(z);
      const IndexSet sel = select(policy, table, z, dist.vocab, 1, &rng);
      z = teacher_forced_step(dist.vocab, x0, z, sel);
    }
  }
  return out;
}

std::vector<std::pair<MaskedSequence, Sequence>> oracle_trajectory_samples(
    const ZmSpec& spec, int trajectories, Rng& rng) {
  const TabularDistribution dist = build_zm(spec);
  OracleCache cache(dist);
  return oracle_trajectory_samples(spec, dist, cache, trajectories, rng);
}

namespace {

bool is_informative(const ZmSpec& spec, const Vocab& vocab,
                    const MaskedSequence& z) {
  for (int pos : spec.latent_positions())
    if (vocab.is_mask(z[static_cast<std::size_t>(pos)])) return false;
  return vocab.is_mask(z[static_cast<std::size_t>(spec.observation_position())]);
}

}  // namespace

double puma_map_error_rate(const ZmSpec& data_spec, const ThetaFamily& family,
                           int trajectories, int trials, Rng& rng) {
  const TabularDistribution dist = build_zm(data_spec);
  OracleCache cache(dist);
  int errors = 0;
  for (int trial = 0; trial < trials; ++trial) {
    const auto pairs =
        oracle_trajectory_samples(data_spec, dist, cache, trajectories, rng);
    std::vector<Sequence> informative;
    for (const auto& [z, x0] : pairs)
      if (is_informative(data_spec, dist.vocab, z)) informative.push_back(x0);
    if (map_estimate(informative, family) != data_spec.theta) ++errors;
  }
  return static_cast<double>(errors) / trials;
}

namespace {

struct ArmContext {
  ZmSpec spec0, spec1;
  ComplexityConfig cfg;
  int d = 0;
};

// One estimation trial of the random-masking arm: n i.i.d.-masked samples,
// MAP likelihood comparison restricted to informative observations (all
// latents visible, Y masked in the input, its clean target known).
bool random_masking_trial(const ArmContext& ctx, long n, Rng& rng) {
  const int m = ctx.cfg.m;
  const int d = ctx.d;
  const int delta = m / 2;
  const bool truth_is_delta = rng.bernoulli(0.5);
  const int theta_true = truth_is_delta ? delta : 0;
  const double log_pe0 = std::log(1.0 - ctx.cfg.eta);
  const double log_pee = std::log(ctx.cfg.eta / (m - 1));

  double llr = 0.0;  // log P_0 - log P_delta over informative samples
  for (long k = 0; k < n; ++k) {
    int latent_sum = 0;
    for (int j = 0; j < d; ++j)
      if (rng.bernoulli(0.5)) latent_sum += delta;
    const int e = rng.bernoulli(1.0 - ctx.cfg.eta)
                      ? 0
                      : 1 + static_cast<int>(rng.below(
                            static_cast<std::uint64_t>(m - 1)));
    const int y = (theta_true + latent_sum + e) % m;

    // i.i.d. masking of all d+1 positions; the pattern decides
    // informativeness.
    const double t =
        ctx.cfg.uniform_t ? rng.uniform() : ctx.cfg.q;
    bool informative = true;
    for (int j = 0; j < d; ++j)
      if (rng.bernoulli(t)) informative = false;
    if (!rng.bernoulli(t)) informative = false;  // Y must be masked
    if (!informative) continue;

    const int e0 = ((y - latent_sum) % m + m) % m;
    const int e1 = ((y - delta - latent_sum) % m + m) % m;
    llr += (e0 == 0 ? log_pe0 : log_pee) - (e1 == 0 ? log_pe0 : log_pee);
  }
  const int theta_hat = llr >= 0.0 ? 0 : delta;  // tie -> smallest theta
  return theta_hat != theta_true;
}

double random_masking_error(const ArmContext& ctx, long n, Rng& rng) {
  int errors = 0;
  for (int trial = 0; trial < ctx.cfg.trials; ++trial)
    if (random_masking_trial(ctx, n, rng)) ++errors;
  return static_cast<double>(errors) / ctx.cfg.trials;
}

double puma_arm_error(const ArmContext& ctx, const ThetaFamily& family,
                      const TabularDistribution& dist0,
                      const TabularDistribution& dist1, OracleCache& cache0,
                      OracleCache& cache1, int trajectories, Rng& rng) {
  int errors = 0;
  for (int trial = 0; trial < ctx.cfg.trials; ++trial) {
    const bool truth_is_delta = rng.bernoulli(0.5);
    const ZmSpec& spec = truth_is_delta ? ctx.spec1 : ctx.spec0;
    const TabularDistribution& dist = truth_is_delta ? dist1 : dist0;
    OracleCache& cache = truth_is_delta ? cache1 : cache0;
    const auto pairs =
        oracle_trajectory_samples(spec, dist, cache, trajectories, rng);
    std::vector<Sequence> informative;
    for (const auto& [z, x0] : pairs)
      if (is_informative(spec, dist.vocab, z)) informative.push_back(x0);
    if (map_estimate(informative, family) != spec.theta) ++errors;
  }
  return static_cast<double>(errors) / ctx.cfg.trials;
}

}  // namespace

std::vector<ComplexityRow> sample_complexity_experiment(
    const ComplexityConfig& cfg) {
  if (cfg.seeds < 1 || cfg.trials < 1 || cfg.budget < 1)
    throw ContractViolation("sample_complexity_experiment: bad config");
  const std::size_t per_method =
      cfg.d_range.size() * static_cast<std::size_t>(cfg.seeds);
  std::vector<ComplexityRow> rows(2 * per_method);

  parallel_for(2 * per_method, cfg.jobs, [&](std::size_t task) {
    const bool puma_arm = task >= per_method;
    const std::size_t local = puma_arm ? task - per_method : task;
    const std::size_t d_idx = local / static_cast<std::size_t>(cfg.seeds);
    const int seed_idx = static_cast<int>(local % static_cast<std::size_t>(cfg.seeds));
    const int d = cfg.d_range[d_idx];

    ArmContext ctx;
    ctx.cfg = cfg;
    ctx.d = d;
    ctx.spec0 = ZmSpec{cfg.m, d, cfg.eta, 0, {}};
    ctx.spec1 = ZmSpec{cfg.m, d, cfg.eta, cfg.m / 2, {}};

    ComplexityRow row;
    row.d = d;
    row.seed = static_cast<std::uint64_t>(seed_idx);
    row.method = puma_arm ? "puma-oracle" : "random-masking";
    const std::uint64_t stream_index =
        (static_cast<std::uint64_t>(d) << 32) |
        static_cast<std::uint64_t>(seed_idx);

    if (!puma_arm) {
      Rng rng = Rng::stream(cfg.master_seed, "complexity/random-masking",
                            stream_index);
      long n = 1;
      double err = random_masking_error(ctx, n, rng);
      while (err > cfg.delta && n < cfg.budget) {
        n = std::min(n * 2, cfg.budget);
        err = random_masking_error(ctx, n, rng);
      }
      if (err > cfg.delta) {
        row.samples = cfg.budget;
        row.error_rate = err;
        row.censored = true;
      } else {
        // Bisect to the smallest examined n whose error passes.
        long lo = n / 2, hi = n;
        double hi_err = err;
        while (lo + 1 < hi) {
          const long mid = lo + (hi - lo) / 2;
          const double mid_err = random_masking_error(ctx, mid, rng);
          if (mid_err <= cfg.delta) {
            hi = mid;
            hi_err = mid_err;
          } else {
            lo = mid;
          }
        }
        row.samples = hi;
        row.error_rate = hi_err;
      }
    } else {
      Rng rng =
          Rng::stream(cfg.master_seed, "complexity/puma-oracle", stream_index);
      const ThetaFamily family = zm_family(cfg.m, d, cfg.eta);
      const TabularDistribution dist0 = build_zm(ctx.spec0);
      const TabularDistribution dist1 = build_zm(ctx.spec1);
      OracleCache cache0(dist0), cache1(dist1);
      const long per_traj = d + 1;
      long t_count = 1;
      double err = puma_arm_error(ctx, family, dist0, dist1, cache0, cache1,
                                  static_cast<int>(t_count), rng);
      while (err > cfg.delta && per_traj * (t_count + 1) <= cfg.budget) {
        ++t_count;
        err = puma_arm_error(ctx, family, dist0, dist1, cache0, cache1,
                             static_cast<int>(t_count), rng);
      }
      row.samples = per_traj * t_count;
      row.error_rate = err;
      row.censored = err > cfg.delta;
    }
    rows[task] = std::move(row);
  });
  return rows;
}

std::string complexity_csv(const std::vector<ComplexityRow>& rows) {
  std::ostringstream out;
  out << "d,method,samples,error_rate,seed\n";
  char buf[64];
  for (const ComplexityRow& row : rows) {
    std::snprintf(buf, sizeof buf, "%.17g", row.error_rate);
    out << row.d << ',' << row.method << ',' << row.samples << ',' << buf
        << ',' << row.seed << '\n';
  }
  return out.str();
}

LinearFit least_squares(const std::vector<double>& xs,
                        const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.size() < 2)
    throw ContractViolation("least_squares: need >= 2 points");
  const double n = static_cast<double>(xs.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  LinearFit fit;
  const double denom = n * sxx - sx * sx;
  if (denom == 0.0) throw ContractViolation("least_squares: degenerate xs");
  fit.slope = (n * sxy - sx * sy) / denom;
  fit.intercept = (sy - fit.slope * sx) / n;
  double ss_res = 0, ss_tot = 0;
  const double mean_y = sy / n;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double pred = fit.slope * xs[i] + fit.intercept;
    ss_res += (ys[i] - pred) * (ys[i] - pred);
    ss_tot += (ys[i] - mean_y) * (ys[i] - mean_y);
  }
  fit.r2 = ss_tot == 0.0 ? 1.0 : 1.0 - ss_res / ss_tot;
  return fit;
}

}  // namespace puma
