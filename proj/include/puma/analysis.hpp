#pragma once

#include <map>
#include <string>

#include "puma/learner.hpp"

namespace puma {

// Exact distribution over masked states at one grid step, keyed by the
// base-(|V|+1) state encoding. std::map keeps iteration deterministic.
struct StateDistribution {
  Vocab vocab{2};
  int length = 0;
  std::map<std::uint64_t, double> probs;
};

double tv_distance(const StateDistribution& p, const StateDistribution& q);

enum class ChainKind { Idealized, TeacherForced };

// Exact DP cap: beyond this many simultaneous states the computation refuses
// to run and callers fall back to Monte Carlo.
inline constexpr std::size_t kMaxDpStates = 1'000'000;

// Law of z_{t_j} under the chosen chain, by exact dynamic programming over
// reachable states. The idealized chain expands the policy's selection
// distribution and the exact token posterior; the teacher-forced chain tracks
// (x0, z) pairs and reveals x0's tokens. Throws StateSpaceTooLarge past
// kMaxDpStates.
StateDistribution exact_marginal(ChainKind kind,
                                 const TabularDistribution& dist,
                                 const PolicySpec& policy, int steps, int j);

// All marginals j = 0..K of one chain in a single DP sweep.
std::vector<StateDistribution> marginal_trace(ChainKind kind,
                                              const TabularDistribution& dist,
                                              const PolicySpec& policy,
                                              int steps);

struct MarginalReport {
  std::vector<double> tv;      // per grid step j = 0..K
  std::vector<double> bound;   // MC mode: 4*sqrt(states/N) per step; empty in exact mode
  double max_tv = 0.0;
  bool exact = true;
  long mc_runs = 0;
};

// TV between teacher-forced and idealized-inference marginals at every grid
// step; exact mode runs the DP, Monte Carlo mode runs `mc_runs` chains per
// kind on independent RNG streams.
MarginalReport verify_marginal_agreement(const TabularDistribution& dist,
                                         const PolicySpec& policy, int steps);
MarginalReport verify_marginal_agreement_mc(const TabularDistribution& dist,
                                            const PolicySpec& policy,
                                            int steps, long mc_runs,
                                            std::uint64_t master_seed);

enum class ForwardKind { Iid, TeacherForced, Leaking };

std::string to_string(ForwardKind kind);
ForwardKind parse_forward_kind(const std::string& name);

struct MinimizerReport {
  double max_linf = 0.0;       // worst row-wise deviation from the oracle
  std::uint64_t worst_context = 0;
  int worst_index = -1;
};

// Exact visitation distribution over (z, i, target) triples under the chosen
// forward process, reduced to per-(z, i) conditional frequencies (the
// closed-form minimizer of the visitation-weighted cross-entropy), compared
// row-by-row against the exact posterior.
//
// Iid integrates the masking law over t ~ Unif[0,1]; TeacherForced runs the
// pair DP with oracle-scored policies; Leaking is the deliberate
// counterexample whose selection reads hidden tokens of x0 (it reveals the
// last masked position when the first masked position of x0 carries token 0,
// and the first masked position otherwise), so its deviation must be large.
MinimizerReport verify_minimizer_preservation(const TabularDistribution& dist,
                                              ForwardKind kind,
                                              const PolicySpec& policy,
                                              int steps);

// C(P,Q) = -log inf_{s in (0,1)} sum_z P(z)^(1-s) Q(z)^s, by golden-section
// search on [1e-4, 1-1e-4] to width 1e-8. The coefficient is log-convex in s,
// so the search is exact up to that width. Returns 0 for P = Q.
double chernoff_information(const std::vector<double>& p,
                            const std::vector<double>& q);
double chernoff_information(const TabularDistribution& p,
                            const TabularDistribution& q);

// Finite parameter family for MAP estimation, thetas ascending.
struct ThetaFamily {
  std::vector<int> thetas;
  std::vector<TabularDistribution> dists;
};

ThetaFamily zm_family(int m, int d, double eta,
                      const std::vector<int>& permutation = {});

// argmax_theta sum_i log P_theta(sample_i); ties resolved toward the
// smallest theta. A sample with zero probability under every member is an
// error.
int map_estimate(const std::vector<Sequence>& samples,
                 const ThetaFamily& family);

// Closed-form log-probability of the Z_m law; cross-checked against
// build_zm's enumeration in the tests.
double zm_log_prob(const ZmSpec& spec, const Sequence& x);

// T teacher-forced chains on draws from the Z_m law, driven by the exact
// oracle max-prob policy (one reveal per step, K = d+1): the latents-first
// order of the ground-truth confidences. Emits all d+1 intermediate (z, x0)
// pairs per trajectory; the informative pair (all latents revealed, Y still
// masked) occurs exactly once per trajectory.
std::vector<std::pair<MaskedSequence, Sequence>> oracle_trajectory_samples(
    const ZmSpec& spec, int trajectories, Rng& rng);
std::vector<std::pair<MaskedSequence, Sequence>> oracle_trajectory_samples(
    const ZmSpec& spec, const TabularDistribution& dist, OracleCache& cache,
    int trajectories, Rng& rng);

// Fraction of `trials` MAP estimations (T trajectories each, data drawn with
// theta_true) that misidentify theta.
double puma_map_error_rate(const ZmSpec& data_spec, const ThetaFamily& family,
                           int trajectories, int trials, Rng& rng);

struct ComplexityConfig {
  std::vector<int> d_range{2, 4, 6, 8};
  int m = 4;
  double eta = 0.1;
  double q = 0.5;              // per-position masking probability
  double delta = 0.1;
  int seeds = 10;
  int trials = 200;            // estimation trials per error estimate
  long budget = 1'000'000;     // max samples per arm
  bool uniform_t = false;      // mask with t ~ Unif[0,1] instead of fixed q
  std::uint64_t master_seed = 0;
  int jobs = 1;

  bool operator==(const ComplexityConfig&) const = default;
};

struct ComplexityRow {
  int d = 0;
  std::string method;          // "random-masking" | "puma-oracle"
  long samples = 0;
  double error_rate = 0.0;
  std::uint64_t seed = 0;
  bool censored = false;
};

// For each d and seed: the random-masking arm sweeps the sample count n
// (doubling, then bisecting) until the informative-observation MAP
// misidentifies theta in at most a delta fraction of `trials`; the PUMA arm
// sweeps the trajectory count T the same way and records (d+1)*T.
std::vector<ComplexityRow> sample_complexity_experiment(
    const ComplexityConfig& cfg);

std::string complexity_csv(const std::vector<ComplexityRow>& rows);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 1.0;
};

LinearFit least_squares(const std::vector<double>& xs,
                        const std::vector<double>& ys);

}  // namespace puma
