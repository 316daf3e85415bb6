#include "puma/cli.hpp"

#include <unistd.h>

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

namespace puma {

namespace fs = std::filesystem;

void write_file_atomic(const std::string& path, const std::string& content) {
  static std::atomic<unsigned> counter{0};
  const fs::path target(path);
  const fs::path tmp =
      target.parent_path() /
      (target.filename().string() + ".tmp." + std::to_string(::getpid()) +
       "." + std::to_string(counter.fetch_add(1)));
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw ConfigError("cannot write '" + tmp.string() + "'");
    out << content;
  }
  fs::rename(tmp, target);
}

std::string resolve_out_dir(const ExperimentConfig& cfg,
                            const std::string& override_dir) {
  if (!override_dir.empty()) return override_dir;
  if (!cfg.out_dir.empty()) return cfg.out_dir;
  if (const char* env = std::getenv("PUMA_LAB_OUT"); env && *env) return env;
  return "puma-out";
}

namespace {

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

int run_verify_marginal(const ExperimentConfig& cfg, const fs::path& out,
                        std::ostream& log) {
  const TabularDistribution dist = cfg.dist.build();
  const auto& vm = cfg.verify_marginal;
  MarginalReport report =
      vm.exact ? verify_marginal_agreement(dist, cfg.policy, vm.k)
               : verify_marginal_agreement_mc(dist, cfg.policy, vm.k,
                                              vm.samples, cfg.master_seed);
  std::ostringstream csv;
  csv << (report.exact ? "j,tv\n" : "j,tv,bound\n");
  bool pass = true;
  for (std::size_t j = 0; j < report.tv.size(); ++j) {
    csv << j << ',' << fmt(report.tv[j]);
    if (!report.exact) {
      csv << ',' << fmt(report.bound[j]);
      if (report.tv[j] > report.bound[j]) pass = false;
    }
    csv << '\n';
  }
  if (report.exact) pass = report.max_tv < vm.tolerance;
  write_file_atomic((out / "marginal.csv").string(), csv.str());

  log << "verify-marginal: max_tv = " << fmt(report.max_tv)
      << (report.exact
              ? " (exact, tolerance " + fmt(vm.tolerance) + ")"
              : " (mc, runs " + std::to_string(report.mc_runs) + ")")
      << (pass ? " PASS" : " FAIL") << '\n';
  return pass ? kExitOk : kExitVerificationFailed;
}

int run_verify_minimizer(const ExperimentConfig& cfg, const fs::path& out,
                         std::ostream& log) {
  const TabularDistribution dist = cfg.dist.build();
  const auto& vm = cfg.verify_minimizer;
  const MinimizerReport report =
      verify_minimizer_preservation(dist, vm.forward, cfg.policy, vm.k);
  const bool pass = report.max_linf < vm.tolerance;

  std::ostringstream csv;
  csv << "forward,max_linf,tolerance,pass\n";
  csv << to_string(vm.forward) << ',' << fmt(report.max_linf) << ','
      << fmt(vm.tolerance) << ',' << (pass ? 1 : 0) << '\n';
  write_file_atomic((out / "minimizer.csv").string(), csv.str());

  log << "verify-minimizer[" << to_string(vm.forward)
      << "]: max_linf = " << fmt(report.max_linf) << (pass ? " PASS" : " FAIL")
      << '\n';
  return pass ? kExitOk : kExitVerificationFailed;
}

int run_complexity(const ExperimentConfig& cfg, const fs::path& out,
                   std::ostream& log) {
  ComplexityConfig cc = cfg.complexity;
  cc.master_seed = cfg.master_seed;
  cc.jobs = cfg.jobs;
  const std::vector<ComplexityRow> rows = sample_complexity_experiment(cc);
  write_file_atomic((out / "complexity.csv").string(), complexity_csv(rows));

  // Per-d medians and the two trend summaries.
  for (const char* method : {"random-masking", "puma-oracle"}) {
    std::vector<double> xs, ys;
    for (int d : cc.d_range) {
      std::vector<double> samples;
      for (const ComplexityRow& row : rows)
        if (row.d == d && row.method == method)
          samples.push_back(static_cast<double>(row.samples));
      std::sort(samples.begin(), samples.end());
      const double med =
          samples.size() % 2
              ? samples[samples.size() / 2]
              : 0.5 * (samples[samples.size() / 2 - 1] +
                       samples[samples.size() / 2]);
      xs.push_back(d);
      ys.push_back(med);
    }
    if (xs.size() >= 2) {
      std::vector<double> lin = ys, logged = ys;
      for (double& y : logged) y = std::log(y);
      const LinearFit linear_fit = least_squares(xs, lin);
      const LinearFit log_fit = least_squares(xs, logged);
      log << "sample-complexity[" << method
          << "]: linear fit R2 = " << fmt(linear_fit.r2)
          << ", log-slope = " << fmt(log_fit.slope) << " nats/d\n";
    }
  }
  int censored = 0;
  for (const ComplexityRow& row : rows)
    if (row.censored) ++censored;
  if (censored > 0)
    log << "sample-complexity: " << censored << " row(s) censored at budget "
        << cc.budget << '\n';
  return kExitOk;
}

int run_train(const ExperimentConfig& cfg, const fs::path& out,
              std::ostream& log) {
  const RunConfig run = make_run_config(cfg, cfg.train.method);
  TabularMDM model;
  const std::vector<MetricRow> rows = run_training(run, &model);
  const std::string name = "metrics_" + to_string(cfg.train.method) + ".csv";
  write_file_atomic((out / name).string(), metrics_csv(rows));

  std::ostringstream model_text;
  save_model(model, model_text);
  write_file_atomic((out / "model.txt").string(), model_text.str());

  if (cfg.train.robustness) {
    std::vector<PolicySpec> policies;
    for (PolicyKind kind : {PolicyKind::MaxProb, PolicyKind::Margin,
                            PolicyKind::NegEntropy}) {
      PolicySpec p = run.eval_policy;
      p.kind = kind;
      policies.push_back(p);
    }
    std::ostringstream csv;
    csv << "policy,gen_accuracy\n";
    for (const PolicyAccuracy& pa :
         policy_robustness_report(model, run.dist, policies, run.eval_k))
      csv << to_string(pa.policy.kind) << ',' << fmt(pa.gen_accuracy) << '\n';
    write_file_atomic((out / "policy_robustness.csv").string(), csv.str());
  }

  const MetricRow& last = rows.back();
  log << "train[" << to_string(cfg.train.method)
      << "]: final gen_accuracy = " << fmt(last.gen_accuracy)
      << ", posterior_l1 = " << fmt(last.posterior_l1) << " (" << name
      << ")\n";
  return kExitOk;
}

int run_compare(const ExperimentConfig& cfg, const fs::path& out,
                std::ostream& log) {
  const RunConfig a = make_run_config(cfg, cfg.compare.method_a);
  const RunConfig b = make_run_config(cfg, cfg.compare.method_b);
  std::vector<std::uint64_t> seeds;
  for (int s = 0; s < cfg.compare.seeds; ++s)
    seeds.push_back(cfg.master_seed + static_cast<std::uint64_t>(s));
  const CompareResult result =
      compare_runs(a, b, cfg.compare.threshold, seeds, cfg.jobs);

  std::ostringstream csv;
  csv << "seed,steps_" << to_string(cfg.compare.method_a) << ",steps_"
      << to_string(cfg.compare.method_b) << '\n';
  for (std::size_t i = 0; i < seeds.size(); ++i)
    csv << seeds[i] << ',' << fmt(result.steps_a[i]) << ','
        << fmt(result.steps_b[i]) << '\n';
  write_file_atomic((out / "compare.csv").string(), csv.str());

  if (result.unreachable) {
    log << "compare: threshold " << fmt(cfg.compare.threshold)
        << " unreachable by either arm\n";
    return kExitVerificationFailed;
  }
  log << "compare[" << to_string(cfg.compare.method_a) << "/"
      << to_string(cfg.compare.method_b) << "]: ratio = " << fmt(result.ratio)
      << " (medians " << fmt(result.median_a) << " / " << fmt(result.median_b)
      << ")\n";
  return kExitOk;
}

int run_plot(const ExperimentConfig& cfg, const fs::path& out,
             std::ostream& log) {
  const std::string written = emit_plot(cfg.plot, out.string());
  log << "plot: wrote " << written << '\n';
  return kExitOk;
}

}  // namespace

int run_experiment(const ExperimentConfig& cfg, const std::string& out_dir,
                   std::ostream& log) {
  if (!cfg.command) throw ConfigError("no command given");
  const fs::path out(out_dir);
  fs::create_directories(out);
  write_file_atomic((out / "config.echo.cfg").string(),
                    canonical_config(cfg));

  switch (*cfg.command) {
    case Command::VerifyMarginal: return run_verify_marginal(cfg, out, log);
    case Command::VerifyMinimizer: return run_verify_minimizer(cfg, out, log);
    case Command::SampleComplexity: return run_complexity(cfg, out, log);
    case Command::Train: return run_train(cfg, out, log);
    case Command::Compare: return run_compare(cfg, out, log);
    case Command::Plot: return run_plot(cfg, out, log);
  }
  throw ConfigError("no command given");
}

}  // namespace puma
