#pragma once

#include "puma/experiments.hpp"

namespace puma {

// Parse or validation failure; message carries the file/line when known.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Command {
  VerifyMarginal,
  VerifyMinimizer,
  SampleComplexity,
  Train,
  Compare,
  Plot,
};

std::string to_string(Command command);
Command parse_command(const std::string& name);

struct DistConfig {
  bool is_zm = false;
  ZmSpec zm;
  int length = 2;
  int vocab = 2;
  // default: the two-point uniform fixture
  std::vector<std::pair<Sequence, double>> rows{{{0, 0}, 1.0}, {{1, 1}, 1.0}};
  std::optional<int> answer_index;

  bool operator==(const DistConfig&) const = default;

  TabularDistribution build() const;
};

struct VerifyMarginalConfig {
  int k = 4;
  bool exact = true;
  long samples = 100000;  // Monte Carlo runs per chain kind
  double tolerance = 1e-10;

  bool operator==(const VerifyMarginalConfig&) const = default;
};

struct VerifyMinimizerConfig {
  ForwardKind forward = ForwardKind::TeacherForced;
  int k = 4;
  double tolerance = 1e-10;

  bool operator==(const VerifyMinimizerConfig&) const = default;
};

struct TrainSection {
  TrainMethod method = TrainMethod::Puma;
  long steps = 1000;
  long eval_every = 100;
  int batch = 32;
  double lr = 0.1;
  KSchedule schedule;
  std::optional<double> tau;
  PolicySpec eval_policy;
  int eval_k = 0;
  int traj_probes = 100;
  int prompt_len = 0;
  bool robustness = false;

  bool operator==(const TrainSection&) const = default;
};

struct CompareSection {
  TrainMethod method_a = TrainMethod::Vanilla;
  TrainMethod method_b = TrainMethod::Puma;
  double threshold = 0.8;
  int seeds = 5;

  bool operator==(const CompareSection&) const = default;
};

struct PlotSection {
  std::vector<std::string> inputs;
  std::vector<std::string> labels;
  std::string x = "step";
  std::string y = "gen_accuracy";
  std::string yscale = "linear";  // linear | log
  std::string group_by;           // optional column: one series per value
  std::string aggregate = "none"; // none | median | mean
  std::string output = "plot.svg";

  bool operator==(const PlotSection&) const = default;
};

struct ExperimentConfig {
  std::optional<Command> command;  // may come from the CLI subcommand
  std::uint64_t master_seed = 0;
  std::string out_dir;  // empty: $PUMA_LAB_OUT or "puma-out"
  int jobs = 1;

  DistConfig dist;
  PolicySpec policy;
  VerifyMarginalConfig verify_marginal;
  VerifyMinimizerConfig verify_minimizer;
  ComplexityConfig complexity;
  TrainSection train;
  CompareSection compare;
  PlotSection plot;

  bool operator==(const ExperimentConfig&) const = default;
};

// Flat "key = value" format, sections introduced by [name], '#' comments,
// unknown sections or keys are hard errors naming the offender and line.
// Range violations are collected and reported together.
ExperimentConfig parse_config(const std::string& path);
ExperimentConfig parse_config_text(const std::string& text,
                                   const std::string& origin);

// Canonical echo: parsing it reproduces an equal config.
std::string canonical_config(const ExperimentConfig& cfg);

// RunConfig for the training sections of cfg (train and compare commands).
RunConfig make_run_config(const ExperimentConfig& cfg, TrainMethod method);

}  // namespace puma
