#include "puma/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace puma {

std::string to_string(Command command) {
  switch (command) {
    case Command::VerifyMarginal: return "verify-marginal";
    case Command::VerifyMinimizer: return "verify-minimizer";
    case Command::SampleComplexity: return "sample-complexity";
    case Command::Train: return "train";
    case Command::Compare: return "compare";
    case Command::Plot: return "plot";
  }
  throw ContractViolation("unknown command");
}

Command parse_command(const std::string& name) {
  if (name == "verify-marginal") return Command::VerifyMarginal;
  if (name == "verify-minimizer") return Command::VerifyMinimizer;
  if (name == "sample-complexity") return Command::SampleComplexity;
  if (name == "train") return Command::Train;
  if (name == "compare") return Command::Compare;
  if (name == "plot") return Command::Plot;
  throw ConfigError("unknown command '" + name + "'");
}

TabularDistribution DistConfig::build() const {
  if (is_zm) return build_zm(zm);
  return build_tabular(length, vocab, rows);
}

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

struct Parser {
  std::string origin;
  int line_no = 0;
  std::vector<std::string> range_errors;
  ExperimentConfig cfg;
  bool rows_customized = false;

  [[noreturn]] void fail(const std::string& msg) const {
    throw ConfigError(origin + ":" + std::to_string(line_no) + ": " + msg);
  }

  void range_check(bool ok, const std::string& msg) {
    if (!ok) range_errors.push_back(msg);
  }

  long to_long(const std::string& v) {
    try {
      std::size_t pos = 0;
      const long out = std::stol(v, &pos);
      if (pos != v.size()) fail("trailing characters in integer '" + v + "'");
      return out;
    } catch (const ConfigError&) {
      throw;
    } catch (...) {
      fail("expected an integer, got '" + v + "'");
    }
  }

  int to_int(const std::string& v) { return static_cast<int>(to_long(v)); }

  double to_double(const std::string& v) {
    try {
      std::size_t pos = 0;
      const double out = std::stod(v, &pos);
      if (pos != v.size()) fail("trailing characters in number '" + v + "'");
      return out;
    } catch (const ConfigError&) {
      throw;
    } catch (...) {
      fail("expected a number, got '" + v + "'");
    }
  }

  bool to_bool(const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    fail("expected true/false, got '" + v + "'");
  }

  std::vector<std::string> split(const std::string& v, char sep) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(v);
    while (std::getline(in, item, sep)) {
      const std::string t = trim(item);
      if (!t.empty()) out.push_back(t);
    }
    return out;
  }

  std::vector<int> to_int_list(const std::string& v) {
    std::vector<int> out;
    for (const std::string& item : split(v, ',')) out.push_back(to_int(item));
    return out;
  }

  // "0 1 2 : 0.5" -> sequence + weight
  std::pair<Sequence, double> to_support_row(const std::string& v) {
    const auto colon = v.find(':');
    if (colon == std::string::npos) fail("support row needs 'tokens : weight'");
    Sequence seq;
    std::istringstream tokens(v.substr(0, colon));
    std::string tok;
    while (tokens >> tok) seq.push_back(static_cast<Token>(to_long(tok)));
    if (seq.empty()) fail("support row has no tokens");
    return {seq, to_double(trim(v.substr(colon + 1)))};
  }

  PolicyKind to_policy_kind(const std::string& v) {
    try {
      return parse_policy_kind(v);
    } catch (const ContractViolation& e) {
      fail(e.what());
    }
  }

  void handle(const std::string& section, const std::string& key,
              const std::string& value) {
    if (section == "run") {
      if (key == "command") cfg.command = parse_command(value);
      else if (key == "seed") cfg.master_seed = static_cast<std::uint64_t>(to_long(value));
      else if (key == "out") cfg.out_dir = value;
      else if (key == "jobs") cfg.jobs = to_int(value);
      else fail("unknown key '" + key + "' in [run]");
    } else if (section == "dist") {
      if (key == "kind") {
        if (value == "zm") cfg.dist.is_zm = true;
        else if (value == "table") cfg.dist.is_zm = false;
        else fail("dist kind must be 'zm' or 'table'");
      } else if (key == "m") cfg.dist.zm.m = to_int(value);
      else if (key == "d") cfg.dist.zm.d = to_int(value);
      else if (key == "eta") cfg.dist.zm.eta = to_double(value);
      else if (key == "theta") cfg.dist.zm.theta = to_int(value);
      else if (key == "permutation") cfg.dist.zm.permutation = to_int_list(value);
      else if (key == "length") cfg.dist.length = to_int(value);
      else if (key == "vocab") cfg.dist.vocab = to_int(value);
      else if (key == "row") {
        if (!rows_customized) {
          cfg.dist.rows.clear();
          rows_customized = true;
        }
        cfg.dist.rows.push_back(to_support_row(value));
      } else if (key == "answer_index") cfg.dist.answer_index = to_int(value);
      else fail("unknown key '" + key + "' in [dist]");
    } else if (section == "policy") {
      if (key == "kind") cfg.policy.kind = to_policy_kind(value);
      else if (key == "count") cfg.policy.count = to_int(value);
      else if (key == "threshold") cfg.policy.threshold = to_double(value);
      else if (key == "block_size") cfg.policy.block_size = to_int(value);
      else fail("unknown key '" + key + "' in [policy]");
    } else if (section == "verify-marginal") {
      if (key == "k") cfg.verify_marginal.k = to_int(value);
      else if (key == "mode") {
        if (value == "exact") cfg.verify_marginal.exact = true;
        else if (value == "mc") cfg.verify_marginal.exact = false;
        else fail("mode must be 'exact' or 'mc'");
      } else if (key == "samples") cfg.verify_marginal.samples = to_long(value);
      else if (key == "tolerance") cfg.verify_marginal.tolerance = to_double(value);
      else fail("unknown key '" + key + "' in [verify-marginal]");
    } else if (section == "verify-minimizer") {
      if (key == "forward") {
        try {
          cfg.verify_minimizer.forward = parse_forward_kind(value);
        } catch (const ContractViolation& e) {
          fail(e.what());
        }
      } else if (key == "k") cfg.verify_minimizer.k = to_int(value);
      else if (key == "tolerance") cfg.verify_minimizer.tolerance = to_double(value);
      else fail("unknown key '" + key + "' in [verify-minimizer]");
    } else if (section == "sample-complexity") {
      if (key == "d_range") cfg.complexity.d_range = to_int_list(value);
      else if (key == "m") cfg.complexity.m = to_int(value);
      else if (key == "eta") cfg.complexity.eta = to_double(value);
      else if (key == "q") cfg.complexity.q = to_double(value);
      else if (key == "delta") cfg.complexity.delta = to_double(value);
      else if (key == "seeds") cfg.complexity.seeds = to_int(value);
      else if (key == "trials") cfg.complexity.trials = to_int(value);
      else if (key == "budget") cfg.complexity.budget = to_long(value);
      else if (key == "uniform_t") cfg.complexity.uniform_t = to_bool(value);
      else fail("unknown key '" + key + "' in [sample-complexity]");
    } else if (section == "train") {
      if (key == "method") cfg.train.method = parse_train_method_checked(value);
      else if (key == "steps") cfg.train.steps = to_long(value);
      else if (key == "eval_every") cfg.train.eval_every = to_long(value);
      else if (key == "batch") cfg.train.batch = to_int(value);
      else if (key == "lr") cfg.train.lr = to_double(value);
      else if (key == "k0") cfg.train.schedule.k0 = to_int(value);
      else if (key == "k_max") cfg.train.schedule.k_max = to_int(value);
      else if (key == "k_increment") cfg.train.schedule.increment = to_int(value);
      else if (key == "k_period") cfg.train.schedule.period_steps = to_long(value);
      else if (key == "tau") cfg.train.tau = to_double(value);
      else if (key == "eval_policy") cfg.train.eval_policy.kind = to_policy_kind(value);
      else if (key == "eval_count") cfg.train.eval_policy.count = to_int(value);
      else if (key == "eval_k") cfg.train.eval_k = to_int(value);
      else if (key == "traj_probes") cfg.train.traj_probes = to_int(value);
      else if (key == "prompt_len") cfg.train.prompt_len = to_int(value);
      else if (key == "robustness") cfg.train.robustness = to_bool(value);
      else fail("unknown key '" + key + "' in [train]");
    } else if (section == "compare") {
      if (key == "method_a") cfg.compare.method_a = parse_train_method_checked(value);
      else if (key == "method_b") cfg.compare.method_b = parse_train_method_checked(value);
      else if (key == "threshold") cfg.compare.threshold = to_double(value);
      else if (key == "seeds") cfg.compare.seeds = to_int(value);
      else fail("unknown key '" + key + "' in [compare]");
    } else if (section == "plot") {
      if (key == "input") cfg.plot.inputs = split(value, ',');
      else if (key == "labels") cfg.plot.labels = split(value, ',');
      else if (key == "x") cfg.plot.x = value;
      else if (key == "y") cfg.plot.y = value;
      else if (key == "yscale") cfg.plot.yscale = value;
      else if (key == "group_by") cfg.plot.group_by = value;
      else if (key == "aggregate") cfg.plot.aggregate = value;
      else if (key == "output") cfg.plot.output = value;
      else fail("unknown key '" + key + "' in [plot]");
    } else {
      fail("unknown section [" + section + "]");
    }
  }

  TrainMethod parse_train_method_checked(const std::string& v) {
    try {
      return parse_train_method(v);
    } catch (const ContractViolation& e) {
      fail(e.what());
    }
  }

  void validate_ranges() {
    const auto& c = cfg;
    range_check(c.jobs >= 1, "[run] jobs must be >= 1");
    if (c.dist.is_zm) {
      try {
        c.dist.zm.validate();
      } catch (const ContractViolation& e) {
        range_errors.push_back(std::string("[dist] ") + e.what());
      }
    } else {
      range_check(c.dist.length >= 1, "[dist] length must be >= 1");
      range_check(c.dist.vocab >= 2, "[dist] vocab must be >= 2");
      range_check(!c.dist.rows.empty(), "[dist] table needs support rows");
    }
    if (c.dist.answer_index)
      range_check(*c.dist.answer_index >= 0 &&
                      *c.dist.answer_index <
                          (c.dist.is_zm ? c.dist.zm.length() : c.dist.length),
                  "[dist] answer_index out of range");
    range_check(c.policy.count >= 1, "[policy] count must be >= 1");
    if (c.policy.threshold)
      range_check(*c.policy.threshold > 0.0 && *c.policy.threshold <= 1.0,
                  "[policy] threshold must lie in (0,1]");
    if (c.policy.block_size)
      range_check(*c.policy.block_size >= 1,
                  "[policy] block_size must be >= 1");
    range_check(c.verify_marginal.k >= 1, "[verify-marginal] k must be >= 1");
    range_check(c.verify_marginal.samples >= 1,
                "[verify-marginal] samples must be >= 1");
    range_check(c.verify_marginal.tolerance > 0.0,
                "[verify-marginal] tolerance must be positive");
    range_check(c.verify_minimizer.k >= 1, "[verify-minimizer] k must be >= 1");
    range_check(c.verify_minimizer.tolerance > 0.0,
                "[verify-minimizer] tolerance must be positive");
    range_check(!c.complexity.d_range.empty(),
                "[sample-complexity] d_range must be nonempty");
    for (int d : c.complexity.d_range)
      range_check(d >= 1, "[sample-complexity] d values must be >= 1");
    range_check(c.complexity.m >= 4 && c.complexity.m % 2 == 0,
                "[sample-complexity] m must be even and >= 4");
    range_check(c.complexity.eta > 0.0 && c.complexity.eta < 0.5,
                "[sample-complexity] eta must lie in (0, 1/2)");
    range_check(c.complexity.q > 0.0 && c.complexity.q < 1.0,
                "[sample-complexity] q must lie in (0,1)");
    range_check(c.complexity.delta > 0.0 && c.complexity.delta < 1.0,
                "[sample-complexity] delta must lie in (0,1)");
    range_check(c.complexity.seeds >= 1, "[sample-complexity] seeds >= 1");
    range_check(c.complexity.trials >= 1, "[sample-complexity] trials >= 1");
    range_check(c.complexity.budget >= 1, "[sample-complexity] budget >= 1");
    range_check(c.train.steps >= 1, "[train] steps must be >= 1");
    range_check(c.train.eval_every >= 1 &&
                    c.train.steps % c.train.eval_every == 0,
                "[train] eval_every must divide steps");
    range_check(c.train.batch >= 1, "[train] batch must be >= 1");
    range_check(c.train.lr > 0.0, "[train] lr must be positive");
    range_check(c.train.schedule.k0 >= 1, "[train] k0 must be >= 1");
    range_check(c.train.schedule.k_max >= c.train.schedule.k0,
                "[train] k_max must be >= k0");
    range_check(c.train.schedule.increment >= 0, "[train] k_increment >= 0");
    range_check(c.train.schedule.period_steps >= 1, "[train] k_period >= 1");
    if (c.train.tau)
      range_check(*c.train.tau > 0.0 && *c.train.tau <= 1.0,
                  "[train] tau must lie in (0,1]");
    range_check(c.train.eval_policy.count >= 1, "[train] eval_count >= 1");
    range_check(c.train.eval_k >= 0, "[train] eval_k >= 0");
    range_check(c.train.traj_probes >= 1, "[train] traj_probes >= 1");
    range_check(c.train.prompt_len >= 0, "[train] prompt_len >= 0");
    range_check(c.compare.threshold >= 0.0 && c.compare.threshold <= 1.0,
                "[compare] threshold must lie in [0,1]");
    range_check(c.compare.seeds >= 1, "[compare] seeds must be >= 1");
    range_check(c.plot.yscale == "linear" || c.plot.yscale == "log",
                "[plot] yscale must be 'linear' or 'log'");
    range_check(c.plot.aggregate == "none" || c.plot.aggregate == "median" ||
                    c.plot.aggregate == "mean",
                "[plot] aggregate must be none, median, or mean");
    if (!range_errors.empty()) {
      std::string all = origin + ": invalid configuration:";
      for (const std::string& e : range_errors) all += "\n  - " + e;
      throw ConfigError(all);
    }
  }
};

}  // namespace

ExperimentConfig parse_config_text(const std::string& text,
                                   const std::string& origin) {
  Parser parser;
  parser.origin = origin;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  while (std::getline(in, raw)) {
    ++parser.line_no;
    const auto hash = raw.find('#');
    if (hash != std::string::npos) raw = raw.substr(0, hash);
    const std::string line = trim(raw);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') parser.fail("unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) parser.fail("empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) parser.fail("expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) parser.fail("empty key");
    if (section.empty()) parser.fail("key '" + key + "' outside any section");
    parser.handle(section, key, value);
  }
  parser.validate_ranges();
  return parser.cfg;
}

ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str(), path);
}

namespace {

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string join_ints(const std::vector<int>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(xs[i]);
  }
  return out;
}

std::string join_strings(const std::vector<std::string>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ",";
    out += xs[i];
  }
  return out;
}

}  // namespace

std::string canonical_config(const ExperimentConfig& cfg) {
  std::ostringstream out;
  out << "[run]\n";
  if (cfg.command) out << "command = " << to_string(*cfg.command) << '\n';
  out << "seed = " << cfg.master_seed << '\n';
  if (!cfg.out_dir.empty()) out << "out = " << cfg.out_dir << '\n';
  out << "jobs = " << cfg.jobs << '\n';

  out << "\n[dist]\n";
  if (cfg.dist.is_zm) {
    out << "kind = zm\n";
    out << "m = " << cfg.dist.zm.m << '\n';
    out << "d = " << cfg.dist.zm.d << '\n';
    out << "eta = " << fmt(cfg.dist.zm.eta) << '\n';
    out << "theta = " << cfg.dist.zm.theta << '\n';
    if (!cfg.dist.zm.permutation.empty())
      out << "permutation = " << join_ints(cfg.dist.zm.permutation) << '\n';
  } else {
    out << "kind = table\n";
    out << "length = " << cfg.dist.length << '\n';
    out << "vocab = " << cfg.dist.vocab << '\n';
    for (const auto& [seq, w] : cfg.dist.rows) {
      out << "row =";
      for (Token v : seq) out << ' ' << v;
      out << " : " << fmt(w) << '\n';
    }
  }
  if (cfg.dist.answer_index)
    out << "answer_index = " << *cfg.dist.answer_index << '\n';

  out << "\n[policy]\n";
  out << "kind = " << to_string(cfg.policy.kind) << '\n';
  out << "count = " << cfg.policy.count << '\n';
  if (cfg.policy.threshold)
    out << "threshold = " << fmt(*cfg.policy.threshold) << '\n';
  if (cfg.policy.block_size)
    out << "block_size = " << *cfg.policy.block_size << '\n';

  out << "\n[verify-marginal]\n";
  out << "k = " << cfg.verify_marginal.k << '\n';
  out << "mode = " << (cfg.verify_marginal.exact ? "exact" : "mc") << '\n';
  out << "samples = " << cfg.verify_marginal.samples << '\n';
  out << "tolerance = " << fmt(cfg.verify_marginal.tolerance) << '\n';

  out << "\n[verify-minimizer]\n";
  out << "forward = " << to_string(cfg.verify_minimizer.forward) << '\n';
  out << "k = " << cfg.verify_minimizer.k << '\n';
  out << "tolerance = " << fmt(cfg.verify_minimizer.tolerance) << '\n';

  out << "\n[sample-complexity]\n";
  out << "d_range = " << join_ints(cfg.complexity.d_range) << '\n';
  out << "m = " << cfg.complexity.m << '\n';
  out << "eta = " << fmt(cfg.complexity.eta) << '\n';
  out << "q = " << fmt(cfg.complexity.q) << '\n';
  out << "delta = " << fmt(cfg.complexity.delta) << '\n';
  out << "seeds = " << cfg.complexity.seeds << '\n';
  out << "trials = " << cfg.complexity.trials << '\n';
  out << "budget = " << cfg.complexity.budget << '\n';
  out << "uniform_t = " << (cfg.complexity.uniform_t ? "true" : "false") << '\n';

  out << "\n[train]\n";
  out << "method = " << to_string(cfg.train.method) << '\n';
  out << "steps = " << cfg.train.steps << '\n';
  out << "eval_every = " << cfg.train.eval_every << '\n';
  out << "batch = " << cfg.train.batch << '\n';
  out << "lr = " << fmt(cfg.train.lr) << '\n';
  out << "k0 = " << cfg.train.schedule.k0 << '\n';
  out << "k_max = " << cfg.train.schedule.k_max << '\n';
  out << "k_increment = " << cfg.train.schedule.increment << '\n';
  out << "k_period = " << cfg.train.schedule.period_steps << '\n';
  if (cfg.train.tau) out << "tau = " << fmt(*cfg.train.tau) << '\n';
  out << "eval_policy = " << to_string(cfg.train.eval_policy.kind) << '\n';
  out << "eval_count = " << cfg.train.eval_policy.count << '\n';
  out << "eval_k = " << cfg.train.eval_k << '\n';
  out << "traj_probes = " << cfg.train.traj_probes << '\n';
  out << "prompt_len = " << cfg.train.prompt_len << '\n';
  out << "robustness = " << (cfg.train.robustness ? "true" : "false") << '\n';

  out << "\n[compare]\n";
  out << "method_a = " << to_string(cfg.compare.method_a) << '\n';
  out << "method_b = " << to_string(cfg.compare.method_b) << '\n';
  out << "threshold = " << fmt(cfg.compare.threshold) << '\n';
  out << "seeds = " << cfg.compare.seeds << '\n';

  out << "\n[plot]\n";
  if (!cfg.plot.inputs.empty())
    out << "input = " << join_strings(cfg.plot.inputs) << '\n';
  if (!cfg.plot.labels.empty())
    out << "labels = " << join_strings(cfg.plot.labels) << '\n';
  out << "x = " << cfg.plot.x << '\n';
  out << "y = " << cfg.plot.y << '\n';
  out << "yscale = " << cfg.plot.yscale << '\n';
  if (!cfg.plot.group_by.empty())
    out << "group_by = " << cfg.plot.group_by << '\n';
  out << "aggregate = " << cfg.plot.aggregate << '\n';
  out << "output = " << cfg.plot.output << '\n';
  return out.str();
}

RunConfig make_run_config(const ExperimentConfig& cfg, TrainMethod method) {
  RunConfig run;
  run.dist = cfg.dist.build();
  if (cfg.dist.is_zm)
    run.answer_index = cfg.dist.zm.observation_position();
  if (cfg.dist.answer_index) run.answer_index = cfg.dist.answer_index;
  run.method = method;
  run.policy = cfg.policy;
  run.schedule = cfg.train.schedule;
  run.tau = cfg.train.tau;
  run.batch = cfg.train.batch;
  run.lr = cfg.train.lr;
  run.total_steps = cfg.train.steps;
  run.eval_every = cfg.train.eval_every;
  run.eval_policy = cfg.train.eval_policy;
  run.eval_k = cfg.train.eval_k;
  run.traj_probes = cfg.train.traj_probes;
  run.prompt_len = cfg.train.prompt_len;
  run.seed = cfg.master_seed;
  return run;
}

}  // namespace puma
