#include <CLI11.hpp>
#include <iostream>

#include "puma/cli.hpp"

namespace {

struct CommonOpts {
  std::string config_path;
  std::string out_dir;
  int jobs = 0;          // 0 = take from config
  long long seed = -1;   // -1 = take from config
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "experiment config file")
      ->required();
  cmd->add_option("--out", opts.out_dir, "output directory");
  cmd->add_option("--jobs", opts.jobs, "worker pool size for independent runs");
  cmd->add_option("--seed", opts.seed, "master seed override");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"puma-lab: masked-diffusion training lab on exact tabular distributions"};
  app.require_subcommand(1);

  CommonOpts opts;
  const char* commands[] = {"verify-marginal", "verify-minimizer",
                            "sample-complexity", "train", "compare", "plot"};
  for (const char* name : commands) add_common(app.add_subcommand(name), opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : puma::kExitUsage;
  }

  try {
    puma::ExperimentConfig cfg = puma::parse_config(opts.config_path);
    const puma::Command requested =
        puma::parse_command(app.get_subcommands().front()->get_name());
    if (cfg.command && *cfg.command != requested)
      throw puma::ConfigError("config names command '" +
                              puma::to_string(*cfg.command) +
                              "' but the CLI asked for '" +
                              puma::to_string(requested) + "'");
    cfg.command = requested;
    if (opts.seed >= 0) cfg.master_seed = static_cast<std::uint64_t>(opts.seed);
    if (opts.jobs > 0) cfg.jobs = opts.jobs;
    const std::string out = puma::resolve_out_dir(cfg, opts.out_dir);
    return puma::run_experiment(cfg, out, std::cout);
  } catch (const puma::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return puma::kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return puma::kExitUsage;
  }
}
