#pragma once

#include <iosfwd>

#include "puma/plot.hpp"

namespace puma {

// Exit codes: 0 success, 1 verification failure, 2 usage/config error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitVerificationFailed = 1;
inline constexpr int kExitUsage = 2;

// Temp-write + rename so parallel runs never expose partial files.
void write_file_atomic(const std::string& path, const std::string& content);

// Output directory resolution: explicit override, then the config's [run]
// out, then $PUMA_LAB_OUT, then "puma-out".
std::string resolve_out_dir(const ExperimentConfig& cfg,
                            const std::string& override_dir);

// Dispatches cfg.command, writes artifacts (plus the canonical config echo)
// into the output directory, prints one summary line per verification.
int run_experiment(const ExperimentConfig& cfg, const std::string& out_dir,
                   std::ostream& log);

}  // namespace puma
