// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>

#include "fusion/config.hpp"
#include "fusion/verify.hpp"

namespace fusion {

// Exit codes shared by all commands.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailed = 1;  // a check failed or a run aborted
inline constexpr int kExitUsage = 2;   // bad flags, config or input paths

enum class RunMode { train_encoder, sample, sweep_lambda, ablate, compare };
std::string to_string(RunMode mode);
RunMode run_mode_from_string(const std::string& name);

// Output directory precedence: --out, then the config's output_dir, then the
// PROFUSION_OUT environment variable, then ./fusion_runs.
std::filesystem::path resolve_output_dir(const std::optional<std::string>& cli_out, const RunConfig& config);

struct VerifyCommand {
  VerifyOptions options;
  std::optional<std::string> out_dir;  // also write verify.csv there
};
int cmd_verify(const VerifyCommand& cmd, std::ostream& out, std::ostream& err);

struct RunCommand {
  std::string config_path;
  RunMode mode = RunMode::sample;
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;  // overrides the config's seed
};
// Writes run_record.json, metrics.csv, samples.csv (when the mode samples),
// plot.svg (when enabled), timing.txt and mode-specific extras. Everything is
// staged and moved into place only when the run succeeds.
int cmd_run(const RunCommand& cmd, std::ostream& out, std::ostream& err);
// Same, with an already parsed config.
int run_with_config(RunConfig config, RunMode mode, const std::filesystem::path& out_dir, std::ostream& out,
                    std::ostream& err);

struct ReportCommand {
  std::string run_dir;
  std::optional<std::string> out_dir;  // defaults to run_dir
};
// Aggregates every run_record.json under run_dir into report.csv (one row per
// run) and report.txt. Unreadable records are listed as warnings and skipped.
int cmd_report(const ReportCommand& cmd, std::ostream& out, std::ostream& err);

}  // namespace fusion
