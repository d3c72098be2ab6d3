// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include <CLI11.hpp>

#include "fusion/commands.hpp"
#include "fusion/kernels.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Multi-condition diffusion sampling on analytically tractable toy worlds"};
  app.require_subcommand(1);

  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;

  auto* verify = app.add_subcommand("verify", "Run the numerical invariant checks and print them as CSV");
  std::vector<std::string> filters;
  verify->add_option("--filter", filters, "Only run these check groups")
      ->check(CLI::IsMember(fusion::verify_groups()));
  verify->add_option("--out", out_dir, "Also write verify.csv into this directory");
  verify->add_option("--seed", seed, "Seed for the randomized probes");

  auto* run = app.add_subcommand("run", "Run an experiment described by a JSON config");
  std::string config_path;
  std::string mode = "sample";
  run->add_option("--config", config_path, "Run config (JSON)")->required();
  run->add_option("--mode", mode, "What to run")
      ->check(CLI::IsMember({"train-encoder", "sample", "sweep-lambda", "ablate", "compare"}));
  run->add_option("--out", out_dir, "Output directory (default: config output_dir, then $PROFUSION_OUT, then ./fusion_runs)");
  run->add_option("--seed", seed, "Overrides the config's seed");

  auto* report = app.add_subcommand("report", "Aggregate run records under a directory");
  std::string run_dir;
  report->add_option("run_dir", run_dir, "Directory holding run outputs")->required();
  report->add_option("--out", out_dir, "Where to write report.csv and report.txt (default: run_dir)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : fusion::kExitUsage;
  }

  try {
    if (verify->parsed()) {
      fusion::VerifyCommand cmd;
      cmd.options.groups = filters;
      if (seed) cmd.options.seed = *seed;
      cmd.out_dir = out_dir;
      std::cerr << "kernels: " << fusion::kernels::active().name << "\n";
      return fusion::cmd_verify(cmd, std::cout, std::cerr);
    }
    if (run->parsed()) {
      fusion::RunCommand cmd;
      cmd.config_path = config_path;
      cmd.mode = fusion::run_mode_from_string(mode);
      cmd.out_dir = out_dir;
      cmd.seed = seed;
      return fusion::cmd_run(cmd, std::cout, std::cerr);
    }
    fusion::ReportCommand cmd;
    cmd.run_dir = run_dir;
    cmd.out_dir = out_dir;
    return fusion::cmd_report(cmd, std::cout, std::cerr);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return fusion::kExitFailed;
  }
}
