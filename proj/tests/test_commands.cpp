// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <sstream>

#include <sys/wait.h>

#include "fusion/commands.hpp"
#include "fusion/io.hpp"

using namespace fusion;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("fusion_cmd_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Json small_config() {
  return Json{{"seed", 4},
              {"schedule", {{"T", 20}}},
              {"sampling", {{"samples", 16}, {"repeats", 2}}},
              {"training", {{"denoiser_steps", 40}, {"encoder_steps", 20}, {"finetune_steps", 5},
                            {"eval_draws", 50}, {"eval_samples", 8}}},
              {"sweep", {{"lambdas", {0.0, 1.0}}, {"repeats", 1}, {"samples", 8}}}};
}

std::string write_config(const fs::path& dir, const Json& doc) {
  const fs::path p = dir / "config.json";
  write_text(p, doc.dump(2));
  return p.string();
}

struct Outcome {
  int code;
  std::string out, err;
};

Outcome run(const RunCommand& cmd) {
  std::ostringstream out, err;
  const int code = cmd_run(cmd, out, err);
  return {code, out.str(), err.str()};
}

int shell(const std::string& command) {
  const int status = std::system(command.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string cli() {
  const char* p = std::getenv("FUSION_CLI");
  return p ? p : "";
}

}  // namespace

TEST_CASE("verify") {
  std::ostringstream out, err;
  VerifyCommand cmd;
  cmd.options.monte_carlo_draws = 20000;
  CHECK(cmd_verify(cmd, out, err) == kExitOk);
  CHECK(out.str().rfind("group,check,status", 0) == 0);

  SUBCASE("filter") {
    std::ostringstream o, e;
    VerifyCommand only;
    only.options.groups = {"schedule"};
    const fs::path dir = scratch("verify_filter");
    only.out_dir = dir.string();
    CHECK(cmd_verify(only, o, e) == kExitOk);
    CHECK(o.str().find("posterior,") == std::string::npos);
    CHECK(o.str().find("schedule,alpha_bar_recurrence,PASS") != std::string::npos);
    CHECK(fs::exists(dir / "verify.csv"));
  }
  SUBCASE("an injected coefficient bug fails by name") {
    std::ostringstream o, e;
    VerifyCommand broken;
    broken.options.groups = {"posterior"};
    broken.options.monte_carlo_draws = 20000;
    broken.options.fused = [](const StepParams& p) {
      FusedCoefficients c = fused_coefficients(p);
      c.noise_coeff *= 1.01;
      return c;
    };
    CHECK(cmd_verify(broken, o, e) == kExitFailed);
    CHECK(e.str().find("FAILED posterior/two_path_equivalence_analytic") != std::string::npos);
    CHECK(e.str().find("FAILED posterior/boundary_sigma_coefficients_equal") != std::string::npos);
  }
  SUBCASE("unknown group") {
    std::ostringstream o, e;
    VerifyCommand bad;
    bad.options.groups = {"astrology"};
    CHECK(cmd_verify(bad, o, e) == kExitUsage);
  }
}

TEST_CASE("run: compare writes one row per variant and is reproducible") {
  const fs::path dir = scratch("compare");
  RunCommand cmd;
  cmd.config_path = write_config(dir, small_config());
  cmd.mode = RunMode::compare;
  cmd.out_dir = (dir / "a").string();
  const Outcome a = run(cmd);
  REQUIRE(a.code == kExitOk);
  cmd.out_dir = (dir / "b").string();
  REQUIRE(run(cmd).code == kExitOk);

  const std::string metrics = read_text(dir / "a" / "metrics.csv");
  for (const char* v : {"vanilla_cfg,", "independent,", "fusion_no_refinement,", "fusion_no_fusion_stage,", "fusion_full,"}) {
    CHECK(metrics.find(std::string("\n") + v) != std::string::npos);
  }
  for (const char* f : {"metrics.csv", "samples.csv", "run_record.json", "plot.svg"}) {
    CHECK(read_text(dir / "a" / f) == read_text(dir / "b" / f));
  }
  CHECK(fs::exists(dir / "a" / "timing.txt"));
  CHECK(!fs::exists(dir / "a" / ".staging"));

  const Json rec = Json::parse(read_text(dir / "a" / "run_record.json"));
  CHECK(rec["mode"] == "compare");
  CHECK(rec["config"]["seed"] == 4);
  CHECK(!rec["config"].contains("output_dir"));
}

TEST_CASE("run: seed override and per-seed rows") {
  const fs::path dir = scratch("seed");
  RunCommand cmd;
  cmd.config_path = write_config(dir, small_config());
  cmd.out_dir = (dir / "s4").string();
  REQUIRE(run(cmd).code == kExitOk);
  cmd.seed = 9;
  cmd.out_dir = (dir / "s9").string();
  REQUIRE(run(cmd).code == kExitOk);
  const Json a = Json::parse(read_text(dir / "s4" / "run_record.json"));
  const Json b = Json::parse(read_text(dir / "s9" / "run_record.json"));
  CHECK(a["seed"] == 4);
  CHECK(b["seed"] == 9);
  CHECK(b["config"]["seed"] == 9);
  CHECK(a["samples"] != b["samples"]);
  const std::string metrics = read_text(dir / "s9" / "metrics.csv");
  CHECK(metrics.find("seed_9,") != std::string::npos);
  CHECK(metrics.find("seed_10,") != std::string::npos);
  CHECK(metrics.find("mean,") != std::string::npos);
}

TEST_CASE("run: usage errors and runtime failures") {
  const fs::path dir = scratch("errors");
  RunCommand cmd;
  cmd.out_dir = (dir / "out").string();

  cmd.config_path = (dir / "missing.json").string();
  CHECK(run(cmd).code == kExitUsage);

  Json bad = small_config();
  bad["fusion"] = Json{{"gamma", 3.0}};
  cmd.config_path = write_config(dir, bad);
  const Outcome usage = run(cmd);
  CHECK(usage.code == kExitUsage);
  CHECK(usage.err.find("fusion.gamma") != std::string::npos);

  // Deterministic DDIM sigma with a fusion stage is a runtime failure.
  Json infeasible = small_config();
  infeasible["schedule"]["sigma"] = "ddim_eta";
  infeasible["schedule"]["eta"] = 0.0;
  cmd.config_path = write_config(dir, infeasible);
  const Outcome failed = run(cmd);
  CHECK(failed.code == kExitFailed);
  CHECK(failed.err.find("sigma") != std::string::npos);
  CHECK(!fs::exists(dir / "out" / "run_record.json"));
  CHECK(!fs::exists(dir / "out" / ".staging"));
}

TEST_CASE("output directory precedence") {
  RunConfig c;
  ::unsetenv("PROFUSION_OUT");
  CHECK(resolve_output_dir(std::nullopt, c) == "fusion_runs");
  ::setenv("PROFUSION_OUT", "/tmp/from_env", 1);
  CHECK(resolve_output_dir(std::nullopt, c) == "/tmp/from_env");
  c.output_dir = "/tmp/from_config";
  CHECK(resolve_output_dir(std::nullopt, c) == "/tmp/from_config");
  CHECK(resolve_output_dir(std::string("/tmp/from_flag"), c) == "/tmp/from_flag");

  const fs::path dir = scratch("env");
  ::setenv("PROFUSION_OUT", (dir / "env_out").string().c_str(), 1);
  RunCommand cmd;
  cmd.config_path = write_config(dir, small_config());
  REQUIRE(run(cmd).code == kExitOk);
  CHECK(fs::exists(dir / "env_out" / "run_record.json"));
  ::unsetenv("PROFUSION_OUT");
}

TEST_CASE("report") {
  const fs::path dir = scratch("report");
  SUBCASE("empty directory") {
    std::ostringstream o, e;
    CHECK(cmd_report({(dir / "").string(), std::nullopt}, o, e) == kExitOk);
    CHECK(e.str().find("warning") != std::string::npos);
    CHECK(read_text(dir / "report.csv") == "run,mode,seed,samples,metric_rows\n");
  }
  SUBCASE("two runs and a corrupt record") {
    RunCommand cmd;
    cmd.config_path = write_config(dir, small_config());
    cmd.out_dir = (dir / "runs" / "one").string();
    REQUIRE(run(cmd).code == kExitOk);
    cmd.out_dir = (dir / "runs" / "two").string();
    cmd.mode = RunMode::compare;
    REQUIRE(run(cmd).code == kExitOk);

    std::ostringstream o, e;
    CHECK(cmd_report({(dir / "runs").string(), (dir / "rep").string()}, o, e) == kExitOk);
    const std::string csv = read_text(dir / "rep" / "report.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
    CHECK(csv.find("\none,sample,4,32,3,") != std::string::npos);
    CHECK(csv.find("\ntwo,compare,4,") != std::string::npos);
    CHECK(e.str().find("warning") == std::string::npos);

    fs::create_directories(dir / "runs" / "three");
    write_text(dir / "runs" / "three" / "run_record.json", "{ not json");
    std::ostringstream o2, e2;
    CHECK(cmd_report({(dir / "runs").string(), (dir / "rep").string()}, o2, e2) == kExitOk);
    CHECK(e2.str().find("three") != std::string::npos);
    const std::string csv2 = read_text(dir / "rep" / "report.csv");
    CHECK(std::count(csv2.begin(), csv2.end(), '\n') == 3);
  }
  SUBCASE("missing directory") {
    std::ostringstream o, e;
    CHECK(cmd_report({(dir / "nope").string(), std::nullopt}, o, e) == kExitUsage);
  }
}

TEST_CASE("sweep-lambda mode writes the same table as a direct sweep") {
  const fs::path dir = scratch("sweep");
  const Json doc = small_config();
  RunCommand cmd;
  cmd.config_path = write_config(dir, doc);
  cmd.mode = RunMode::sweep_lambda;
  cmd.out_dir = (dir / "out").string();
  REQUIRE(run(cmd).code == kExitOk);

  const auto rows = regularization_sweep(parse_config(doc).sweep_setup());
  REQUIRE(rows.size() == 2);
  CsvTable expected;
  expected.header = {"lambda", "seed", "reconstruction_error", "identity_score", "style_score", "embedding_norm", "status"};
  for (const SweepRow& r : rows) {
    expected.add_row({format_double(r.lambda), std::to_string(r.seed), format_double(r.reconstruction_error),
                      format_double(r.identity_score), format_double(r.style_score), format_double(r.embedding_norm),
                      r.status});
  }
  CHECK(read_text(dir / "out" / "sweep.csv") == expected.str());
}

TEST_CASE("train-encoder writes checkpoints and before/after rows") {
  const fs::path dir = scratch("train");
  Json doc = small_config();
  doc["world"] = Json{{"preset", "overlapping"}};
  RunCommand cmd;
  cmd.config_path = write_config(dir, doc);
  cmd.mode = RunMode::train_encoder;
  cmd.out_dir = (dir / "out").string();
  REQUIRE(run(cmd).code == kExitOk);
  for (const char* f : {"denoiser.json", "encoder.json", "encoder_finetuned.json", "denoiser_finetuned.json"}) {
    CHECK(fs::exists(dir / "out" / f));
  }
  const std::string metrics = read_text(dir / "out" / "metrics.csv");
  CHECK(metrics.find("\nbefore_finetune,") != std::string::npos);
  CHECK(metrics.find("\nafter_finetune,") != std::string::npos);
  const ToyPromptNet net = encoder_from_json(Json::parse(read_text(dir / "out" / "encoder.json")));
  CHECK(net.embed_dim() == 4);

  doc["training"]["free_embedding"] = true;
  cmd.config_path = write_config(dir, doc);
  cmd.out_dir = (dir / "free").string();
  REQUIRE(run(cmd).code == kExitOk);
  CHECK(fs::exists(dir / "free" / "embedding.json"));
}

TEST_CASE("command line") {
  if (cli().empty()) {
    MESSAGE("FUSION_CLI not set; skipping the executable checks");
    return;
  }
  const fs::path dir = scratch("cli");
  const std::string quiet = " >/dev/null 2>&1";
  CHECK(shell(cli() + " verify --filter schedule --filter guidance" + quiet) == 0);
  CHECK(shell(cli() + " verify --filter astrology" + quiet) == kExitUsage);
  CHECK(shell(cli() + " run --config " + (dir / "none.json").string() + quiet) == kExitUsage);
  CHECK(shell(cli() + " run --config x.json --mode bogus" + quiet) == kExitUsage);
  CHECK(shell(cli() + quiet) == kExitUsage);
  const std::string config = write_config(dir, small_config());
  CHECK(shell(cli() + " run --config " + config + " --mode sample --out " + (dir / "a").string() + quiet) == 0);
  CHECK(shell(cli() + " run --config " + config + " --mode sample --seed 4 --out " + (dir / "b").string() + quiet) == 0);
  CHECK(read_text(dir / "a" / "samples.csv") == read_text(dir / "b" / "samples.csv"));
  CHECK(shell(cli() + " report " + dir.string() + quiet) == 0);
  CHECK(fs::exists(dir / "report.csv"));
}
