// SPDX-License-Identifier: Apache-2.0
#include "fusion/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <map>
#include <memory>
#include <set>

#include "fusion/io.hpp"
#include "fusion/kernels.hpp"

namespace fs = std::filesystem;

namespace fusion {

std::string to_string(RunMode mode) {
  switch (mode) {
    case RunMode::train_encoder: return "train-encoder";
    case RunMode::sample: return "sample";
    case RunMode::sweep_lambda: return "sweep-lambda";
    case RunMode::ablate: return "ablate";
    case RunMode::compare: return "compare";
  }
  return "unknown";
}

RunMode run_mode_from_string(const std::string& name) {
  for (RunMode m : {RunMode::train_encoder, RunMode::sample, RunMode::sweep_lambda, RunMode::ablate, RunMode::compare}) {
    if (to_string(m) == name) return m;
  }
  throw InvalidArgument("unknown mode '" + name + "'");
}

fs::path resolve_output_dir(const std::optional<std::string>& cli_out, const RunConfig& config) {
  if (cli_out) return *cli_out;
  if (config.output_dir) return *config.output_dir;
  if (const char* env = std::getenv("PROFUSION_OUT"); env && *env) return env;
  return "fusion_runs";
}

namespace {

using Files = std::vector<std::pair<std::string, std::string>>;

CsvTable metrics_table(const std::vector<MetricRow>& rows) {
  CsvTable t;
  t.header.push_back("label");
  std::vector<std::string> names;
  for (const MetricRow& r : rows) {
    for (const auto& [k, v] : r.values) {
      if (std::find(names.begin(), names.end(), k) == names.end()) names.push_back(k);
    }
  }
  t.header.insert(t.header.end(), names.begin(), names.end());
  for (const MetricRow& r : rows) {
    std::vector<std::string> line{r.label};
    for (const std::string& n : names) {
      auto it = std::find_if(r.values.begin(), r.values.end(), [&](const auto& kv) { return kv.first == n; });
      line.push_back(it == r.values.end() ? "" : format_double(it->second));
    }
    t.add_row(std::move(line));
  }
  return t;
}

struct Prepared {
  std::unique_ptr<NoisePredictor> predictor;
  ConditionSet cond;
};

Prepared prepare_predictor(const RunConfig& c, const MixtureWorld& world, Files& files) {
  Prepared p;
  if (c.sampling.predictor == PredictorKind::oracle) {
    p.predictor = std::make_unique<OraclePredictor>(world, c.build_schedule());
    p.cond = c.oracle_conditions(world);
  } else {
    auto den = std::make_unique<ToyDenoiser>(
        train_denoiser(world, c.build_schedule(), c.training.denoiser_steps, c.seed, c.training.denoiser));
    files.emplace_back("denoiser.json", denoiser_to_json(*den).dump(2) + "\n");
    p.predictor = std::move(den);
    p.cond = c.embedded_conditions(world);
  }
  p.cond.gamma = 1.0;
  return p;
}

std::string variants_svg(const AblationTable& table, const std::string& title) {
  std::vector<ScatterSeries> series;
  for (const VariantSummary& s : table.summary) {
    ScatterSeries ser{s.variant, {}};
    for (const AblationRow& r : table.rows) {
      if (r.variant == s.variant) ser.points.emplace_back(r.identity_score, r.style_score);
    }
    series.push_back(std::move(ser));
  }
  return scatter_svg(series, title);
}

void add_samples(RunRecord& rec, Files& files, const std::vector<Vec>& samples,
                 const std::vector<std::string>& labels, const std::string& column) {
  rec.samples.insert(rec.samples.end(), samples.begin(), samples.end());
  files.emplace_back("samples.csv", samples_table(samples, labels, column).str());
}

void run_sample(const RunConfig& c, RunRecord& rec, Files& files) {
  const MixtureWorld world = c.world.build();
  Prepared p = prepare_predictor(c, world, files);
  TrajectoryOptions opts;
  opts.workers = c.sampling.workers;
  opts.keep_trajectories = c.sampling.keep_trajectories;
  std::vector<Vec> all;
  std::vector<std::string> labels;
  ScatterSeries points{to_string(c.fusion.mode), {}};
  double id_sum = 0.0, st_sum = 0.0;
  for (std::uint64_t seed : c.repeat_seeds(c.sampling.repeats)) {
    RunRecord r = sample_trajectory(p.cond, c.fusion, *p.predictor, c.sampling.samples, seed, opts);
    const AdherenceReport rep = adherence_scores(r.samples, world, c.conditions.target_identity, c.conditions.target_style);
    rec.metrics.push_back({"seed_" + std::to_string(seed), {{"identity_score", rep.identity_score}, {"style_score", rep.style_score}}});
    points.points.emplace_back(rep.identity_score, rep.style_score);
    id_sum += rep.identity_score;
    st_sum += rep.style_score;
    for (const Vec& x : r.samples) {
      all.push_back(x);
      labels.push_back(std::to_string(seed));
    }
    for (auto& traj : r.trajectories) rec.trajectories.push_back(std::move(traj));
  }
  const double n = static_cast<double>(c.sampling.repeats);
  rec.metrics.push_back({"mean", {{"identity_score", id_sum / n}, {"style_score", st_sum / n}}});
  add_samples(rec, files, all, labels, "seed");
  if (c.sampling.svg) files.emplace_back("plot.svg", scatter_svg({points}, "adherence per seed"));
}

void run_variants_mode(const RunConfig& c, bool per_seed, RunRecord& rec, Files& files) {
  const MixtureWorld world = c.world.build();
  Prepared p = prepare_predictor(c, world, files);
  AblationSetup setup = c.ablation_setup();
  const AblationTable table =
      run_variants(ablation_variants(setup), p.cond, *p.predictor, world, setup.target_identity, setup.target_style,
                   setup.seeds, setup.samples, setup.workers);
  if (per_seed) {
    for (const AblationRow& r : table.rows) {
      rec.metrics.push_back({r.variant + "@" + std::to_string(r.seed),
                             {{"identity_score", r.identity_score}, {"style_score", r.style_score},
                              {"min_score", std::min(r.identity_score, r.style_score)}}});
    }
    CsvTable summary;
    summary.header = {"variant", "identity_score", "style_score", "min_score"};
    for (const VariantSummary& s : table.summary) {
      summary.add_row({s.variant, format_double(s.identity_score), format_double(s.style_score), format_double(s.min_score())});
    }
    files.emplace_back("summary.csv", summary.str());
  } else {
    for (const VariantSummary& s : table.summary) {
      rec.metrics.push_back({s.variant,
                             {{"identity_score", s.identity_score}, {"style_score", s.style_score}, {"min_score", s.min_score()}}});
    }
  }
  std::vector<Vec> all;
  std::vector<std::string> labels;
  for (const AblationRow& r : table.rows) {
    for (const Vec& x : r.samples) {
      all.push_back(x);
      labels.push_back(r.variant + "@" + std::to_string(r.seed));
    }
  }
  add_samples(rec, files, all, labels, "cell");
  if (c.sampling.svg) files.emplace_back("plot.svg", variants_svg(table, per_seed ? "ablation" : "sampler comparison"));
}

void run_sweep(const RunConfig& c, RunRecord& rec, Files& files) {
  const std::vector<SweepRow> rows = regularization_sweep(c.sweep_setup());
  CsvTable t;
  t.header = {"lambda", "seed", "reconstruction_error", "identity_score", "style_score", "embedding_norm", "status"};
  for (const SweepRow& r : rows) {
    t.add_row({format_double(r.lambda), std::to_string(r.seed), format_double(r.reconstruction_error),
               format_double(r.identity_score), format_double(r.style_score), format_double(r.embedding_norm), r.status});
    rec.metrics.push_back({"lambda_" + format_double(r.lambda) + "@" + std::to_string(r.seed),
                           {{"lambda", r.lambda},
                            {"reconstruction_error", r.reconstruction_error},
                            {"identity_score", r.identity_score},
                            {"style_score", r.style_score},
                            {"embedding_norm", r.embedding_norm}}});
  }
  files.emplace_back("sweep.csv", t.str());
  if (c.sampling.svg) {
    std::vector<ScatterSeries> series;
    for (double lambda : c.sweep.lambdas) {
      ScatterSeries s{"lambda " + format_double(lambda), {}};
      for (const SweepRow& r : rows) {
        if (r.lambda == lambda && r.status == "ok") s.points.emplace_back(r.identity_score, r.style_score);
      }
      series.push_back(std::move(s));
    }
    files.emplace_back("plot.svg", scatter_svg(series, "regularization sweep"));
  }
}

void run_train_encoder(const RunConfig& c, RunRecord& rec, Files& files) {
  const MixtureWorld world = c.world.build();
  const ToyDenoiser den = train_denoiser(world, c.build_schedule(), c.training.denoiser_steps, c.seed, c.training.denoiser);
  files.emplace_back("denoiser.json", denoiser_to_json(den).dump(2) + "\n");
  TrainingConfig tc = c.training.encoder;
  tc.seed = c.seed;
  const Vec x_ref = reference_sample(world, c.conditions.target_identity, c.conditions.reference_style, c.seed);
  const std::vector<std::size_t> prompts{c.conditions.target_style};
  const std::size_t n = c.training.eval_samples;
  const Json training_snapshot = to_json(c)["training"];

  if (tc.free_embedding) {
    const ToyPromptNet net = train_promptnet(world, den, tc);
    const Vec anchor = mean_class_embedding(net, world, c.conditions.target_identity, 256, c.seed);
    const Vec embedding = optimize_free_embedding(den, x_ref, anchor, tc);
    const EmbeddedDenoiser embedded(den, embedding);
    FusionConfig cfg;
    cfg.mode = SamplerMode::vanilla_cfg;
    cfg.weights.omega = c.training.eval_omega;
    cfg.sigma = c.fusion.sigma;
    TrajectoryOptions opts;
    opts.workers = c.sampling.workers;
    const ConditionSet cond = ConditionSet::joint(Vec(den.identity_dim(), 0.0), text_embedding(world, c.conditions.target_style));
    const RunRecord r = sample_trajectory(cond, cfg, embedded, n, c.seed, opts);
    const AdherenceReport rep = adherence_scores(r.samples, world, c.conditions.target_identity, c.conditions.target_style);
    rec.metrics.push_back({"free_embedding", {{"embedding_norm", std::sqrt(norm2(embedding))},
                                              {"anchor_distance", std::sqrt(kernels::sq_dist(embedding, anchor))},
                                              {"identity_score", rep.identity_score},
                                              {"style_score", rep.style_score}}});
    files.emplace_back("embedding.json", Json{{"embedding", embedding}, {"anchor", anchor}}.dump(2) + "\n");
    add_samples(rec, files, r.samples, {}, "");
    return;
  }

  const ToyPromptNet net = train_promptnet(world, den, tc);
  files.emplace_back("encoder.json", encoder_to_json(net, training_snapshot).dump(2) + "\n");
  const EncoderMetrics em = evaluate_encoder(world, net, den, c.training.eval_draws, c.seed + 1000);
  rec.metrics.push_back({"encoder", {{"reconstruction_error", em.reconstruction_error}, {"embedding_norm", em.embedding_norm}}});

  std::vector<Vec> samples;
  const AdherenceReport before = prompted_adherence(net, den, world, x_ref, c.conditions.target_identity, prompts,
                                                    c.training.eval_omega, c.fusion.sigma, n, c.seed,
                                                    c.sampling.workers, c.training.finetune_steps > 0 ? nullptr : &samples);
  rec.metrics.push_back({"before_finetune", {{"identity_score", before.identity_score}, {"style_score", before.style_score}}});
  if (c.training.finetune_steps > 0) {
    const Customized custom = finetune_customize(net, den, x_ref, c.training.finetune_steps, tc.augment, c.seed,
                                                 c.training.finetune_batch, c.training.finetune_learning_rate);
    const AdherenceReport after = prompted_adherence(custom.net, custom.denoiser, world, x_ref,
                                                     c.conditions.target_identity, prompts, c.training.eval_omega,
                                                     c.fusion.sigma, n, c.seed, c.sampling.workers, &samples);
    rec.metrics.push_back({"after_finetune", {{"identity_score", after.identity_score}, {"style_score", after.style_score}}});
    files.emplace_back("encoder_finetuned.json", encoder_to_json(custom.net, training_snapshot).dump(2) + "\n");
    files.emplace_back("denoiser_finetuned.json", denoiser_to_json(custom.denoiser).dump(2) + "\n");
  }
  add_samples(rec, files, samples, {}, "");
}

void write_outputs(const fs::path& out_dir, const Files& files) {
  fs::create_directories(out_dir);
  const fs::path staging = out_dir / ".staging";
  fs::remove_all(staging);
  fs::create_directories(staging);
  try {
    for (const auto& [name, text] : files) write_text(staging / name, text);
    for (const auto& [name, text] : files) fs::rename(staging / name, out_dir / name);
  } catch (...) {
    fs::remove_all(staging);
    throw;
  }
  fs::remove_all(staging);
}

}  // namespace

int run_with_config(RunConfig config, RunMode mode, const fs::path& out_dir, std::ostream& out, std::ostream& err) {
  const auto start = std::chrono::steady_clock::now();
  config.output_dir.reset();  // the snapshot must not depend on where it is written
  RunRecord rec;
  rec.seed = config.seed;
  rec.config_json = to_json(config).dump();
  Files files;
  try {
    switch (mode) {
      case RunMode::sample: run_sample(config, rec, files); break;
      case RunMode::compare: run_variants_mode(config, false, rec, files); break;
      case RunMode::ablate: run_variants_mode(config, true, rec, files); break;
      case RunMode::sweep_lambda: run_sweep(config, rec, files); break;
      case RunMode::train_encoder: run_train_encoder(config, rec, files); break;
    }
    rec.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    files.emplace_back("metrics.csv", metrics_table(rec.metrics).str());
    files.emplace_back("run_record.json", record_to_json(rec, to_string(mode)).dump(2) + "\n");
    // Wall-clock lives outside the JSON/CSV artifacts so those stay byte-identical.
    files.emplace_back("timing.txt", "wall_clock_seconds " + format_double(rec.wall_clock_seconds) + "\n");
    write_outputs(out_dir, files);
  } catch (const std::exception& e) {
    err << "run failed: " << e.what() << "\n";
    return kExitFailed;
  }
  out << metrics_table(rec.metrics).str();
  out << "wrote " << files.size() << " files to " << out_dir.string() << "\n";
  return kExitOk;
}

int cmd_run(const RunCommand& cmd, std::ostream& out, std::ostream& err) {
  RunConfig config;
  try {
    config = load_config(cmd.config_path);
  } catch (const Error& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  }
  if (cmd.seed) config.seed = *cmd.seed;
  const fs::path out_dir = resolve_output_dir(cmd.out_dir, config);
  return run_with_config(std::move(config), cmd.mode, out_dir, out, err);
}

int cmd_verify(const VerifyCommand& cmd, std::ostream& out, std::ostream& err) {
  std::vector<CheckResult> results;
  try {
    results = run_checks(cmd.options);
  } catch (const InvalidArgument& e) {
    err << "verify: " << e.what() << "\n";
    return kExitUsage;
  }
  const std::string csv = checks_csv(results);
  out << csv;
  if (cmd.out_dir) {
    fs::create_directories(*cmd.out_dir);
    write_text(fs::path(*cmd.out_dir) / "verify.csv", csv);
  }
  std::size_t failed = 0;
  for (const CheckResult& r : results) {
    if (!r.passed) {
      ++failed;
      err << "FAILED " << r.group << "/" << r.name << "\n";
    }
  }
  if (results.empty()) err << "verify: no checks selected\n";
  return failed == 0 ? kExitOk : kExitFailed;
}

int cmd_report(const ReportCommand& cmd, std::ostream& out, std::ostream& err) {
  const fs::path root = cmd.run_dir;
  if (!fs::is_directory(root)) {
    err << "report: " << root.string() << " is not a directory\n";
    return kExitUsage;
  }
  std::vector<fs::path> records;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (entry.is_regular_file() && entry.path().filename() == "run_record.json") records.push_back(entry.path());
  }
  std::sort(records.begin(), records.end());

  struct Row {
    std::string run, mode, seed;
    std::size_t samples, metric_rows;
    std::map<std::string, std::pair<double, std::size_t>> sums;
  };
  std::vector<Row> rows;
  std::vector<std::string> warnings;
  std::vector<std::string> names;
  for (const fs::path& p : records) {
    const std::string run = fs::relative(p.parent_path(), root).generic_string();
    try {
      const Json doc = Json::parse(read_text(p));
      Row row{run.empty() ? "." : run, doc.at("mode").get<std::string>(), std::to_string(doc.at("seed").get<std::uint64_t>()),
              doc.at("samples").size(), doc.at("metrics").size(), {}};
      for (const Json& m : doc.at("metrics")) {
        for (auto it = m.at("values").begin(); it != m.at("values").end(); ++it) {
          if (!it.value().is_number()) continue;
          auto& [sum, count] = row.sums[it.key()];
          sum += it.value().get<double>();
          ++count;
          if (std::find(names.begin(), names.end(), it.key()) == names.end()) names.push_back(it.key());
        }
      }
      rows.push_back(std::move(row));
    } catch (const std::exception& e) {
      warnings.push_back(p.string() + ": " + e.what());
    }
  }

  CsvTable t;
  t.header = {"run", "mode", "seed", "samples", "metric_rows"};
  for (const std::string& n : names) t.header.push_back("mean_" + n);
  std::string text = "runs aggregated: " + std::to_string(rows.size()) + "\n";
  for (const Row& r : rows) {
    std::vector<std::string> line{r.run, r.mode, r.seed, std::to_string(r.samples), std::to_string(r.metric_rows)};
    text += r.run + " (" + r.mode + ", seed " + r.seed + ")";
    for (const std::string& n : names) {
      auto it = r.sums.find(n);
      if (it == r.sums.end()) {
        line.push_back("");
        continue;
      }
      const double mean = it->second.first / static_cast<double>(it->second.second);
      line.push_back(format_double(mean));
      char buf[64];
      std::snprintf(buf, sizeof buf, " %s=%.4f", n.c_str(), mean);
      text += buf;
    }
    text += "\n";
    t.add_row(std::move(line));
  }
  if (records.empty()) warnings.push_back("no run_record.json found under " + root.string());
  for (const std::string& w : warnings) {
    err << "warning: " << w << "\n";
    text += "warning: " + w + "\n";
  }
  const fs::path dest = cmd.out_dir ? fs::path(*cmd.out_dir) : root;
  try {
    fs::create_directories(dest);
    write_text(dest / "report.csv", t.str());
    write_text(dest / "report.txt", text);
  } catch (const std::exception& e) {
    err << "report: " << e.what() << "\n";
    return kExitFailed;
  }
  out << text;
  return kExitOk;
}

}  // namespace fusion
