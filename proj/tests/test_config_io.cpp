// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "fusion/config.hpp"
#include "fusion/io.hpp"

using namespace fusion;

namespace {

std::string error_path(const Json& doc) {
  try {
    parse_config(doc);
  } catch (const ConfigError& e) {
    return e.path();
  }
  return "<accepted>";
}

}  // namespace

TEST_CASE("an empty document gives the documented defaults") {
  const RunConfig c = parse_config(Json::object());
  CHECK(c.seed == 0);
  CHECK(!c.output_dir);
  CHECK(c.world.preset == "conflicting");
  CHECK(c.schedule.T == 100);
  CHECK(c.schedule.beta_end == 0.05);
  CHECK(c.fusion.mode == SamplerMode::fusion);
  CHECK(c.fusion.m == 1);
  CHECK(c.fusion.gamma == 0.05);
  CHECK(c.fusion.use_refinement);
  CHECK(c.fusion.sigma.kind == SigmaKind::boundary);
  CHECK(c.fusion.weights.omega1 == 0.0);
  CHECK(c.fusion.weights.omega2 == 2.0);
  CHECK(c.sampling.predictor == PredictorKind::oracle);
  CHECK(c.sampling.samples == 500);
  CHECK(c.sampling.repeats == 5);
  CHECK(c.training.finetune_steps == 50);
  CHECK(c.training.finetune_batch == 8);
  CHECK(c.sweep.lambdas == std::vector<double>{0.0, 0.01, 0.1, 1.0, 10.0});
  CHECK(c.sweep.repeats == 3);
  CHECK(c.repeat_seeds(3) == std::vector<std::uint64_t>{0, 1, 2});
}

TEST_CASE("unknown keys and bad values name their key path") {
  CHECK(error_path(Json{{"sed", 1}}) == "sed");
  CHECK(error_path(Json{{"fusion", {{"gama", 0.5}}}}) == "fusion.gama");
  CHECK(error_path(Json{{"fusion", {{"gamma", 1.5}}}}) == "fusion.gamma");
  CHECK(error_path(Json{{"fusion", {{"gamma", "high"}}}}) == "fusion.gamma");
  CHECK(error_path(Json{{"fusion", {{"m", -1}}}}) == "fusion.m");
  CHECK(error_path(Json{{"fusion", {{"mode", "joint"}}}}) == "fusion.mode");
  CHECK(error_path(Json{{"fusion", {{"use_refinement", 1}}}}) == "fusion.use_refinement");
  CHECK(error_path(Json{{"schedule", {{"T", 2.5}}}}) == "schedule.T");
  CHECK(error_path(Json{{"schedule", {{"sigma", "custom"}, {"sigma_values", {0.1}}}}}) == "schedule.sigma_values");
  CHECK(error_path(Json{{"world", {{"preset", "moon"}}}}) == "world.preset");
  CHECK(error_path(Json{{"conditions", {{"target_style", 7}}}}) == "conditions.target_style");
  CHECK(error_path(Json{{"conditions", {{"extra_identities", {1}}}}}) == "guidance.omega_list");
  CHECK(error_path(Json{{"sampling", {{"predictor", "gpt"}}}}) == "sampling.predictor");
  CHECK(error_path(Json{{"training", {{"encoder_hidden", Json::array()}}}}) == "training.encoder_hidden");
  CHECK(error_path(Json{{"sweep", {{"lambdas", {0.0, -1.0}}}}}) == "sweep.lambdas[1]");
  CHECK(error_path(Json{{"sweep", 3}}) == "sweep");
  CHECK(error_path(Json::array()) == "<root>");
}

TEST_CASE("strengths accept inf as a hard mask") {
  const RunConfig c = parse_config(Json{{"conditions", {{"identity_strength", "inf"}, {"leak_strength", 0}}}});
  CHECK(std::isinf(c.conditions.identity_strength));
  const auto world = c.world.build();
  const ConditionSet cond = c.oracle_conditions(world);
  REQUIRE(cond.identity);
  CHECK(std::isinf((*cond.identity)[world.component(1, 0)]));
  CHECK(error_path(Json{{"conditions", {{"text_strength", "lots"}}}}) == "conditions.text_strength");
  // The canonical form writes the mask back as "inf".
  CHECK(to_json(c)["conditions"]["identity_strength"] == "inf");
}

TEST_CASE("canonical form round trips") {
  Json doc{{"seed", 17},
           {"world", {{"preset", "custom"}, {"dim", 1}, {"variance", 0.2},
                      {"identity_means", {{-1.0}, {1.0}}}, {"styles", {{{"A", {1.0}}, {"b", {0.0}}}}}}},
           {"schedule", {{"T", 10}, {"sigma", "ddim_eta"}, {"eta", 0.5}}},
           {"fusion", {{"m", 3}, {"update", "fused"}}},
           {"guidance", {{"omega_list", {1.0, 2.0}}}},
           {"conditions", {{"target_style", 0}, {"extra_identities", {1}}}},
           {"sampling", {{"samples", 12}, {"workers", 2}}},
           {"training", {{"lambda", 0.3}, {"augment", true}}}};
  const RunConfig c = parse_config(doc);
  CHECK(c.world.build().dim() == 1);
  CHECK(c.fusion.update == FusionUpdate::fused);
  const Json canon = to_json(c);
  CHECK(to_json(parse_config(canon)) == canon);
  CHECK(canon["seed"] == 17);
  CHECK(canon["training"]["augment"] == true);
}

TEST_CASE("config files") {
  const auto dir = std::filesystem::temp_directory_path() / "fusion_config_test";
  std::filesystem::create_directories(dir);
  write_text(dir / "good.json", R"({"seed": 3, "sampling": {"samples": 4}})");
  write_text(dir / "bad.json", R"({"seed": 3,)");
  CHECK(load_config((dir / "good.json").string()).sampling.samples == 4);
  CHECK_THROWS_AS(load_config((dir / "bad.json").string()), ConfigError);
  CHECK_THROWS_AS(load_config((dir / "missing.json").string()), ConfigError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("csv and number formatting") {
  CHECK(format_double(0.1) == "0.10000000000000001");
  CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
  CHECK(format_double(NAN) == "nan");
  CHECK(format_double(-INFINITY) == "-inf");
  CsvTable t;
  t.header = {"name", "value"};
  t.add_row({"a,b", "say \"hi\""});
  CHECK(t.str() == "name,value\n\"a,b\",\"say \"\"hi\"\"\"\n");
  CHECK_THROWS_AS(t.add_row({"one"}), DimensionMismatch);
  const CsvTable s = samples_table({Vec{1.0, 2.0}}, {"g"}, "group");
  CHECK(s.str() == "group,sample,x0,x1\ng,0,1,2\n");
}

TEST_CASE("checkpoints restore identical predictors") {
  const auto world = MixtureWorld::conflicting();
  const auto schedule = DiffusionSchedule::linear(20, 1e-4, 0.05);
  const ToyDenoiser den = train_denoiser(world, schedule, 30, 1);
  const ToyDenoiser back = denoiser_from_json(Json::parse(denoiser_to_json(den).dump()));
  const Vec x{0.2, 0.9};
  const auto cond = ConditionSet::joint(identity_embedding(world, 1), text_embedding(world, 0));
  CHECK(back.predict_eps(x, cond, 7) == den.predict_eps(x, cond, 7));
  CHECK(back.data_scale() == den.data_scale());

  const ToyPromptNet net = make_promptnet(den, {8}, 2);
  const ToyPromptNet net_back = encoder_from_json(Json::parse(encoder_to_json(net).dump()));
  CHECK(encode(net_back, x, x, 4) == encode(net, x, x, 4));

  Json broken = denoiser_to_json(den);
  broken["params"].erase(0);
  CHECK_THROWS_AS(denoiser_from_json(broken), Error);
  CHECK_THROWS_AS(denoiser_from_json(Json{{"data_dim", 2}}), InvalidArgument);

  const MixtureWorld w2 = world_from_json(world_to_json(world));
  CHECK(w2.mean(3) == world.mean(3));
  CHECK(schedule_from_json(schedule_to_json(schedule)).alpha_bars() == schedule.alpha_bars());
}

TEST_CASE("run records") {
  RunRecord r;
  r.seed = 5;
  r.samples = {Vec{1.0, 2.0}};
  r.metrics = {MetricRow{"all", {{"identity_score", 0.5}, {"gap", NAN}}}};
  const Json j = record_to_json(r, "sample");
  CHECK(j["format"] == "fusion-run-record/1");
  CHECK(j["mode"] == "sample");
  CHECK(j["metrics"][0]["values"]["gap"] == "nan");
  CHECK(j["samples"][0][1] == 2.0);
  const std::string svg = scatter_svg({ScatterSeries{"a", {{0.5, 0.5}}}}, "t");
  CHECK(svg.find("<svg") == 0);
  CHECK(svg.find("circle") != std::string::npos);
}
