// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fusion/eval.hpp"

namespace fusion {

using Json = nlohmann::ordered_json;

// A config document that fails validation. The message starts with the key path,
// e.g. "fusion.gamma: must lie in [0, 1]".
class ConfigError : public Error {
 public:
  ConfigError(const std::string& path, const std::string& what)
      : Error(path + ": " + what), path_(path) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

struct WorldSpec {
  std::string preset = "conflicting";  // conflicting | independent | overlapping | custom
  std::size_t dim = 0;
  double variance = 0.0;
  std::vector<Vec> identity_means;
  std::vector<StyleMap> styles;

  MixtureWorld build() const;
};

// The sigma profile lives in the config's schedule section but is stored in
// FusionConfig::sigma; guidance weights likewise land in FusionConfig::weights.
struct ScheduleSpec {
  int T = 100;
  double beta_start = 1e-4;
  double beta_end = 0.05;
};

struct ConditionSpec {
  std::size_t target_identity = 0;
  std::size_t reference_style = 0;
  std::size_t target_style = 1;
  double identity_strength = 6.0;  // oracle log-weight penalty; "inf" is a hard mask
  double leak_strength = 6.0;
  double text_strength = 4.0;
  std::vector<std::size_t> extra_identities;
};

enum class PredictorKind { oracle, denoiser };

struct SamplingSpec {
  PredictorKind predictor = PredictorKind::oracle;
  std::size_t samples = 500;
  std::size_t repeats = 5;  // repeat r uses seed + r
  unsigned workers = 1;
  bool keep_trajectories = false;
  bool svg = true;
};

struct TrainingSpec {
  long denoiser_steps = 4000;
  DenoiserTrainingOptions denoiser;
  TrainingConfig encoder = SweepSetup::default_training();
  long finetune_steps = 50;
  std::size_t finetune_batch = 8;
  double finetune_learning_rate = 1e-2;
  std::size_t eval_draws = 20000;
  std::size_t eval_samples = 200;
  double eval_omega = 0.0;
};

struct SweepSpec {
  std::vector<double> lambdas{0.0, 0.01, 0.1, 1.0, 10.0};
  std::size_t repeats = 3;
  std::size_t samples = 200;
  double omega = 2.0;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::optional<std::string> output_dir;
  WorldSpec world;
  ScheduleSpec schedule;
  FusionConfig fusion = default_fusion();
  ConditionSpec conditions;
  SamplingSpec sampling;
  TrainingSpec training;
  SweepSpec sweep;

  static FusionConfig default_fusion();

  DiffusionSchedule build_schedule() const;
  std::vector<std::uint64_t> repeat_seeds(std::size_t repeats) const;
  // Oracle log-weight conditions described by the conditions section.
  ConditionSet oracle_conditions(const MixtureWorld& world) const;
  // The same conditions in the toy denoiser's embedding vocabulary.
  ConditionSet embedded_conditions(const MixtureWorld& world) const;
  AblationSetup ablation_setup() const;
  SweepSetup sweep_setup() const;
};

// Parses and validates; unknown keys and type errors raise ConfigError with the
// offending key path. Missing keys keep their defaults.
RunConfig parse_config(const Json& doc);
RunConfig load_config(const std::string& path);

// Canonical form with every field spelled out; parse_config(to_json(c)) == c.
Json to_json(const RunConfig& config);

std::string to_string(PredictorKind kind);

}  // namespace fusion
