// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fusion/denoiser.hpp"
#include "fusion/encoder.hpp"
#include "fusion/sampler.hpp"

namespace fusion {

enum class Factor { identity, style };

// Posterior probability of every index of one factor at t = 0, uniform prior,
// other factor marginalized.
Vec factor_posterior(const MixtureWorld& world, VecView x, Factor factor);
double component_responsibility(const MixtureWorld& world, VecView x, Factor factor,
                                std::size_t index);

struct AdherenceRow {
  double identity;
  double style;
};

struct AdherenceReport {
  double identity_score = 0.0;
  double style_score = 0.0;
  std::vector<AdherenceRow> rows;
};

AdherenceReport adherence_scores(const std::vector<Vec>& samples, const MixtureWorld& world,
                                 std::size_t target_identity, std::size_t target_style);

// ---- ablations on the exact oracle ----------------------------------------

// Conflicting-conditions experiment. The identity condition is an overfit
// embedding: it selects the target identity and also drags toward the style of
// the reference it was inferred from. The text condition asks for another style.
struct AblationSetup {
  MixtureWorld world = MixtureWorld::conflicting();
  DiffusionSchedule schedule = DiffusionSchedule::linear(100, 1e-4, 0.05);
  std::size_t target_identity = 0;
  std::size_t reference_style = 0;
  std::size_t target_style = 1;
  double identity_strength = 6.0;
  double leak_strength = 6.0;
  double text_strength = 4.0;
  double gamma = 0.05;
  int m = 1;
  GuidanceWeights weights = default_weights();
  SigmaProfile sigma = SigmaProfile::boundary();
  FusionUpdate update = FusionUpdate::two_step;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::size_t samples = 500;
  unsigned workers = 1;

  static GuidanceWeights default_weights();
};

ConditionSet ablation_conditions(const AblationSetup& setup);

struct Variant {
  std::string name;
  FusionConfig config;
};

// vanilla_cfg, independent, fusion_no_refinement, fusion_no_fusion_stage, fusion_full.
std::vector<Variant> ablation_variants(const AblationSetup& setup);

struct AblationRow {
  std::string variant;
  std::uint64_t seed;
  double identity_score;
  double style_score;
  std::vector<Vec> samples;
};

struct VariantSummary {
  std::string variant;
  double identity_score;
  double style_score;
  double min_score() const { return std::min(identity_score, style_score); }
};

struct AblationTable {
  std::vector<AblationRow> rows;  // variant-major, then seed
  std::vector<VariantSummary> summary;
};

// Every variant sees the same seeds, so variants share their random streams.
AblationTable ablation_suite(const AblationSetup& setup);
AblationTable run_variants(const std::vector<Variant>& variants, const ConditionSet& cond,
                           const NoisePredictor& predictor, const MixtureWorld& world,
                           std::size_t target_identity, std::size_t target_style,
                           const std::vector<std::uint64_t>& seeds, std::size_t samples,
                           unsigned workers);

// ---- learned path ----------------------------------------------------------

struct SweepSetup {
  MixtureWorld world = MixtureWorld::conflicting();
  DiffusionSchedule schedule = DiffusionSchedule::linear(100, 1e-4, 0.05);
  std::vector<double> lambdas{0.0, 0.01, 0.1, 1.0, 10.0};
  std::vector<std::uint64_t> seeds{0, 1, 2};
  long denoiser_steps = 4000;
  std::uint64_t denoiser_seed = 0;
  DenoiserTrainingOptions denoiser_options;
  TrainingConfig training = default_training();  // lambda and seed are overwritten per cell
  std::size_t target_identity = 0;
  std::size_t reference_style = 0;
  std::size_t target_style = 1;
  double omega = 2.0;
  SigmaProfile sigma = SigmaProfile::boundary();
  std::size_t samples = 200;
  std::size_t eval_draws = 20000;
  unsigned workers = 1;

  static TrainingConfig default_training();
};

struct SweepRow {
  double lambda;
  std::uint64_t seed;
  double reconstruction_error;
  double identity_score;
  double style_score;
  double embedding_norm;
  std::string status;  // "ok" or the failure message
};

// Reference sample of a customization cell: a draw of the target identity in the
// reference style from stream (seed, 7).
Vec reference_sample(const MixtureWorld& world, std::size_t identity, std::size_t style,
                     std::uint64_t seed);

// One row per (lambda, seed), lambda-major. Each cell trains an encoder against
// the shared denoiser, then samples with S*(x_ref) and a target-style prompt.
// A failing cell is recorded with its message and NaN metrics.
std::vector<SweepRow> regularization_sweep(const SweepSetup& setup, const ToyDenoiser& denoiser);
std::vector<SweepRow> regularization_sweep(const SweepSetup& setup);

// Adherence of samples conditioned on the encoder's S*(x_ref) plus a style prompt,
// averaged over the given prompt styles. Joint classifier-free sampling.
AdherenceReport prompted_adherence(const ToyPromptNet& net, const ToyDenoiser& denoiser,
                                   const MixtureWorld& world, VecView x_ref,
                                   std::size_t target_identity,
                                   const std::vector<std::size_t>& prompt_styles, double omega,
                                   const SigmaProfile& sigma, std::size_t samples,
                                   std::uint64_t seed, unsigned workers = 1,
                                   std::vector<Vec>* samples_out = nullptr);

}  // namespace fusion
