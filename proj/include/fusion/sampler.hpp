// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fusion/guidance.hpp"
#include "fusion/model.hpp"
#include "fusion/posterior.hpp"

namespace fusion {

enum class SamplerMode { vanilla_cfg, independent, fusion };
std::string to_string(SamplerMode mode);
SamplerMode sampler_mode_from_string(const std::string& name);

// How one fusion iteration moves x_t: explicit sample_prev + renoise, or the
// equivalent single fused update.
enum class FusionUpdate { two_step, fused };
std::string to_string(FusionUpdate update);
FusionUpdate fusion_update_from_string(const std::string& name);

struct FusionConfig {
  SamplerMode mode = SamplerMode::fusion;
  int m = 1;
  double gamma = 1.0;
  bool use_refinement = true;
  GuidanceWeights weights;
  SigmaProfile sigma = SigmaProfile::boundary();
  FusionUpdate update = FusionUpdate::two_step;

  void validate() const;
};

// x_{t-1} = sqrt(a_{t-1}) x0_hat + sqrt(1 - a_{t-1} - s^2) eps + s z, x0_hat from eps.
Vec ddim_step(VecView x_t, int t, VecView eps_tilde, const DiffusionSchedule& schedule,
              double sigma_t, Rng& rng);

// Classifier-free prediction on the joint condition with gamma applied to identity.
Vec joint_guided_eps(const NoisePredictor& predictor, VecView x, const ConditionSet& cond,
                     double gamma, double omega, int t);
// Independent-conditions prediction: two-slot rule, or the multi-condition rule
// when cond carries extra identities.
Vec independent_guided_eps(const NoisePredictor& predictor, VecView x, const ConditionSet& cond,
                           const GuidanceWeights& w, int t);

// One step of the configured sampler at timestep t.
//   vanilla_cfg: joint guidance with unscaled identity, one DDIM step.
//   independent: independent-conditions guidance, one DDIM step.
//   fusion:      m fusion iterations on (gamma S*, C), then the refinement step;
//                without refinement the first iteration's x_{t-1} is returned;
//                m = 0 is a single independent-conditions step.
Vec fusion_step(VecView x_t, int t, const ConditionSet& cond, const FusionConfig& cfg,
                const NoisePredictor& predictor, Rng& rng);

struct MetricRow {
  std::string label;
  std::vector<std::pair<std::string, double>> values;
};

struct RunRecord {
  std::string config_json;  // snapshot of the configuration that produced it
  std::uint64_t seed = 0;
  std::vector<Vec> samples;
  std::vector<std::vector<Vec>> trajectories;  // per sample, x_T..x_0, when requested
  std::vector<MetricRow> metrics;
  double wall_clock_seconds = 0.0;
};

struct TrajectoryOptions {
  bool keep_trajectories = false;
  unsigned workers = 1;
};

// Runs t = T..1 from x_T ~ N(0, I). Sample n draws every random number from
// Rng::stream(seed, n), so results do not depend on the worker count. Throws
// Divergence naming the timestep if a state turns non-finite.
RunRecord sample_trajectory(const ConditionSet& cond, const FusionConfig& cfg,
                            const NoisePredictor& predictor, std::size_t n_samples,
                            std::uint64_t seed, const TrajectoryOptions& options = {});

}  // namespace fusion
