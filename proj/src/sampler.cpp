// SPDX-License-Identifier: Apache-2.0
#include "fusion/sampler.hpp"

#include <chrono>
#include <cmath>

#include "fusion/kernels.hpp"
#include "fusion/parallel.hpp"

namespace fusion {

std::string to_string(SamplerMode mode) {
  switch (mode) {
    case SamplerMode::vanilla_cfg: return "vanilla_cfg";
    case SamplerMode::independent: return "independent";
    case SamplerMode::fusion: return "fusion";
  }
  return "unknown";
}

SamplerMode sampler_mode_from_string(const std::string& name) {
  if (name == "vanilla_cfg") return SamplerMode::vanilla_cfg;
  if (name == "independent") return SamplerMode::independent;
  if (name == "fusion") return SamplerMode::fusion;
  throw InvalidArgument("unknown sampler mode '" + name + "'");
}

std::string to_string(FusionUpdate update) {
  return update == FusionUpdate::two_step ? "two_step" : "fused";
}

FusionUpdate fusion_update_from_string(const std::string& name) {
  if (name == "two_step") return FusionUpdate::two_step;
  if (name == "fused") return FusionUpdate::fused;
  throw InvalidArgument("unknown fusion update '" + name + "'");
}

void FusionConfig::validate() const {
  if (m < 0) throw InvalidArgument("fusion: m must be >= 0");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw InvalidArgument("fusion: gamma must lie in [0, 1]");
  weights.validate();
}

Vec ddim_step(VecView x_t, int t, VecView eps_tilde, const DiffusionSchedule& schedule,
              double sigma_t, Rng& rng) {
  require_dim("ddim_step: eps_tilde", eps_tilde, x_t.size());
  const StepParams p = StepParams::at(schedule, t, sigma_t);
  if (!std::isfinite(sigma_t) || sigma_t < 0.0 ||
      sigma_t * sigma_t > (1.0 - p.alpha_bar_prev) * (1.0 + kFeasibilitySlack)) {
    throw Infeasible("ddim_step: sigma_t infeasible at t=" + std::to_string(t));
  }
  const Vec x0 = predict_x0(x_t, eps_tilde, p.alpha_bar);
  // Rounding residue of a boundary sigma counts as zero.
  const double room = 1.0 - p.alpha_bar_prev;
  const double r = room - sigma_t * sigma_t > 1e-14 * room ? room - sigma_t * sigma_t : 0.0;
  const Vec z = rng.normal_vec(x_t.size());
  Vec out(x_t.size());
  kernels::lincomb3(std::sqrt(p.alpha_bar_prev), x0, std::sqrt(r), eps_tilde, sigma_t, z,
                    out);
  return out;
}

Vec joint_guided_eps(const NoisePredictor& predictor, VecView x, const ConditionSet& cond,
                     double gamma, double omega, int t) {
  ConditionSet joint = cond;
  joint.gamma = gamma;
  const Vec eps_joint = predictor.predict_eps(x, joint, t);
  const Vec eps_uncond = predictor.predict_eps(x, ConditionSet::none(), t);
  return cfg_single(eps_joint, eps_uncond, omega);
}

Vec independent_guided_eps(const NoisePredictor& predictor, VecView x, const ConditionSet& cond,
                           const GuidanceWeights& w, int t) {
  const Vec eps_uncond = predictor.predict_eps(x, ConditionSet::none(), t);
  const Vec eps_text =
      cond.text ? predictor.predict_eps(x, ConditionSet::text_only(*cond.text), t) : eps_uncond;
  if (cond.extra_identities.empty()) {
    const Vec eps_identity =
        cond.identity ? predictor.predict_eps(x, ConditionSet::identity_only(*cond.identity), t) : eps_uncond;
    return cfg_independent(eps_uncond, eps_identity, eps_text, w);
  }
  std::vector<Vec> eps_identities;
  if (cond.identity) eps_identities.push_back(predictor.predict_eps(x, ConditionSet::identity_only(*cond.identity), t));
  for (const Vec& extra : cond.extra_identities) {
    eps_identities.push_back(predictor.predict_eps(x, ConditionSet::identity_only(extra), t));
  }
  if (w.omega_list.size() != eps_identities.size()) {
    throw InvalidArgument("guidance: omega_list has " + std::to_string(w.omega_list.size()) +
                          " weights for " + std::to_string(eps_identities.size()) + " identity conditions");
  }
  return cfg_multi(eps_uncond, eps_identities, eps_text, w);
}

Vec fusion_step(VecView x_t, int t, const ConditionSet& cond, const FusionConfig& cfg,
                const NoisePredictor& predictor, Rng& rng) {
  const DiffusionSchedule& schedule = predictor.schedule();
  const double sigma = sigma_at(schedule, cfg.sigma, t);
  const double omega = cfg.weights.omega;

  if (cfg.mode == SamplerMode::vanilla_cfg) {
    const Vec eps = joint_guided_eps(predictor, x_t, cond, 1.0, omega, t);
    return ddim_step(x_t, t, eps, schedule, sigma, rng);
  }
  if (cfg.mode == SamplerMode::independent) {
    const Vec eps = independent_guided_eps(predictor, x_t, cond, cfg.weights, t);
    return ddim_step(x_t, t, eps, schedule, sigma, rng);
  }

  const StepParams p = StepParams::at(schedule, t, sigma);
  if (cfg.m >= 1 && cfg.use_refinement && sigma == 0.0) {
    throw Infeasible("fusion_step: sigma_t = 0 at t=" + std::to_string(t) +
                     " leaves re-noising undefined; use m = 0 or a stochastic sigma profile");
  }
  Vec x(x_t.begin(), x_t.end());
  for (int i = 0; i < cfg.m; ++i) {
    const Vec eps = joint_guided_eps(predictor, x, cond, cfg.gamma, omega, t);
    if (cfg.use_refinement && cfg.update == FusionUpdate::fused) {
      x = fused_update(x, eps, p, rng);
      continue;
    }
    const Vec x0 = predict_x0(x, eps, p.alpha_bar);
    Vec x_prev = sample_prev(x, x0, p, rng);
    if (!cfg.use_refinement) return x_prev;
    x = renoise(x_prev, x0, p, rng);
  }
  // With m = 0 the refinement step is all that is left, whatever use_refinement says.
  const Vec eps = independent_guided_eps(predictor, x, cond, cfg.weights, t);
  return ddim_step(x, t, eps, schedule, sigma, rng);
}

namespace {

// The last step has a_0 = 1, which forces sigma_1 = 0 for every profile; there the
// fusion stage's limit is the identity map, so only the refinement step runs.
FusionConfig config_at(const FusionConfig& cfg, int t, double sigma) {
  if (cfg.mode == SamplerMode::fusion && cfg.use_refinement && t == 1 && sigma == 0.0) {
    FusionConfig last = cfg;
    last.m = 0;
    return last;
  }
  return cfg;
}

std::vector<Vec> run_one(const ConditionSet& cond, const FusionConfig& cfg,
                         const NoisePredictor& predictor, std::uint64_t seed, std::size_t index,
                         bool keep) {
  Rng rng = Rng::stream(seed, index);
  const DiffusionSchedule& schedule = predictor.schedule();
  Vec x = rng.normal_vec(predictor.dim());
  std::vector<Vec> path;
  if (keep) path.push_back(x);
  for (int t = schedule.steps(); t >= 1; --t) {
    const double sigma = sigma_at(schedule, cfg.sigma, t);
    x = fusion_step(x, t, cond, config_at(cfg, t, sigma), predictor, rng);
    if (!all_finite(x)) throw Divergence("sample_trajectory: non-finite state", t);
    if (keep) path.push_back(x);
  }
  if (!keep) path.push_back(std::move(x));
  return path;
}

}  // namespace

RunRecord sample_trajectory(const ConditionSet& cond, const FusionConfig& cfg,
                            const NoisePredictor& predictor, std::size_t n_samples,
                            std::uint64_t seed, const TrajectoryOptions& options) {
  cfg.validate();
  cond.validate();
  validate_profile(predictor.schedule(), cfg.sigma);
  const auto start = std::chrono::steady_clock::now();
  RunRecord record;
  record.seed = seed;
  record.samples.resize(n_samples);
  if (options.keep_trajectories) record.trajectories.resize(n_samples);

  auto work = [&](std::size_t n) {
    std::vector<Vec> path = run_one(cond, cfg, predictor, seed, n, options.keep_trajectories);
    record.samples[n] = path.back();
    if (options.keep_trajectories) record.trajectories[n] = std::move(path);
  };

  parallel_for(n_samples, options.workers, work);
  record.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return record;
}

}  // namespace fusion
