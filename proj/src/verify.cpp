// SPDX-License-Identifier: Apache-2.0
#include "fusion/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "fusion/encoder.hpp"
#include "fusion/guidance.hpp"
#include "fusion/io.hpp"
#include "fusion/sampler.hpp"

namespace fusion {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

CheckResult check(const std::string& group, const std::string& name, double value, double tolerance,
                  std::string detail = {}) {
  return CheckResult{group, name, value <= tolerance, value, tolerance, std::move(detail)};
}

double max_abs_diff(VecView a, VecView b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

// ---- schedule -------------------------------------------------------------

std::vector<DiffusionSchedule> probe_schedules() {
  return {DiffusionSchedule::linear(100, 1e-4, 0.05), DiffusionSchedule::linear(1000, 1e-4, 0.02),
          DiffusionSchedule::linear(100, 1e-4, 0.2), DiffusionSchedule::linear(1, 0.1, 0.1)};
}

void schedule_checks(std::vector<CheckResult>& out) {
  double recurrence = 0.0;
  double monotone_gap = std::numeric_limits<double>::infinity();
  for (const DiffusionSchedule& s : probe_schedules()) {
    for (int t = 1; t <= s.steps(); ++t) {
      recurrence = std::max(recurrence, rel(s.alpha_bar(t), s.alpha_bar(t - 1) * (1.0 - s.beta(t))));
      monotone_gap = std::min(monotone_gap, s.alpha_bar(t - 1) - s.alpha_bar(t));
    }
  }
  out.push_back(check("schedule", "alpha_bar_recurrence", recurrence, 1e-12));
  out.push_back(CheckResult{"schedule", "alpha_bar_strictly_decreasing", monotone_gap > 0.0, monotone_gap, 0.0,
                            "smallest a_{t-1} - a_t"});

  double boundary_err = 0.0;
  double worst_feasibility = 0.0;
  double min_radicand = std::numeric_limits<double>::infinity();
  for (const DiffusionSchedule& s : probe_schedules()) {
    for (const SigmaProfile& p : {SigmaProfile::boundary(), SigmaProfile::ddim(0.0), SigmaProfile::ddim(0.5),
                                  SigmaProfile::ddim(1.0)}) {
      for (int t = 1; t <= s.steps(); ++t) {
        const double sigma = sigma_at(s, p, t);
        const double room = 1.0 - s.alpha_bar(t - 1);
        worst_feasibility = std::max(worst_feasibility, sigma * sigma - room * (1.0 + kFeasibilitySlack));
        min_radicand = std::min(min_radicand, 2.0 - 2.0 * s.alpha_bar(t - 1) - sigma * sigma);
        if (p.kind == SigmaKind::boundary) boundary_err = std::max(boundary_err, std::abs(sigma - std::sqrt(room)));
      }
    }
  }
  out.push_back(check("schedule", "boundary_sigma_exact", boundary_err, 0.0));
  out.push_back(check("schedule", "sigma_feasible", worst_feasibility, 0.0, "max sigma^2 - (1 - a_{t-1})"));
  out.push_back(CheckResult{"schedule", "fused_radicand_nonnegative", min_radicand >= 0.0, min_radicand, 0.0,
                            "min 2 - 2 a_{t-1} - sigma^2"});
}

// ---- model ----------------------------------------------------------------

ConditionSet random_oracle_condition(const MixtureWorld& world, Rng& rng) {
  const std::size_t kind = rng.index(5);
  const double strength = rng.index(4) == 0 ? kHardMask : rng.uniform(0.0, 8.0);
  const std::size_t i = rng.index(world.num_identities());
  const std::size_t c = rng.index(world.num_styles());
  ConditionSet cond;
  if (kind == 1 || kind == 3) cond.identity = identity_log_weights(world, i, strength, c, rng.uniform(0.0, 3.0));
  if (kind == 2 || kind == 3) cond.text = style_log_weights(world, c, strength);
  if (kind == 4) cond.identity = pair_log_weights(world, i, c);
  cond.gamma = rng.index(3) == 0 ? 1.0 : rng.uniform(0.0, 1.0);
  return cond;
}

void model_checks(std::vector<CheckResult>& out, Rng& rng) {
  const DiffusionSchedule sch = DiffusionSchedule::linear(100, 1e-4, 0.05);
  const std::vector<MixtureWorld> worlds{MixtureWorld::conflicting(), MixtureWorld::independent(),
                                         MixtureWorld::overlapping()};
  const double h = 1e-5;
  double worst = 0.0;
  for (int probe = 0; probe < 100; ++probe) {
    const MixtureWorld& world = worlds[rng.index(worlds.size())];
    const int t = 1 + static_cast<int>(rng.index(100));
    const ConditionSet cond = random_oracle_condition(world, rng);
    Vec x = rng.normal_vec(world.dim());
    for (double& v : x) v *= 2.0;
    const Vec eps = oracle_predict_eps(world, sch, x, cond, t);
    Vec fd(world.dim());
    for (std::size_t j = 0; j < x.size(); ++j) {
      Vec xp = x, xm = x;
      xp[j] += h;
      xm[j] -= h;
      fd[j] = -std::sqrt(1.0 - sch.alpha_bar(t)) *
              (oracle_log_density(world, sch, xp, cond, t) - oracle_log_density(world, sch, xm, cond, t)) / (2.0 * h);
    }
    double diff = 0.0;
    for (std::size_t j = 0; j < fd.size(); ++j) diff += (eps[j] - fd[j]) * (eps[j] - fd[j]);
    worst = std::max(worst, std::sqrt(diff) / std::max(std::sqrt(norm2(fd)), 1e-3));
  }
  out.push_back(check("model", "oracle_matches_log_density_gradient", worst, 1e-4, "100 probes, h = 1e-5"));

  double null_diff = 0.0;
  double gamma0_diff = 0.0;
  double roundtrip = 0.0;
  for (int probe = 0; probe < 50; ++probe) {
    const MixtureWorld& world = worlds[rng.index(worlds.size())];
    const int t = 1 + static_cast<int>(rng.index(100));
    const Vec x = rng.normal_vec(world.dim());
    const Vec uncond = oracle_predict_eps(world, sch, x, ConditionSet::none(), t);
    const Vec full_support(world.num_components(), 0.0);
    null_diff = std::max(null_diff, max_abs_diff(oracle_predict_eps(world, sch, x, ConditionSet::identity_only(full_support), t), uncond));
    ConditionSet scaled = random_oracle_condition(world, rng);
    scaled.text.reset();
    scaled.gamma = 0.0;
    gamma0_diff = std::max(gamma0_diff, max_abs_diff(oracle_predict_eps(world, sch, x, scaled, t), uncond));
    const double a = sch.alpha_bar(t);
    roundtrip = std::max(roundtrip, max_abs_diff(score_to_eps(eps_to_score(uncond, a), a), uncond));
  }
  out.push_back(check("model", "uniform_condition_is_unconditional", null_diff, 0.0));
  out.push_back(check("model", "gamma_zero_is_unconditional", gamma0_diff, 0.0));
  out.push_back(check("model", "score_eps_round_trip", roundtrip, 1e-12));
}

// ---- guidance -------------------------------------------------------------

double bayes_gap(const MixtureWorld& world, Rng& rng, int probes) {
  const DiffusionSchedule sch = DiffusionSchedule::linear(100, 1e-4, 0.05);
  double worst = 0.0;
  for (int probe = 0; probe < probes; ++probe) {
    const int t = 1 + static_cast<int>(rng.index(100));
    Vec x = rng.normal_vec(world.dim());
    for (double& v : x) v *= 2.0;
    const double strength = rng.uniform(0.5, 6.0);
    const Vec ls = identity_log_weights(world, rng.index(world.num_identities()), strength);
    const Vec lc = style_log_weights(world, rng.index(world.num_styles()), strength);
    GuidanceWeights w;
    w.omega = w.omega1 = w.omega2 = rng.uniform(0.0, 5.0);
    const Vec eu = oracle_predict_eps(world, sch, x, ConditionSet::none(), t);
    const Vec es = oracle_predict_eps(world, sch, x, ConditionSet::identity_only(ls), t);
    const Vec ec = oracle_predict_eps(world, sch, x, ConditionSet::text_only(lc), t);
    const Vec ej = oracle_predict_eps(world, sch, x, ConditionSet::joint(ls, lc), t);
    worst = std::max(worst, max_abs_diff(cfg_independent(eu, es, ec, w), cfg_single(ej, eu, w.omega)));
  }
  return worst;
}

void guidance_checks(std::vector<CheckResult>& out, Rng& rng) {
  out.push_back(check("guidance", "independent_rule_matches_joint_on_factorized_world",
                      bayes_gap(MixtureWorld::independent(), rng, 100), 1e-8));
  const double gap = bayes_gap(MixtureWorld::conflicting(), rng, 100);
  out.push_back(CheckResult{"guidance", "independent_rule_differs_on_correlated_world", gap > 1e-3, gap, 1e-3,
                            "must exceed the tolerance"});

  double lin = 0.0;
  for (int probe = 0; probe < 50; ++probe) {
    const double lambda = rng.uniform(-3.0, 3.0);
    const Vec a = rng.normal_vec(4), b = rng.normal_vec(4), c = rng.normal_vec(4);
    Vec la(4), lb(4), lc(4);
    for (int j = 0; j < 4; ++j) {
      la[j] = lambda * a[j];
      lb[j] = lambda * b[j];
      lc[j] = lambda * c[j];
    }
    GuidanceWeights w;
    w.omega = rng.uniform(-1.0, 5.0);
    w.omega1 = rng.uniform(-1.0, 5.0);
    w.omega2 = rng.uniform(-1.0, 5.0);
    const std::vector<double> omegas{rng.uniform(-1.0, 5.0), rng.uniform(-1.0, 5.0)};
    auto scaled = [&](Vec v) {
      for (double& x : v) x *= lambda;
      return v;
    };
    const double scale = 1.0 + std::abs(lambda) * 10.0;
    lin = std::max(lin, max_abs_diff(cfg_single(la, lb, w.omega), scaled(cfg_single(a, b, w.omega))) / scale);
    lin = std::max(lin, max_abs_diff(cfg_independent(la, lb, lc, w), scaled(cfg_independent(a, b, c, w))) / scale);
    lin = std::max(lin, max_abs_diff(cfg_multi(la, {lb, lc}, omegas), scaled(cfg_multi(a, {b, c}, omegas))) / scale);
  }
  out.push_back(check("guidance", "combiners_are_linear", lin, 1e-13));
}

// ---- posterior ------------------------------------------------------------

struct PosteriorProbe {
  StepParams p;
  Vec x0;
  Vec x_t;
};

PosteriorProbe random_probe(Rng& rng, std::size_t dim) {
  PosteriorProbe pr;
  const double a = rng.uniform(0.01, 0.98);
  const double a_prev = a + (1.0 - a) * rng.uniform(0.02, 0.98);
  const double sigma = std::sqrt(1.0 - a_prev) * rng.uniform(0.05, 1.0);
  pr.p = StepParams{a, a_prev, sigma};
  pr.x0 = rng.normal_vec(dim);
  pr.x_t = rng.normal_vec(dim);
  return pr;
}

// Composition of sample_prev and renoise is Gaussian: the renoise mean is affine
// in x_prev with slope Sigma A L, so the variances add through that slope.
GaussianMoments composed_moments(const PosteriorProbe& pr) {
  const GaussianMoments prev = prev_moments(pr.x_t, pr.x0, pr.p);
  const PosteriorCoefficients c = renoise_coefficients(pr.x0, pr.p);
  const double slope = c.Sigma_scale * c.A_scale * c.L_scale;
  GaussianMoments out{renoise_moments(prev.mean, pr.x0, pr.p).mean, slope * slope * prev.variance + c.Sigma_scale};
  return out;
}

GaussianMoments hooked_fused_moments(const PosteriorProbe& pr, VecView eps, const VerifyOptions& o) {
  const FusedCoefficients c = o.fused(pr.p);
  GaussianMoments m{Vec(eps.size()), c.noise_coeff * c.noise_coeff};
  for (std::size_t j = 0; j < eps.size(); ++j) m.mean[j] = pr.x_t[j] - c.eps_coeff * eps[j];
  return m;
}

// Eps implied by the probe's (x_t, x0): the prediction that would have produced x0.
Vec implied_eps(const PosteriorProbe& pr) {
  Vec eps(pr.x_t.size());
  for (std::size_t j = 0; j < eps.size(); ++j) {
    eps[j] = (pr.x_t[j] - std::sqrt(pr.p.alpha_bar) * pr.x0[j]) / std::sqrt(1.0 - pr.p.alpha_bar);
  }
  return eps;
}

struct MomentError {
  double worst_z = 0.0;
};

void accumulate_z(MomentError& e, const std::vector<Vec>& draws, const GaussianMoments& target) {
  const std::size_t n = draws.size();
  const std::size_t d = target.mean.size();
  for (std::size_t j = 0; j < d; ++j) {
    double mean = 0.0;
    for (const Vec& x : draws) mean += x[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (const Vec& x : draws) var += (x[j] - mean) * (x[j] - mean);
    var /= static_cast<double>(n - 1);
    const double se_mean = std::sqrt(target.variance / static_cast<double>(n));
    const double se_var = target.variance * std::sqrt(2.0 / static_cast<double>(n - 1));
    e.worst_z = std::max(e.worst_z, std::abs(mean - target.mean[j]) / se_mean);
    e.worst_z = std::max(e.worst_z, std::abs(var - target.variance) / se_var);
  }
}

void posterior_checks(std::vector<CheckResult>& out, Rng& rng, const VerifyOptions& o) {
  const std::size_t dim = 2;
  std::vector<PosteriorProbe> probes;
  for (int i = 0; i < 50; ++i) probes.push_back(random_probe(rng, dim));

  double analytic = 0.0;
  for (const PosteriorProbe& pr : probes) {
    const GaussianMoments two = composed_moments(pr);
    const GaussianMoments one = hooked_fused_moments(pr, implied_eps(pr), o);
    for (std::size_t j = 0; j < dim; ++j) {
      analytic = std::max(analytic, std::abs(two.mean[j] - one.mean[j]) / std::max(std::abs(one.mean[j]), 1e-12));
    }
    analytic = std::max(analytic, rel(two.variance, one.variance));
  }
  out.push_back(check("posterior", "two_path_equivalence_analytic", analytic, 1e-8, "50 probes, relative"));

  MomentError two_path, fused_path;
  const std::size_t n = o.monte_carlo_draws;
  std::vector<Vec> draws(n);
  for (const PosteriorProbe& pr : probes) {
    const Vec eps = implied_eps(pr);
    const GaussianMoments target = hooked_fused_moments(pr, eps, o);
    for (std::size_t k = 0; k < n; ++k) draws[k] = renoise(sample_prev(pr.x_t, pr.x0, pr.p, rng), pr.x0, pr.p, rng);
    accumulate_z(two_path, draws, target);
    for (std::size_t k = 0; k < n; ++k) draws[k] = fused_update(pr.x_t, eps, pr.p, rng);
    accumulate_z(fused_path, draws, target);
  }
  const std::string mc = std::to_string(n) + " draws x 50 probes, worst |z|";
  out.push_back(check("posterior", "two_path_equivalence_monte_carlo", two_path.worst_z, 4.0, mc));
  out.push_back(check("posterior", "fused_update_monte_carlo", fused_path.worst_z, 4.0, mc));

  // Condition the joint Gaussian of (x_{t-1}, x_t) given x0 on x_{t-1} directly.
  {
    const StepParams p{0.5, 0.8, 0.1};
    const double x0 = 0.7, x_prev = -0.3;
    const double k = std::sqrt(1.0 - p.alpha_bar_prev - p.sigma * p.sigma) / std::sqrt(1.0 - p.alpha_bar);
    const double var_t = 1.0 - p.alpha_bar;
    const double cov = k * var_t;
    const double var_prev = k * k * var_t + p.sigma * p.sigma;
    const double mean = std::sqrt(p.alpha_bar) * x0 + cov / var_prev * (x_prev - std::sqrt(p.alpha_bar_prev) * x0);
    const double var = var_t - cov * cov / var_prev;
    const GaussianMoments m = renoise_moments(Vec{x_prev}, Vec{x0}, p);
    out.push_back(check("posterior", "renoise_matches_joint_gaussian_conditioning",
                        std::max(rel(m.mean[0], mean), rel(m.variance, var)), 1e-8));
  }

  const DiffusionSchedule sch = DiffusionSchedule::linear(100, 1e-4, 0.05);
  double worst_ulps = 0.0;
  for (int t = 2; t <= sch.steps(); ++t) {
    const StepParams p = StepParams::at(sch, t, sigma_at(sch, SigmaProfile::boundary(), t));
    const FusedCoefficients c = o.fused(p);
    const double target = std::sqrt(1.0 - p.alpha_bar);
    worst_ulps = std::max({worst_ulps, std::abs(c.eps_coeff - target) / (kEps * target),
                        std::abs(c.noise_coeff - target) / (kEps * target)});
  }
  out.push_back(check("posterior", "boundary_sigma_coefficients_equal", worst_ulps, 4.0,
                      "t = 2..T, error in units of machine epsilon"));
  {
    // At t = 1, a_0 = 1 forces sigma = 0 and both coefficients are 0/0; along the
    // boundary they tend to sqrt(1 - a_1).
    const double a1 = sch.alpha_bar(1);
    const double delta = 1e-10;
    const FusedCoefficients c = o.fused(StepParams{a1, 1.0 - delta, std::sqrt(delta)});
    const double target = std::sqrt(1.0 - a1);
    out.push_back(check("posterior", "boundary_sigma_terminal_limit",
                        std::max(rel(c.eps_coeff, target), rel(c.noise_coeff, target)), 1e-5));
  }

  std::size_t violations = 0;
  double hook_excess = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < 20; ++k) {
    const int T = 10 + static_cast<int>(rng.index(191));
    const double b0 = rng.uniform(1e-5, 1e-3);
    const DiffusionSchedule s = DiffusionSchedule::linear(T, b0, rng.uniform(b0, 0.3));
    SigmaProfile prof;
    switch (k % 3) {
      case 0: prof = SigmaProfile::boundary(); break;
      case 1: prof = SigmaProfile::ddim(rng.uniform(0.0, 1.0)); break;
      default: {
        std::vector<double> v(static_cast<std::size_t>(T));
        for (int t = 1; t <= T; ++t) v[static_cast<std::size_t>(t - 1)] = std::sqrt(1.0 - s.alpha_bar(t - 1)) * rng.uniform(0.0, 1.0);
        prof = SigmaProfile::custom(v);
      }
    }
    violations += check_variance_bound(s, prof).violations;
    for (int t = 2; t <= T; ++t) {
      const StepParams p = StepParams::at(s, t, sigma_at(s, prof, t));
      const FusedCoefficients c = o.fused(p);
      const double langevin = 2.0 * matching_langevin_step(p);
      hook_excess = std::max(hook_excess, c.noise_coeff * c.noise_coeff - langevin * (1.0 + kFeasibilitySlack));
    }
  }
  out.push_back(check("posterior", "variance_bound_report_clean", static_cast<double>(violations), 0.0,
                      "20 random feasible profiles"));
  out.push_back(check("posterior", "fused_noise_below_langevin_noise", hook_excess, 0.0,
                      "max fused variance - 2 lambda"));
}

// ---- sampler --------------------------------------------------------------

FusionConfig random_config(Rng& rng) {
  FusionConfig cfg;
  cfg.m = static_cast<int>(rng.index(3));
  cfg.gamma = rng.uniform(0.0, 1.0);
  cfg.use_refinement = rng.index(4) != 0;
  cfg.weights.omega = rng.uniform(-1.0, 5.0);
  cfg.weights.omega1 = rng.uniform(-1.0, 5.0);
  cfg.weights.omega2 = rng.uniform(-1.0, 5.0);
  cfg.sigma = rng.index(2) == 0 ? SigmaProfile::boundary() : SigmaProfile::ddim(rng.uniform(0.05, 1.0));
  cfg.update = rng.index(2) == 0 ? FusionUpdate::two_step : FusionUpdate::fused;
  const std::size_t mode = rng.index(3);
  cfg.mode = mode == 0 ? SamplerMode::vanilla_cfg : mode == 1 ? SamplerMode::independent : SamplerMode::fusion;
  return cfg;
}

void sampler_checks(std::vector<CheckResult>& out, Rng& rng) {
  const std::vector<MixtureWorld> worlds{MixtureWorld::conflicting(), MixtureWorld::independent()};
  std::size_t mismatched = 0;
  for (int k = 0; k < 10; ++k) {
    const MixtureWorld& world = worlds[rng.index(worlds.size())];
    const DiffusionSchedule sch = DiffusionSchedule::linear(50 + static_cast<int>(rng.index(51)), 1e-4, rng.uniform(0.02, 0.2));
    const OraclePredictor oracle(world, sch);
    ConditionSet cond = random_oracle_condition(world, rng);
    if (!cond.text) cond.text = style_log_weights(world, rng.index(world.num_styles()), rng.uniform(0.0, 6.0));
    FusionConfig cfg = random_config(rng);
    cfg.mode = SamplerMode::fusion;
    cfg.m = 0;
    FusionConfig ind = cfg;
    ind.mode = SamplerMode::independent;
    const std::uint64_t seed = rng.index(1u << 30);
    if (sample_trajectory(cond, cfg, oracle, 16, seed).samples != sample_trajectory(cond, ind, oracle, 16, seed).samples) {
      ++mismatched;
    }
  }
  out.push_back(check("sampler", "m0_fusion_equals_independent_bitwise", static_cast<double>(mismatched), 0.0,
                      "10 random configs"));

  std::size_t failures = 0;
  std::string first_failure;
  for (int k = 0; k < 200; ++k) {
    const MixtureWorld& world = worlds[rng.index(worlds.size())];
    const DiffusionSchedule sch = DiffusionSchedule::linear(20 + static_cast<int>(rng.index(81)), 1e-4, rng.uniform(0.02, 0.2));
    const OraclePredictor oracle(world, sch);
    const ConditionSet cond = random_oracle_condition(world, rng);
    const FusionConfig cfg = random_config(rng);
    try {
      const RunRecord rec = sample_trajectory(cond, cfg, oracle, 4, rng.index(1u << 30));
      for (const Vec& x : rec.samples) {
        if (!all_finite(x)) throw Divergence("non-finite sample", 0);
      }
    } catch (const Error& e) {
      if (failures++ == 0) first_failure = e.what();
    }
  }
  out.push_back(check("sampler", "feasible_configs_stay_finite", static_cast<double>(failures), 0.0,
                      failures ? first_failure : "200 random configs"));

  {
    const OraclePredictor oracle(MixtureWorld::conflicting(), DiffusionSchedule::linear(100, 1e-4, 0.05));
    FusionConfig cfg;
    cfg.gamma = 0.3;
    const ConditionSet cond = ConditionSet::joint(identity_log_weights(oracle.world(), 0, 4.0),
                                                  style_log_weights(oracle.world(), 1, 4.0));
    const bool same = sample_trajectory(cond, cfg, oracle, 8, 5).samples == sample_trajectory(cond, cfg, oracle, 8, 5).samples;
    TrajectoryOptions par;
    par.workers = 3;
    const bool worker_invariant =
        sample_trajectory(cond, cfg, oracle, 8, 5).samples == sample_trajectory(cond, cfg, oracle, 8, 5, par).samples;
    out.push_back(CheckResult{"sampler", "same_seed_same_samples", same && worker_invariant,
                              (same && worker_invariant) ? 0.0 : 1.0, 0.0, "also across worker counts"});
  }
}

// ---- encoder --------------------------------------------------------------

void encoder_checks(std::vector<CheckResult>& out, Rng& rng) {
  const MixtureWorld world = MixtureWorld::conflicting();
  const DiffusionSchedule sch = DiffusionSchedule::linear(20, 1e-4, 0.1);
  ToyDenoiser den(world.dim(), identity_embedding_dim(world), world.num_styles(), {8}, sch);
  den.net().init(rng, 1.0);
  ToyPromptNet net = make_promptnet(den, {6}, rng.index(1u << 30));
  {
    Rng init = Rng::stream(3, 3);
    net.net().init(init, 1.0);
  }
  const double h = 1e-6;
  double worst = 0.0;
  for (int probe = 0; probe < 20; ++probe) {
    const Vec x_ref = rng.normal_vec(world.dim());
    const Vec x0 = rng.normal_vec(world.dim());
    const Vec eps = rng.normal_vec(world.dim());
    const int t = 1 + static_cast<int>(rng.index(20));
    const double lambda = rng.uniform(0.0, 1.0);
    Vec eg(net.net().param_count(), 0.0), dg(den.net().param_count(), 0.0);
    promptnet_loss(net, den, x_ref, x0, eps, t, lambda, eg, dg);
    const bool encoder_side = probe % 2 == 0;
    Mlp& target = encoder_side ? net.net() : den.net();
    const std::size_t idx = rng.index(target.param_count());
    const double saved = target.params()[idx];
    target.params()[idx] = saved + h;
    const double up = promptnet_loss(net, den, x_ref, x0, eps, t, lambda);
    target.params()[idx] = saved - h;
    const double down = promptnet_loss(net, den, x_ref, x0, eps, t, lambda);
    target.params()[idx] = saved;
    const double fd = (up - down) / (2.0 * h);
    const double g = encoder_side ? eg[idx] : dg[idx];
    worst = std::max(worst, std::abs(g - fd) / std::max({std::abs(g), std::abs(fd), 1e-3}));
  }
  out.push_back(check("encoder", "parameter_gradients_match_finite_differences", worst, 1e-4,
                      "20 probes over encoder and denoiser parameters"));

  const ToyPromptNet zero = make_promptnet(den, {6}, 0, true);
  const Vec s = encode(zero, rng.normal_vec(2), rng.normal_vec(2), 5);
  out.push_back(check("encoder", "zero_initialized_encoder_outputs_zero", std::sqrt(norm2(s)), 0.0));
}

}  // namespace

const std::vector<std::string>& verify_groups() {
  static const std::vector<std::string> groups{"schedule", "model", "guidance", "posterior", "sampler", "encoder"};
  return groups;
}

std::vector<CheckResult> run_checks(const VerifyOptions& options) {
  for (const std::string& g : options.groups) {
    if (std::find(verify_groups().begin(), verify_groups().end(), g) == verify_groups().end()) {
      throw InvalidArgument("unknown check group '" + g + "'");
    }
  }
  auto wanted = [&](const std::string& g) {
    return options.groups.empty() || std::find(options.groups.begin(), options.groups.end(), g) != options.groups.end();
  };
  std::vector<CheckResult> out;
  // Each group owns its stream, so filtering does not change any group's probes.
  if (wanted("schedule")) schedule_checks(out);
  if (wanted("model")) {
    Rng rng = Rng::stream(options.seed, 1);
    model_checks(out, rng);
  }
  if (wanted("guidance")) {
    Rng rng = Rng::stream(options.seed, 2);
    guidance_checks(out, rng);
  }
  if (wanted("posterior")) {
    Rng rng = Rng::stream(options.seed, 3);
    posterior_checks(out, rng, options);
  }
  if (wanted("sampler")) {
    Rng rng = Rng::stream(options.seed, 4);
    sampler_checks(out, rng);
  }
  if (wanted("encoder")) {
    Rng rng = Rng::stream(options.seed, 5);
    encoder_checks(out, rng);
  }
  return out;
}

std::string checks_csv(const std::vector<CheckResult>& results) {
  CsvTable t;
  t.header = {"group", "check", "status", "value", "tolerance", "detail"};
  for (const CheckResult& r : results) {
    t.add_row({r.group, r.name, r.passed ? "PASS" : "FAIL", format_double(r.value), format_double(r.tolerance), r.detail});
  }
  return t.str();
}

}  // namespace fusion
