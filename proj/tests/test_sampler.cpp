// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "fusion/sampler.hpp"

using namespace fusion;

namespace {

MixtureWorld shifted_gaussian() {
  return MixtureWorld(2, 0.25, {Vec{1.5, -0.5}}, {StyleMap{{1, 0, 0, 1}, {0, 0}}});
}

// Returns a constant prediction, or NaN from a chosen timestep down.
class ScriptedPredictor final : public NoisePredictor {
 public:
  ScriptedPredictor(DiffusionSchedule s, int nan_from) : schedule_(std::move(s)), nan_from_(nan_from) {}
  std::size_t dim() const override { return 2; }
  const DiffusionSchedule& schedule() const override { return schedule_; }

 protected:
  Vec predict_unchecked(VecView x, const ConditionSet&, int t) const override {
    if (t <= nan_from_) return Vec(2, NAN);
    return Vec{0.1 * x[0], -0.1 * x[1]};
  }

 private:
  DiffusionSchedule schedule_;
  int nan_from_;
};

ConditionSet conflicting_conditions(const MixtureWorld& w) {
  return ConditionSet::joint(identity_log_weights(w, 0, 6.0, 0, 6.0), style_log_weights(w, 1, 4.0));
}

std::pair<Vec, Vec> mean_and_var(const std::vector<Vec>& xs) {
  Vec mean(2, 0.0), var(2, 0.0);
  for (const Vec& x : xs)
    for (std::size_t j = 0; j < 2; ++j) mean[j] += x[j] / xs.size();
  for (const Vec& x : xs)
    for (std::size_t j = 0; j < 2; ++j) var[j] += (x[j] - mean[j]) * (x[j] - mean[j]) / xs.size();
  return {mean, var};
}

}  // namespace

TEST_CASE("terminal DDIM step returns the clean prediction") {
  const auto s = DiffusionSchedule::linear(10, 1e-3, 0.1);
  Rng rng(1);
  const Vec x{0.3, -0.8}, eps{0.5, 0.1};
  const Vec x0 = ddim_step(x, 1, eps, s, 0.0, rng);
  const Vec expected = predict_x0(x, eps, s.alpha_bar(1));
  for (std::size_t j = 0; j < 2; ++j) CHECK(x0[j] == doctest::Approx(expected[j]).epsilon(1e-15));
  CHECK_THROWS_AS(ddim_step(x, 1, eps, s, 0.1, rng), Infeasible);
  Rng a(2), b(2);
  CHECK(ddim_step(x, 5, eps, s, 0.05, a) == ddim_step(x, 5, eps, s, 0.05, b));
}

TEST_CASE("deterministic DDIM with the exact score follows the Gaussian mean path") {
  const auto w = shifted_gaussian();
  const auto s = DiffusionSchedule::linear(100, 1e-4, 0.2);
  Rng rng(3);
  Vec x = w.mean(0);
  for (double& v : x) v *= std::sqrt(s.alpha_bar(100));
  for (int t = 100; t >= 1; --t) {
    const Vec eps = oracle_predict_eps(w, s, x, ConditionSet::none(), t);
    x = ddim_step(x, t, eps, s, 0.0, rng);
  }
  CHECK(x[0] == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(x[1] == doctest::Approx(-0.5).epsilon(1e-12));

  FusionConfig cfg;
  cfg.mode = SamplerMode::vanilla_cfg;
  cfg.weights.omega = 0.0;
  cfg.sigma = SigmaProfile::ddim(0.0);
  OraclePredictor oracle(w, s);
  const auto rec = sample_trajectory(ConditionSet::none(), cfg, oracle, 4000, 4);
  const auto [mean, var] = mean_and_var(rec.samples);
  CHECK(std::abs(mean[0] - 1.5) < 4 * 0.5 / std::sqrt(4000.0));
  CHECK(std::abs(mean[1] + 0.5) < 4 * 0.5 / std::sqrt(4000.0));
  CHECK(var[0] == doctest::Approx(0.25).epsilon(0.1));
  CHECK(var[1] == doctest::Approx(0.25).epsilon(0.1));
}

TEST_CASE("fusion with m = 0 is the independent sampler, bit for bit") {
  const auto w = MixtureWorld::conflicting();
  OraclePredictor oracle(w, DiffusionSchedule::linear(50, 1e-4, 0.05));
  FusionConfig indep;
  indep.mode = SamplerMode::independent;
  indep.weights.omega1 = 0.0;
  indep.weights.omega2 = 2.0;
  FusionConfig fused = indep;
  fused.mode = SamplerMode::fusion;
  fused.m = 0;
  fused.gamma = 0.3;
  const auto cond = conflicting_conditions(w);
  for (bool refine : {true, false}) {
    fused.use_refinement = refine;
    const auto a = sample_trajectory(cond, indep, oracle, 30, 9);
    const auto b = sample_trajectory(cond, fused, oracle, 30, 9);
    CHECK(a.samples == b.samples);
  }
}

TEST_CASE("one fusion iteration without refinement is a joint guided step") {
  const auto w = MixtureWorld::conflicting();
  const auto s = DiffusionSchedule::linear(50, 1e-4, 0.05);
  OraclePredictor oracle(w, s);
  FusionConfig cfg;
  cfg.m = 1;
  cfg.gamma = 1.0;
  cfg.use_refinement = false;
  cfg.weights.omega = 1.5;
  const auto cond = conflicting_conditions(w);
  const Vec x{0.4, 1.1};
  const int t = 20;
  const double sigma = sigma_at(s, cfg.sigma, t);

  Rng r1(5), r2(5), r3(5);
  const Vec got = fusion_step(x, t, cond, cfg, oracle, r1);
  const Vec eps = joint_guided_eps(oracle, x, cond, 1.0, 1.5, t);
  const Vec x0 = predict_x0(x, eps, s.alpha_bar(t));
  CHECK(got == sample_prev(x, x0, t, s, sigma, r2));

  FusionConfig vanilla = cfg;
  vanilla.mode = SamplerMode::vanilla_cfg;
  const Vec v = fusion_step(x, t, cond, vanilla, oracle, r3);
  for (std::size_t j = 0; j < 2; ++j) CHECK(v[j] == doctest::Approx(got[j]).epsilon(1e-12));
}

TEST_CASE("at the boundary sigma a fusion iteration re-draws x_t around the clean prediction") {
  const auto s = DiffusionSchedule::linear(100, 1e-4, 0.05);
  const Vec x{0.4, 1.1}, eps{0.3, -0.7};
  for (int t : {2, 37, 100}) {
    const StepParams p = StepParams::at(s, t, sigma_at(s, SigmaProfile::boundary(), t));
    const Vec x0 = predict_x0(x, eps, p.alpha_bar);
    Rng r1(t), r2(t);
    const Vec fused = fused_update(x, eps, p, r1);
    const Vec z = r2.normal_vec(2);
    for (std::size_t j = 0; j < 2; ++j) {
      const double direct = std::sqrt(p.alpha_bar) * x0[j] + std::sqrt(1 - p.alpha_bar) * z[j];
      CHECK(fused[j] == doctest::Approx(direct).epsilon(1e-12));
    }
    const auto m = renoise_moments(sample_prev(x, x0, p, r1), x0, p);
    for (std::size_t j = 0; j < 2; ++j) CHECK(m.mean[j] == doctest::Approx(std::sqrt(p.alpha_bar) * x0[j]).epsilon(1e-12));
    CHECK(m.variance == doctest::Approx(1 - p.alpha_bar).epsilon(1e-12));
  }
}

TEST_CASE("two-step and fused fusion updates sample the same distribution") {
  const auto w = MixtureWorld::conflicting();
  OraclePredictor oracle(w, DiffusionSchedule::linear(100, 1e-4, 0.05));
  FusionConfig a;
  a.gamma = 0.05;
  a.weights.omega1 = 0.0;
  FusionConfig b = a;
  b.update = FusionUpdate::fused;
  const auto cond = conflicting_conditions(w);
  const auto ra = sample_trajectory(cond, a, oracle, 1500, 1);
  const auto rb = sample_trajectory(cond, b, oracle, 1500, 2);
  const auto [ma, va] = mean_and_var(ra.samples);
  const auto [mb, vb] = mean_and_var(rb.samples);
  for (std::size_t j = 0; j < 2; ++j) {
    CHECK(std::abs(ma[j] - mb[j]) < 4 * std::sqrt((va[j] + vb[j]) / 1500));
  }
}

TEST_CASE("null conditions: fusion samples the unconditional distribution") {
  const auto w = MixtureWorld::conflicting();
  OraclePredictor oracle(w, DiffusionSchedule::linear(100, 1e-4, 0.2));
  FusionConfig fusion;
  FusionConfig plain;
  plain.mode = SamplerMode::vanilla_cfg;
  plain.weights.omega = 0.0;
  const std::size_t n = 3000;
  const auto a = sample_trajectory(ConditionSet::none(), fusion, oracle, n, 11);
  const auto b = sample_trajectory(ConditionSet::none(), plain, oracle, n, 12);
  const auto [ma, va] = mean_and_var(a.samples);
  const auto [mb, vb] = mean_and_var(b.samples);
  // Both samplers carry the same discretization bias of a 100-step stochastic
  // sampler, so they are compared with each other.
  for (std::size_t j = 0; j < 2; ++j) {
    CHECK(std::abs(ma[j] - mb[j]) < 4 * std::sqrt((va[j] + vb[j]) / n));
    CHECK(va[j] == doctest::Approx(vb[j]).epsilon(0.1));
  }
}

TEST_CASE("sampling is reproducible and independent of the worker count") {
  const auto w = MixtureWorld::conflicting();
  OraclePredictor oracle(w, DiffusionSchedule::linear(30, 1e-4, 0.05));
  FusionConfig cfg;
  cfg.gamma = 0.2;
  const auto cond = conflicting_conditions(w);
  const auto a = sample_trajectory(cond, cfg, oracle, 25, 3, {true, 1});
  const auto b = sample_trajectory(cond, cfg, oracle, 25, 3, {true, 3});
  CHECK(a.samples == b.samples);
  CHECK(a.trajectories == b.trajectories);
  REQUIRE(a.trajectories.size() == 25);
  CHECK(a.trajectories[0].size() == 31);
  CHECK(a.trajectories[0].back() == a.samples[0]);
  const auto c = sample_trajectory(cond, cfg, oracle, 25, 4);
  CHECK(c.samples != a.samples);
}

TEST_CASE("sampler failures") {
  const auto s = DiffusionSchedule::linear(50, 1e-4, 0.05);
  SUBCASE("non-finite state names the step") {
    ScriptedPredictor bad(s, 17);
    FusionConfig cfg;
    cfg.mode = SamplerMode::vanilla_cfg;
    try {
      sample_trajectory(ConditionSet::none(), cfg, bad, 3, 0);
      FAIL("expected divergence");
    } catch (const Divergence& e) {
      CHECK(e.step() == 17);
    }
  }
  SUBCASE("deterministic sigma cannot re-noise") {
    OraclePredictor oracle(MixtureWorld::conflicting(), s);
    FusionConfig cfg;
    cfg.sigma = SigmaProfile::ddim(0.0);
    CHECK_THROWS_AS(sample_trajectory(ConditionSet::none(), cfg, oracle, 2, 0), Infeasible);
    cfg.m = 0;
    CHECK_NOTHROW(sample_trajectory(ConditionSet::none(), cfg, oracle, 2, 0));
    cfg.m = 2;
    cfg.use_refinement = false;
    CHECK_NOTHROW(sample_trajectory(ConditionSet::none(), cfg, oracle, 2, 0));
  }
  SUBCASE("invalid configs") {
    OraclePredictor oracle(MixtureWorld::conflicting(), s);
    FusionConfig cfg;
    cfg.m = -1;
    CHECK_THROWS_AS(sample_trajectory(ConditionSet::none(), cfg, oracle, 1, 0), InvalidArgument);
    cfg.m = 1;
    cfg.gamma = 2.0;
    CHECK_THROWS_AS(sample_trajectory(ConditionSet::none(), cfg, oracle, 1, 0), InvalidArgument);
    CHECK_THROWS_AS(sampler_mode_from_string("joint"), InvalidArgument);
    CHECK(sampler_mode_from_string(to_string(SamplerMode::independent)) == SamplerMode::independent);
    CHECK(fusion_update_from_string(to_string(FusionUpdate::fused)) == FusionUpdate::fused);
  }
  SUBCASE("multi-identity guidance needs one weight per identity") {
    const auto w = MixtureWorld::conflicting();
    OraclePredictor oracle(w, s);
    auto cond = conflicting_conditions(w);
    cond.extra_identities.push_back(identity_log_weights(w, 1, 2.0));
    FusionConfig cfg;
    cfg.mode = SamplerMode::independent;
    CHECK_THROWS_AS(sample_trajectory(cond, cfg, oracle, 1, 0), InvalidArgument);
    cfg.weights.omega_list = {1.0, 1.0};
    CHECK_NOTHROW(sample_trajectory(cond, cfg, oracle, 1, 0));
  }
}
