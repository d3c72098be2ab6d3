// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "fusion/guidance.hpp"
#include "fusion/model.hpp"

using namespace fusion;

namespace {

MixtureWorld unit_gaussian(std::size_t dim) {
  std::vector<double> eye(dim * dim, 0.0);
  for (std::size_t i = 0; i < dim; ++i) eye[i * dim + i] = 1.0;
  return MixtureWorld(dim, 1.0, {Vec(dim, 0.0)}, {StyleMap{eye, Vec(dim, 0.0)}});
}

MixtureWorld symmetric_pair(double mu) {
  return MixtureWorld(1, 0.5, {Vec{-mu}, Vec{mu}}, {StyleMap{{1.0}, {0.0}}});
}

// Log-density of the diffused mixture written out component by component, with
// no shared code with the library's oracle.
double reference_log_density(const MixtureWorld& w, const DiffusionSchedule& s, const Vec& x,
                             const Vec& log_weights, int t) {
  const double a = s.alpha_bar(t);
  const double var = a * w.variance() + 1.0 - a;
  const double d = static_cast<double>(w.dim());
  double total = 0.0, mass = 0.0;
  for (std::size_t k = 0; k < w.num_components(); ++k) {
    if (std::isinf(log_weights[k])) continue;
    double r2 = 0.0;
    for (std::size_t j = 0; j < w.dim(); ++j) {
      const double diff = x[j] - std::sqrt(a) * w.mean(k)[j];
      r2 += diff * diff;
    }
    const double wk = std::exp(log_weights[k]);
    mass += wk;
    total += wk * std::exp(-0.5 * r2 / var) / std::pow(2.0 * M_PI * var, d / 2.0);
  }
  return std::log(total / mass);
}

}  // namespace

TEST_CASE("single standard Gaussian: eps is sqrt(1 - a) x") {
  const auto w = unit_gaussian(3);
  const auto s = DiffusionSchedule::linear(20, 1e-3, 0.1);
  OraclePredictor oracle(w, s);
  const Vec x{0.3, -1.2, 2.0};
  for (int t : {1, 7, 20}) {
    const Vec eps = oracle.predict_eps(x, ConditionSet::none(), t);
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK(eps[j] == doctest::Approx(std::sqrt(1.0 - s.alpha_bar(t)) * x[j]).epsilon(1e-14));
    }
  }
  const auto s36 = DiffusionSchedule::from_alpha_bar({1.0, 0.36});
  const Vec e = oracle_predict_eps(unit_gaussian(1), s36, Vec{1.0}, ConditionSet::none(), 1);
  CHECK(e[0] == doctest::Approx(0.8).epsilon(1e-14));
}

TEST_CASE("symmetric pair gives zero eps at the origin") {
  const auto s = DiffusionSchedule::linear(10, 1e-3, 0.1);
  const Vec e = oracle_predict_eps(symmetric_pair(1.5), s, Vec{0.0}, ConditionSet::none(), 4);
  CHECK(e[0] == doctest::Approx(0.0).scale(1.0).epsilon(1e-15));
}

TEST_CASE("gamma = 0 and the full uniform support are both unconditional") {
  const auto w = MixtureWorld::conflicting();
  const auto s = DiffusionSchedule::linear(100, 1e-4, 0.05);
  const Vec x{0.7, 1.1};
  const Vec uncond = oracle_predict_eps(w, s, x, ConditionSet::none(), 30);
  auto c = ConditionSet::joint(identity_log_weights(w, 0, kHardMask), style_log_weights(w, 1, 4.0), 0.0);
  c.text.reset();
  CHECK(oracle_predict_eps(w, s, x, c, 30) == uncond);
  const Vec uniform(w.num_components(), 0.0);
  CHECK(oracle_predict_eps(w, s, x, ConditionSet::identity_only(uniform), 30) == uncond);
  CHECK(oracle_predict_eps(w, s, x, ConditionSet::text_only(uniform), 30) == uncond);
}

TEST_CASE("eps vanishes at the diffused mean of an isolated selected component") {
  const auto w = MixtureWorld::conflicting();
  const auto s = DiffusionSchedule::linear(100, 1e-4, 0.05);
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t c = 0; c < 2; ++c) {
      const int t = 10;
      Vec x = w.mean(w.component(i, c));
      for (double& v : x) v *= std::sqrt(s.alpha_bar(t));
      const Vec e = oracle_predict_eps(w, s, x, ConditionSet::identity_only(pair_log_weights(w, i, c)), t);
      for (double v : e) CHECK(std::abs(v) < 1e-6);
    }
  }
}

TEST_CASE("oracle eps matches finite differences of an independent log-density") {
  const auto w = MixtureWorld::conflicting();
  const auto s = DiffusionSchedule::linear(100, 1e-4, 0.05);
  Rng rng(5);
  const double h = 1e-5;
  double worst = 0.0;
  for (int probe = 0; probe < 100; ++probe) {
    const int t = 1 + static_cast<int>(rng.index(100));
    Vec x{rng.uniform(-3, 3), rng.uniform(-1, 4)};
    ConditionSet cond;
    switch (probe % 4) {
      case 0: break;
      case 1: cond = ConditionSet::identity_only(identity_log_weights(w, rng.index(2), rng.uniform(0, 8))); break;
      case 2: cond = ConditionSet::text_only(style_log_weights(w, rng.index(2), rng.uniform(0, 8))); break;
      default:
        cond = ConditionSet::joint(identity_log_weights(w, rng.index(2), 3.0), style_log_weights(w, rng.index(2), 2.0),
                                   rng.uniform(0, 1));
    }
    const Vec lw = combined_log_weights(w, cond);
    const Vec eps = oracle_predict_eps(w, s, x, cond, t);
    for (std::size_t j = 0; j < 2; ++j) {
      Vec xp = x, xm = x;
      xp[j] += h;
      xm[j] -= h;
      const double grad =
          (reference_log_density(w, s, xp, lw, t) - reference_log_density(w, s, xm, lw, t)) / (2 * h);
      const double fd = -std::sqrt(1.0 - s.alpha_bar(t)) * grad;
      const double err = std::abs(eps[j] - fd) / std::max(std::abs(fd), 1e-3);
      worst = std::max(worst, err);
    }
    // The library's own log-density agrees with the reference.
    CHECK(oracle_log_density(w, s, x, cond, t) == doctest::Approx(reference_log_density(w, s, x, lw, t)).epsilon(1e-10));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("score and eps round trip") {
  const auto w = MixtureWorld::conflicting();
  const auto s = DiffusionSchedule::linear(100, 1e-4, 0.05);
  Rng rng(8);
  for (int k = 0; k < 50; ++k) {
    const int t = 1 + static_cast<int>(rng.index(100));
    const Vec x{rng.uniform(-3, 3), rng.uniform(-1, 4)};
    const Vec eps = oracle_predict_eps(w, s, x, ConditionSet::none(), t);
    const Vec back = score_to_eps(eps_to_score(eps, s.alpha_bar(t)), s.alpha_bar(t));
    for (std::size_t j = 0; j < 2; ++j) CHECK(std::abs(back[j] - eps[j]) <= 1e-12);
  }
}

TEST_CASE("predictor contract errors") {
  const auto w = MixtureWorld::conflicting();
  const auto s = DiffusionSchedule::linear(10, 1e-4, 0.05);
  OraclePredictor oracle(w, s);
  CHECK_THROWS_AS(oracle.predict_eps(Vec{1.0}, ConditionSet::none(), 1), DimensionMismatch);
  CHECK_THROWS_AS(oracle.predict_eps(Vec{1.0, NAN}, ConditionSet::none(), 1), InvalidArgument);
  CHECK_THROWS_AS(oracle.predict_eps(Vec{1.0, 0.0}, ConditionSet::none(), 0), InvalidArgument);
  CHECK_THROWS_AS(oracle.predict_eps(Vec{1.0, 0.0}, ConditionSet::none(), 11), InvalidArgument);
  // Hard masks that select nothing together.
  const auto cond = ConditionSet::joint(pair_log_weights(w, 0, 0), pair_log_weights(w, 1, 1));
  CHECK_THROWS_AS(oracle.predict_eps(Vec{1.0, 0.0}, cond, 3), InvalidArgument);
  CHECK_THROWS_AS(ConditionSet::joint(Vec{0, 0, 0, 0}, Vec{0, 0, 0, 0}, 1.5).validate(), InvalidArgument);
  CHECK_THROWS_AS(identity_log_weights(w, 5, 1.0), InvalidArgument);
  CHECK_THROWS_AS(style_log_weights(w, 0, -1.0), InvalidArgument);
}

TEST_CASE("world moments") {
  const auto w = MixtureWorld::conflicting();
  CHECK(w.num_components() == 4);
  CHECK(w.identity_of(w.component(1, 0)) == 1);
  CHECK(w.style_of(w.component(1, 0)) == 0);
  // Means: (-2,0), (-0.6,3), (2,0), (0.6,3).
  const Vec m = w.data_mean();
  CHECK(m[0] == doctest::Approx(0.0).scale(1.0));
  CHECK(m[1] == doctest::Approx(1.5));
  const auto cov = w.data_covariance();
  CHECK(cov[0] == doctest::Approx(0.1225 + (4 + 0.36 + 4 + 0.36) / 4.0));
  CHECK(cov[3] == doctest::Approx(0.1225 + 2.25));
  CHECK(cov[1] == doctest::Approx(0.0).scale(1.0));
  CHECK_THROWS_AS(MixtureWorld(2, -1.0, {Vec{0, 0}}, {StyleMap{{1, 0, 0, 1}, {0, 0}}}), InvalidArgument);
  CHECK_THROWS_AS(MixtureWorld(2, 1.0, {Vec{0, 0}}, {StyleMap{{1, 0, 0}, {0, 0}}}), DimensionMismatch);
}
