// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "fusion/rng.hpp"
#include "fusion/schedule.hpp"

using namespace fusion;

TEST_CASE("cumulative products of small schedules") {
  const auto one = DiffusionSchedule::linear(1, 0.1, 0.1);
  CHECK(one.alpha_bars() == std::vector<double>{1.0, 0.9});
  const auto two = DiffusionSchedule::linear(2, 0.1, 0.1);
  CHECK(two.alpha_bar(0) == 1.0);
  CHECK(two.alpha_bar(1) == 0.9);
  CHECK(two.alpha_bar(2) == doctest::Approx(0.81).epsilon(1e-15));
  CHECK(two.beta(2) == 0.1);
}

TEST_CASE("long schedules match a 60-digit cumulative product") {
  // Values from tests/oracles/alpha_bar.py.
  const auto s1000 = DiffusionSchedule::linear(1000, 1e-4, 0.02);
  CHECK(std::abs(s1000.alpha_bar(1000) / 0.00004035829765375683314817635 - 1.0) < 1e-12);
  const auto s100 = DiffusionSchedule::linear(100, 1e-4, 0.05);
  CHECK(std::abs(s100.alpha_bar(100) / 0.07823431562186835056509494 - 1.0) < 1e-12);
}

TEST_CASE("alpha_bar is strictly decreasing and follows the recurrence") {
  const auto s = DiffusionSchedule::linear(100, 1e-4, 0.05);
  for (int t = 1; t <= s.steps(); ++t) {
    CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
    CHECK(s.alpha_bar(t) == s.alpha_bar(t - 1) * (1.0 - s.beta(t)));
  }
  CHECK(s.beta(1) == 1e-4);
  CHECK(s.beta(100) == doctest::Approx(0.05).epsilon(1e-14));
}

TEST_CASE("malformed schedules are rejected") {
  CHECK_THROWS_AS(DiffusionSchedule::linear(0, 1e-4, 0.02), InvalidArgument);
  CHECK_THROWS_AS(DiffusionSchedule::linear(10, 0.0, 0.02), InvalidArgument);
  CHECK_THROWS_AS(DiffusionSchedule::linear(10, 0.03, 0.02), InvalidArgument);
  CHECK_THROWS_AS(DiffusionSchedule::linear(10, 1e-4, 1.0), InvalidArgument);
  CHECK_THROWS_AS(DiffusionSchedule::linear(10, 1e-4, NAN), InvalidArgument);
  CHECK_THROWS_AS(DiffusionSchedule::from_alpha_bar({0.9, 0.8}), InvalidArgument);
  CHECK_THROWS_AS(DiffusionSchedule::from_alpha_bar({1.0, 0.8, 0.8}), InvalidArgument);
  CHECK_THROWS_AS(DiffusionSchedule::from_alpha_bar({1.0}), InvalidArgument);
  const auto s = DiffusionSchedule::linear(5, 1e-4, 0.02);
  CHECK_THROWS_AS(s.alpha_bar(6), InvalidArgument);
  CHECK_THROWS_AS(s.beta(0), InvalidArgument);
}

TEST_CASE("sigma profiles") {
  const auto s = DiffusionSchedule::from_alpha_bar({1.0, 0.75, 0.6});
  SUBCASE("boundary") { CHECK(sigma_at(s, SigmaProfile::boundary(), 2) == 0.5); }
  SUBCASE("deterministic ddim") {
    const auto lin = DiffusionSchedule::linear(50, 1e-4, 0.05);
    for (int t = 1; t <= 50; ++t) CHECK(sigma_at(lin, SigmaProfile::ddim(0.0), t) == 0.0);
  }
  SUBCASE("ddim eta = 1") {
    const auto d = DiffusionSchedule::from_alpha_bar({1.0, 0.8, 0.5});
    const double expected = std::sqrt(0.2 / 0.5) * std::sqrt(1.0 - 0.5 / 0.8);
    CHECK(expected == doctest::Approx(0.3872983346).epsilon(1e-10));
    CHECK(sigma_at(d, SigmaProfile::ddim(1.0), 2) == doctest::Approx(expected).epsilon(1e-14));
  }
  SUBCASE("custom") {
    CHECK(sigma_at(s, SigmaProfile::custom({0.1, 0.2}), 2) == 0.2);
    CHECK_THROWS_AS(sigma_at(s, SigmaProfile::custom({0.1}), 2), InvalidArgument);
    CHECK_THROWS_AS(validate_profile(s, SigmaProfile::custom({0.0, 0.51})), Infeasible);
    CHECK_THROWS_AS(validate_profile(s, SigmaProfile::custom({-0.1, 0.1})), Infeasible);
    CHECK_NOTHROW(validate_profile(s, SigmaProfile::custom({0.0, 0.5})));
  }
  SUBCASE("bad arguments") {
    CHECK_THROWS_AS(SigmaProfile::ddim(1.5), InvalidArgument);
    CHECK_THROWS_AS(sigma_at(s, SigmaProfile::boundary(), 0), InvalidArgument);
    CHECK_THROWS_AS(sigma_kind_from_string("bogus"), InvalidArgument);
  }
  CHECK(sigma_kind_from_string(to_string(SigmaKind::ddim_eta)) == SigmaKind::ddim_eta);
}

TEST_CASE("every eta and boundary profile is feasible, with a nonnegative fused radicand") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const double b0 = rng.uniform(1e-5, 1e-3);
    const auto s = DiffusionSchedule::linear(static_cast<int>(rng.index(200)) + 1, b0, rng.uniform(b0, 0.3));
    for (const auto& p : {SigmaProfile::ddim(rng.uniform(0, 1)), SigmaProfile::boundary()}) {
      CHECK_NOTHROW(validate_profile(s, p));
      for (int t = 1; t <= s.steps(); ++t) {
        const double sig = sigma_at(s, p, t);
        const double room = 1.0 - s.alpha_bar(t - 1);
        CHECK(sig * sig <= room * (1.0 + kFeasibilitySlack) + 1e-300);
        CHECK(2.0 - 2.0 * s.alpha_bar(t - 1) - sig * sig >= -1e-15);
      }
    }
  }
}
