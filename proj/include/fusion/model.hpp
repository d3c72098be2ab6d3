// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <limits>
#include <optional>
#include <vector>

#include "fusion/rng.hpp"
#include "fusion/schedule.hpp"
#include "fusion/types.hpp"

namespace fusion {

// Conditions handed to a noise predictor. An absent slot is a null condition and
// contributes the unconditional prediction. gamma scales the identity slot only.
//
// Interpretation of the vectors belongs to the predictor: the mixture oracle reads
// them as log-weights over (identity, style) components, the toy denoiser reads
// them as embedding inputs.
struct ConditionSet {
  std::optional<Vec> identity;
  std::optional<Vec> text;
  double gamma = 1.0;
  // Further subjects for multi-condition guidance; each is scaled by gamma like
  // the primary identity slot.
  std::vector<Vec> extra_identities;

  static ConditionSet none() { return {}; }
  static ConditionSet joint(Vec identity, Vec text, double gamma = 1.0);
  static ConditionSet identity_only(Vec identity);
  static ConditionSet text_only(Vec text);

  bool empty() const noexcept { return !identity && !text && extra_identities.empty(); }
  void validate() const;
};

// Affine style map x -> A x + b applied to an identity mean. A is row-major dim x dim.
struct StyleMap {
  std::vector<double> A;
  Vec b;
};

// Toy data world: one isotropic Gaussian per (identity, style) pair with mean
// A_c mu_i + b_c and variance s^2, uniform prior over pairs.
class MixtureWorld {
 public:
  MixtureWorld(std::size_t dim, double variance, std::vector<Vec> identity_means,
               std::vector<StyleMap> styles);

  // Identity offsets shrink toward each other under the target style while that
  // style also moves them away from the reference style. Style is not
  // separable from identity, so conditions do not factorize.
  static MixtureWorld conflicting();
  // Identity on the first axis, style on the second: the posterior over
  // (identity, style) factorizes for every noise level.
  static MixtureWorld independent();
  // Identities one unit apart; under the second style they overlap heavily, so
  // identity adherence stays informative for customization runs.
  static MixtureWorld overlapping();

  std::size_t dim() const noexcept { return dim_; }
  double variance() const noexcept { return variance_; }
  std::size_t num_identities() const noexcept { return identity_means_.size(); }
  std::size_t num_styles() const noexcept { return styles_.size(); }
  std::size_t num_components() const noexcept { return means_.size(); }

  std::size_t component(std::size_t identity, std::size_t style) const;
  std::size_t identity_of(std::size_t component) const noexcept { return component / styles_.size(); }
  std::size_t style_of(std::size_t component) const noexcept { return component % styles_.size(); }
  const Vec& mean(std::size_t component) const { return means_.at(component); }

  const std::vector<Vec>& identity_means() const noexcept { return identity_means_; }
  const std::vector<StyleMap>& styles() const noexcept { return styles_; }

  struct Draw {
    Vec x0;
    std::size_t identity;
    std::size_t style;
  };
  Draw draw(Rng& rng) const;
  Vec draw_component(std::size_t identity, std::size_t style, Rng& rng) const;

  // Data moments of the uniform mixture.
  Vec data_mean() const;
  std::vector<double> data_covariance() const;  // row-major dim x dim

 private:
  std::size_t dim_;
  double variance_;
  std::vector<Vec> identity_means_;
  std::vector<StyleMap> styles_;
  std::vector<Vec> means_;
};

inline constexpr double kHardMask = std::numeric_limits<double>::infinity();

// Log-weight builders for the oracle. A strength of kHardMask gives an exact mask.
// identity: -strength on other identities, -leak_strength on styles other than
// leak_style (the reference's own style leaking into an overfit embedding).
Vec identity_log_weights(const MixtureWorld& world, std::size_t identity, double strength,
                         std::optional<std::size_t> leak_style = std::nullopt,
                         double leak_strength = 0.0);
Vec style_log_weights(const MixtureWorld& world, std::size_t style, double strength);
Vec pair_log_weights(const MixtureWorld& world, std::size_t identity, std::size_t style);

// Combined per-component log-weights for a condition set: gamma * identity slots
// plus the text slot, with 0 * -inf taken as 0 so gamma = 0 is unconditional.
Vec combined_log_weights(const MixtureWorld& world, const ConditionSet& cond);

// Contract for eps_theta(x_t, conditions, t).
class NoisePredictor {
 public:
  virtual ~NoisePredictor() = default;
  virtual std::size_t dim() const = 0;

  // Validates shape, finiteness and t against the schedule, then predicts.
  Vec predict_eps(VecView x_t, const ConditionSet& cond, int t) const;

  virtual const DiffusionSchedule& schedule() const = 0;

 protected:
  virtual Vec predict_unchecked(VecView x_t, const ConditionSet& cond, int t) const = 0;
};

inline Vec predict_eps(const NoisePredictor& predictor, VecView x_t, const ConditionSet& cond,
                       int t) {
  return predictor.predict_eps(x_t, cond, t);
}

// Exact posterior-weighted score of the diffused mixture.
Vec oracle_predict_eps(const MixtureWorld& world, const DiffusionSchedule& schedule, VecView x_t,
                       const ConditionSet& cond, int t);
// log p_t(x_t | cond), normalized.
double oracle_log_density(const MixtureWorld& world, const DiffusionSchedule& schedule,
                          VecView x_t, const ConditionSet& cond, int t);

class OraclePredictor final : public NoisePredictor {
 public:
  OraclePredictor(MixtureWorld world, DiffusionSchedule schedule)
      : world_(std::move(world)), schedule_(std::move(schedule)) {}

  std::size_t dim() const override { return world_.dim(); }
  const DiffusionSchedule& schedule() const override { return schedule_; }
  const MixtureWorld& world() const noexcept { return world_; }

  double log_density(VecView x_t, const ConditionSet& cond, int t) const {
    return oracle_log_density(world_, schedule_, x_t, cond, t);
  }

 protected:
  Vec predict_unchecked(VecView x_t, const ConditionSet& cond, int t) const override {
    return oracle_predict_eps(world_, schedule_, x_t, cond, t);
  }

 private:
  MixtureWorld world_;
  DiffusionSchedule schedule_;
};

}  // namespace fusion
