// SPDX-License-Identifier: Apache-2.0
#include "fusion/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "fusion/kernels.hpp"

namespace fusion {

ConditionSet ConditionSet::joint(Vec identity, Vec text, double gamma) {
  ConditionSet c;
  c.identity = std::move(identity);
  c.text = std::move(text);
  c.gamma = gamma;
  return c;
}

ConditionSet ConditionSet::identity_only(Vec identity) {
  ConditionSet c;
  c.identity = std::move(identity);
  return c;
}

ConditionSet ConditionSet::text_only(Vec text) {
  ConditionSet c;
  c.text = std::move(text);
  return c;
}

void ConditionSet::validate() const {
  if (!(gamma >= 0.0 && gamma <= 1.0)) {
    throw InvalidArgument("conditions: gamma must lie in [0, 1], got " + std::to_string(gamma));
  }
}

MixtureWorld::MixtureWorld(std::size_t dim, double variance, std::vector<Vec> identity_means,
                           std::vector<StyleMap> styles)
    : dim_(dim),
      variance_(variance),
      identity_means_(std::move(identity_means)),
      styles_(std::move(styles)) {
  if (dim_ == 0) throw InvalidArgument("world: dimension must be positive");
  if (!(variance_ > 0.0) || !std::isfinite(variance_)) {
    throw InvalidArgument("world: component variance must be positive and finite");
  }
  if (identity_means_.empty()) throw InvalidArgument("world: need at least one identity");
  if (styles_.empty()) throw InvalidArgument("world: need at least one style");
  for (const Vec& mu : identity_means_) {
    require_dim("world: identity mean", mu, dim_);
    if (!all_finite(mu)) throw InvalidArgument("world: identity mean must be finite");
  }
  for (const StyleMap& s : styles_) {
    if (s.A.size() != dim_ * dim_) throw DimensionMismatch("world: style matrix", dim_ * dim_, s.A.size());
    require_dim("world: style offset", s.b, dim_);
    if (!all_finite(s.A) || !all_finite(s.b)) throw InvalidArgument("world: style map must be finite");
  }
  means_.reserve(identity_means_.size() * styles_.size());
  for (const Vec& mu : identity_means_) {
    for (const StyleMap& s : styles_) {
      Vec m(dim_);
      kernels::active().gemv(s.A.data(), mu.data(), s.b.data(), m.data(), dim_, dim_);
      means_.push_back(std::move(m));
    }
  }
}

MixtureWorld MixtureWorld::conflicting() {
  std::vector<Vec> ids{{-2.0, 0.0}, {2.0, 0.0}};
  std::vector<StyleMap> styles{
      StyleMap{{1.0, 0.0, 0.0, 1.0}, {0.0, 0.0}},
      StyleMap{{0.3, 0.0, 0.0, 1.0}, {0.0, 3.0}},
  };
  return MixtureWorld(2, 0.35 * 0.35, std::move(ids), std::move(styles));
}

MixtureWorld MixtureWorld::independent() {
  std::vector<Vec> ids{{-2.0, 0.0}, {2.0, 0.0}};
  std::vector<StyleMap> styles{
      StyleMap{{1.0, 0.0, 0.0, 1.0}, {0.0, 0.0}},
      StyleMap{{1.0, 0.0, 0.0, 1.0}, {0.0, 3.0}},
  };
  return MixtureWorld(2, 0.35 * 0.35, std::move(ids), std::move(styles));
}

MixtureWorld MixtureWorld::overlapping() {
  std::vector<Vec> ids{{-1.0, 0.0}, {1.0, 0.0}};
  std::vector<StyleMap> styles{
      StyleMap{{1.0, 0.0, 0.0, 1.0}, {0.0, 0.0}},
      StyleMap{{0.3, 0.0, 0.0, 1.0}, {0.0, 3.0}},
  };
  return MixtureWorld(2, 0.35 * 0.35, std::move(ids), std::move(styles));
}

std::size_t MixtureWorld::component(std::size_t identity, std::size_t style) const {
  if (identity >= identity_means_.size() || style >= styles_.size()) {
    throw InvalidArgument("world: component index out of range");
  }
  return identity * styles_.size() + style;
}

MixtureWorld::Draw MixtureWorld::draw(Rng& rng) const {
  const std::size_t k = rng.index(num_components());
  Draw d{draw_component(identity_of(k), style_of(k), rng), identity_of(k), style_of(k)};
  return d;
}

Vec MixtureWorld::draw_component(std::size_t identity, std::size_t style, Rng& rng) const {
  const Vec& m = means_[component(identity, style)];
  const double sd = std::sqrt(variance_);
  Vec x(dim_);
  for (std::size_t j = 0; j < dim_; ++j) x[j] = m[j] + sd * rng.normal();
  return x;
}

Vec MixtureWorld::data_mean() const {
  Vec mean(dim_, 0.0);
  for (const Vec& m : means_) {
    for (std::size_t j = 0; j < dim_; ++j) mean[j] += m[j];
  }
  for (double& v : mean) v /= static_cast<double>(means_.size());
  return mean;
}

std::vector<double> MixtureWorld::data_covariance() const {
  const Vec mean = data_mean();
  std::vector<double> cov(dim_ * dim_, 0.0);
  for (const Vec& m : means_) {
    for (std::size_t r = 0; r < dim_; ++r) {
      for (std::size_t c = 0; c < dim_; ++c) cov[r * dim_ + c] += (m[r] - mean[r]) * (m[c] - mean[c]);
    }
  }
  for (double& v : cov) v /= static_cast<double>(means_.size());
  for (std::size_t j = 0; j < dim_; ++j) cov[j * dim_ + j] += variance_;
  return cov;
}

namespace {

double penalty(double strength) { return strength == kHardMask ? -kHardMask : -strength; }

void check_strength(double s) {
  if (std::isnan(s) || s < 0.0) throw InvalidArgument("condition strength must be >= 0");
}

}  // namespace

Vec identity_log_weights(const MixtureWorld& world, std::size_t identity, double strength,
                         std::optional<std::size_t> leak_style, double leak_strength) {
  check_strength(strength);
  check_strength(leak_strength);
  if (identity >= world.num_identities()) throw InvalidArgument("identity index out of range");
  if (leak_style && *leak_style >= world.num_styles()) throw InvalidArgument("style index out of range");
  Vec w(world.num_components(), 0.0);
  for (std::size_t k = 0; k < w.size(); ++k) {
    if (world.identity_of(k) != identity) w[k] += penalty(strength);
    if (leak_style && world.style_of(k) != *leak_style && leak_strength > 0.0) {
      w[k] += penalty(leak_strength);
    }
  }
  return w;
}

Vec style_log_weights(const MixtureWorld& world, std::size_t style, double strength) {
  check_strength(strength);
  if (style >= world.num_styles()) throw InvalidArgument("style index out of range");
  Vec w(world.num_components(), 0.0);
  for (std::size_t k = 0; k < w.size(); ++k) {
    if (world.style_of(k) != style) w[k] = penalty(strength);
  }
  return w;
}

Vec pair_log_weights(const MixtureWorld& world, std::size_t identity, std::size_t style) {
  const std::size_t target = world.component(identity, style);
  Vec w(world.num_components(), -kHardMask);
  w[target] = 0.0;
  return w;
}

namespace {

void add_scaled(Vec& acc, const Vec& w, double gamma, const char* what) {
  if (w.size() != acc.size()) throw DimensionMismatch(what, acc.size(), w.size());
  if (gamma == 0.0) return;
  for (std::size_t k = 0; k < acc.size(); ++k) {
    if (std::isnan(w[k]) || w[k] == kHardMask) throw InvalidArgument(std::string(what) + ": invalid log-weight");
    acc[k] += gamma * w[k];
  }
}

}  // namespace

Vec combined_log_weights(const MixtureWorld& world, const ConditionSet& cond) {
  cond.validate();
  Vec w(world.num_components(), 0.0);
  if (cond.identity) add_scaled(w, *cond.identity, cond.gamma, "oracle identity log-weights");
  for (const Vec& extra : cond.extra_identities) add_scaled(w, extra, cond.gamma, "oracle identity log-weights");
  if (cond.text) add_scaled(w, *cond.text, 1.0, "oracle text log-weights");
  return w;
}

namespace {

struct Responsibilities {
  std::vector<double> r;  // normalized over components
  double log_norm;        // log sum_k exp(w_k + log N_k)
  double log_prior_norm;  // log sum_k exp(w_k)
};

Responsibilities responsibilities(const MixtureWorld& world, double a, VecView x, const Vec& w) {
  const std::size_t K = world.num_components();
  const double sa = std::sqrt(a);
  const double v = a * world.variance() + (1.0 - a);
  const double log_gauss_norm =
      -0.5 * static_cast<double>(world.dim()) * std::log(2.0 * std::numbers::pi * v);
  std::vector<double> lp(K);
  Vec shifted(world.dim());
  double lp_max = -kHardMask;
  double w_max = -kHardMask;
  for (std::size_t k = 0; k < K; ++k) {
    w_max = std::max(w_max, w[k]);
    if (w[k] == -kHardMask) {
      lp[k] = -kHardMask;
      continue;
    }
    kernels::scale(sa, world.mean(k), shifted);
    lp[k] = w[k] - 0.5 * kernels::sq_dist(x, shifted) / v + log_gauss_norm;
    lp_max = std::max(lp_max, lp[k]);
  }
  if (w_max == -kHardMask) throw InvalidArgument("oracle: conditions select no mixture component");
  if (!std::isfinite(lp_max)) throw Error("oracle: non-finite responsibilities");
  double total = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    lp[k] = lp[k] == -kHardMask ? 0.0 : std::exp(lp[k] - lp_max);
    total += lp[k];
  }
  double prior_total = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    if (w[k] != -kHardMask) prior_total += std::exp(w[k] - w_max);
  }
  for (double& r : lp) r /= total;
  if (!all_finite(lp)) throw Error("oracle: non-finite responsibilities");
  return Responsibilities{std::move(lp), lp_max + std::log(total), w_max + std::log(prior_total)};
}

void check_inputs(const MixtureWorld& world, const DiffusionSchedule& schedule, VecView x, int t) {
  require_dim("oracle: x_t", x, world.dim());
  if (!all_finite(x)) throw InvalidArgument("oracle: x_t must be finite");
  if (t < 1 || t > schedule.steps()) throw InvalidArgument("oracle: timestep outside 1..T");
}

}  // namespace

Vec oracle_predict_eps(const MixtureWorld& world, const DiffusionSchedule& schedule, VecView x,
                       const ConditionSet& cond, int t) {
  check_inputs(world, schedule, x, t);
  const double a = schedule.alpha_bar(t);
  const Vec w = combined_log_weights(world, cond);
  const Responsibilities resp = responsibilities(world, a, x, w);
  const double sa = std::sqrt(a);
  const double v = a * world.variance() + (1.0 - a);
  // eps = -sqrt(1 - a) * grad log p = sqrt(1 - a) / v * sum_k r_k (x - sqrt(a) m_k)
  Vec mixed_mean(world.dim(), 0.0);
  for (std::size_t k = 0; k < world.num_components(); ++k) {
    if (resp.r[k] == 0.0) continue;
    kernels::axpby(1.0, mixed_mean, resp.r[k], world.mean(k), mixed_mean);
  }
  Vec eps(world.dim());
  const double c = std::sqrt(1.0 - a) / v;
  kernels::axpby(c, x, -c * sa, mixed_mean, eps);
  return eps;
}

double oracle_log_density(const MixtureWorld& world, const DiffusionSchedule& schedule, VecView x,
                          const ConditionSet& cond, int t) {
  check_inputs(world, schedule, x, t);
  const Vec w = combined_log_weights(world, cond);
  const Responsibilities resp = responsibilities(world, schedule.alpha_bar(t), x, w);
  return resp.log_norm - resp.log_prior_norm;
}

Vec NoisePredictor::predict_eps(VecView x_t, const ConditionSet& cond, int t) const {
  require_dim("predict_eps: x_t", x_t, dim());
  if (!all_finite(x_t)) throw InvalidArgument("predict_eps: x_t must be finite");
  if (t < 1 || t > schedule().steps()) {
    throw InvalidArgument("predict_eps: timestep " + std::to_string(t) + " outside 1.." +
                          std::to_string(schedule().steps()));
  }
  cond.validate();
  return predict_unchecked(x_t, cond, t);
}

}  // namespace fusion
