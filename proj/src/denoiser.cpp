// SPDX-License-Identifier: Apache-2.0
#include "fusion/denoiser.hpp"

#include <cmath>
#include <numbers>

#include "fusion/kernels.hpp"

namespace fusion {

void append_time_features(const DiffusionSchedule& schedule, int t, Vec& out) {
  const double a = schedule.alpha_bar(t);
  out.push_back(std::sqrt(a));
  out.push_back(std::sqrt(1.0 - a));
  out.push_back(static_cast<double>(t) / static_cast<double>(schedule.steps()));
}

namespace {

std::vector<std::size_t> layer_widths(std::size_t in, const std::vector<std::size_t>& hidden,
                                      std::size_t out) {
  std::vector<std::size_t> w{in};
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(out);
  return w;
}

}  // namespace

ToyDenoiser::ToyDenoiser(std::size_t data_dim, std::size_t identity_dim, std::size_t text_dim,
                         std::vector<std::size_t> hidden, DiffusionSchedule schedule)
    : data_dim_(data_dim),
      identity_dim_(identity_dim),
      text_dim_(text_dim),
      hidden_(std::move(hidden)),
      schedule_(std::move(schedule)),
      net_(layer_widths(data_dim + identity_dim + text_dim + kTimeFeatures, hidden_, data_dim)) {}

Vec ToyDenoiser::input_vector(VecView x_t, const ConditionSet& cond, int t) const {
  Vec in;
  in.reserve(net_.input_dim());
  in.insert(in.end(), x_t.begin(), x_t.end());
  Vec identity(identity_dim_, 0.0);
  auto add_identity = [&](const Vec& v) {
    require_dim("denoiser: identity condition", v, identity_dim_);
    for (std::size_t j = 0; j < identity_dim_; ++j) identity[j] += cond.gamma * v[j];
  };
  if (cond.identity) add_identity(*cond.identity);
  for (const Vec& extra : cond.extra_identities) add_identity(extra);
  in.insert(in.end(), identity.begin(), identity.end());
  if (cond.text) {
    require_dim("denoiser: text condition", *cond.text, text_dim_);
    in.insert(in.end(), cond.text->begin(), cond.text->end());
  } else {
    in.insert(in.end(), text_dim_, 0.0);
  }
  append_time_features(schedule_, t, in);
  return in;
}

Vec ToyDenoiser::predict_unchecked(VecView x_t, const ConditionSet& cond, int t) const {
  return net_.forward(input_vector(x_t, cond, t));
}

std::vector<char> ToyDenoiser::condition_mask() const {
  std::vector<char> mask(net_.param_count(), 0);
  const std::size_t in = net_.input_dim();
  const std::size_t rows = net_.widths()[1];
  const std::size_t first = data_dim_;
  const std::size_t last = data_dim_ + identity_dim_ + text_dim_;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = first; c < last; ++c) mask[net_.weight_offset(0) + r * in + c] = 1;
  }
  return mask;
}

double world_data_scale(const MixtureWorld& world) {
  const std::vector<double> cov = world.data_covariance();
  double trace = 0.0;
  for (std::size_t j = 0; j < world.dim(); ++j) trace += cov[j * world.dim() + j];
  return std::sqrt(trace / static_cast<double>(world.dim()));
}

std::size_t identity_embedding_dim(const MixtureWorld& world) {
  return world.num_identities() + world.num_styles();
}

Vec identity_embedding(const MixtureWorld& world, std::size_t identity,
                       std::optional<std::size_t> style) {
  if (identity >= world.num_identities()) throw InvalidArgument("identity index out of range");
  Vec e(identity_embedding_dim(world), 0.0);
  e[identity] = 1.0;
  if (style) {
    if (*style >= world.num_styles()) throw InvalidArgument("style index out of range");
    e[world.num_identities() + *style] = 1.0;
  }
  return e;
}

Vec text_embedding(const MixtureWorld& world, std::size_t style) {
  if (style >= world.num_styles()) throw InvalidArgument("style index out of range");
  Vec e(world.num_styles(), 0.0);
  e[style] = 1.0;
  return e;
}

TrainingCondition draw_training_condition(const MixtureWorld& world, std::size_t identity,
                                          std::size_t style, Rng& rng) {
  TrainingCondition tc;
  const double u = rng.uniform(0.0, 1.0);
  if (u < 0.35) {
    tc.embedded.identity = identity_embedding(world, identity);
    tc.oracle.identity = identity_log_weights(world, identity, kHardMask);
  } else if (u < 0.7) {
    tc.embedded.identity = identity_embedding(world, identity, style);
    tc.oracle.identity = pair_log_weights(world, identity, style);
  }
  if (rng.uniform(0.0, 1.0) < 0.5) {
    tc.embedded.text = text_embedding(world, style);
    tc.oracle.text = style_log_weights(world, style, kHardMask);
  }
  return tc;
}

ToyDenoiser train_denoiser(const MixtureWorld& world, const DiffusionSchedule& schedule, long steps,
                           std::uint64_t seed, const DenoiserTrainingOptions& options) {
  if (steps < 1) throw InvalidArgument("train_denoiser: steps must be >= 1");
  if (options.batch == 0) throw InvalidArgument("train_denoiser: batch must be >= 1");
  ToyDenoiser model(world.dim(), identity_embedding_dim(world), world.num_styles(), options.hidden,
                    schedule);
  model.set_data_scale(world_data_scale(world));
  Rng rng(seed);
  model.net().init(rng);
  Adam adam(options.learning_rate);
  const std::size_t d = world.dim();
  Vec grad(model.net().param_count());
  Mlp::Tape tape;
  Vec residual(d);
  for (long step = 0; step < steps; ++step) {
    const double progress = static_cast<double>(step) / static_cast<double>(steps);
    adam.set_learning_rate(options.learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
    std::fill(grad.begin(), grad.end(), 0.0);
    double loss = 0.0;
    for (std::size_t b = 0; b < options.batch; ++b) {
      const MixtureWorld::Draw sample = world.draw(rng);
      const int t = 1 + static_cast<int>(rng.index(static_cast<std::size_t>(schedule.steps())));
      const double a = schedule.alpha_bar(t);
      const Vec eps = rng.normal_vec(d);
      Vec x_t(d);
      kernels::axpby(std::sqrt(a), sample.x0, std::sqrt(1.0 - a), eps, x_t);
      const TrainingCondition cond = draw_training_condition(world, sample.identity, sample.style, rng);
      const Vec pred = model.net().forward(model.input_vector(x_t, cond.embedded, t), tape);
      kernels::axpby(1.0, pred, -1.0, eps, residual);
      loss += norm2(residual);
      kernels::scale(2.0 / static_cast<double>(options.batch), residual, residual);
      model.net().backward(tape, residual, grad);
    }
    loss /= static_cast<double>(options.batch);
    if (!std::isfinite(loss)) throw Divergence("train_denoiser: non-finite loss", step);
    adam.step(model.net().params(), grad);
  }
  if (!all_finite(model.net().params())) throw Divergence("train_denoiser: non-finite parameters", steps);
  return model;
}

EpsErrorEstimate evaluate_eps_error(const MixtureWorld& world, const ToyDenoiser& denoiser,
                                    std::size_t draws, std::uint64_t seed) {
  if (draws == 0) throw InvalidArgument("evaluate_eps_error: need at least one draw");
  Rng rng(seed);
  const DiffusionSchedule& schedule = denoiser.schedule();
  const std::size_t d = world.dim();
  double model_sum = 0.0;
  double bayes_sum = 0.0;
  for (std::size_t n = 0; n < draws; ++n) {
    const MixtureWorld::Draw sample = world.draw(rng);
    const int t = 1 + static_cast<int>(rng.index(static_cast<std::size_t>(schedule.steps())));
    const double a = schedule.alpha_bar(t);
    const Vec eps = rng.normal_vec(d);
    Vec x_t(d);
    kernels::axpby(std::sqrt(a), sample.x0, std::sqrt(1.0 - a), eps, x_t);
    const TrainingCondition cond = draw_training_condition(world, sample.identity, sample.style, rng);
    model_sum += kernels::sq_dist(denoiser.predict_eps(x_t, cond.embedded, t), eps);
    bayes_sum += kernels::sq_dist(oracle_predict_eps(world, schedule, x_t, cond.oracle, t), eps);
  }
  const double n = static_cast<double>(draws);
  return EpsErrorEstimate{model_sum / n, bayes_sum / n, draws};
}

}  // namespace fusion
