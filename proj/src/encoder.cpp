// SPDX-License-Identifier: Apache-2.0
#include "fusion/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "fusion/kernels.hpp"

namespace fusion {

namespace {

std::vector<std::size_t> encoder_widths(std::size_t data_dim, const std::vector<std::size_t>& hidden,
                                        std::size_t embed_dim) {
  std::vector<std::size_t> w{2 * data_dim + kTimeFeatures};
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(embed_dim);
  return w;
}

void scale_in_place(std::span<double> v, double s) {
  for (double& x : v) x *= s;
}

double cosine_rate(double base, long step, long steps) {
  const double progress = static_cast<double>(step) / static_cast<double>(std::max(steps, 1L));
  return base * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

Vec noisy_sample(VecView x0, VecView eps, double a) {
  Vec x_t(x0.size());
  kernels::axpby(std::sqrt(a), x0, std::sqrt(1.0 - a), eps, x_t);
  return x_t;
}

int draw_timestep(const DiffusionSchedule& schedule, Rng& rng) {
  return 1 + static_cast<int>(rng.index(static_cast<std::size_t>(schedule.steps())));
}

}  // namespace

ToyPromptNet::ToyPromptNet(std::size_t data_dim, std::size_t embed_dim,
                           std::vector<std::size_t> hidden, DiffusionSchedule schedule)
    : data_dim_(data_dim),
      embed_dim_(embed_dim),
      hidden_(std::move(hidden)),
      schedule_(std::move(schedule)),
      net_(encoder_widths(data_dim, hidden_, embed_dim)) {}

Vec ToyPromptNet::input_vector(VecView x_ref, VecView x_t, int t) const {
  require_dim("encoder: reference", x_ref, data_dim_);
  require_dim("encoder: x_t", x_t, data_dim_);
  Vec in;
  in.reserve(net_.input_dim());
  in.insert(in.end(), x_ref.begin(), x_ref.end());
  in.insert(in.end(), x_t.begin(), x_t.end());
  append_time_features(schedule_, t, in);
  return in;
}

ToyPromptNet make_promptnet(const ToyDenoiser& denoiser, std::vector<std::size_t> hidden,
                            std::uint64_t seed, bool zero_init) {
  ToyPromptNet net(denoiser.dim(), denoiser.identity_dim(), std::move(hidden), denoiser.schedule());
  if (!zero_init) {
    Rng rng(seed);
    net.net().init(rng, 0.1);
  }
  return net;
}

Vec encode(const ToyPromptNet& net, VecView x_ref, VecView x_t, int t) {
  return net.net().forward(net.input_vector(x_ref, x_t, t));
}

void TrainingConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InvalidArgument("training: lambda must be >= 0");
  if (steps < 0) throw InvalidArgument("training: steps must be >= 0");
  if (batch == 0) throw InvalidArgument("training: batch must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw InvalidArgument("training: learning rate must be positive");
  }
}

Vec augment_view(VecView x0, double scale, Rng& rng) {
  Vec out(x0.size());
  for (std::size_t j = 0; j < x0.size(); ++j) {
    const double stretch = rng.uniform(0.9, 1.1);
    out[j] = stretch * x0[j] + 0.05 * scale * rng.normal();
  }
  return out;
}

double promptnet_loss(const ToyPromptNet& net, const ToyDenoiser& denoiser, VecView x_ref,
                      VecView x0, VecView eps, int t, double lambda,
                      std::span<double> encoder_grad, std::span<double> denoiser_grad) {
  const double a = denoiser.schedule().alpha_bar(t);
  const Vec x_t = noisy_sample(x0, eps, a);

  Mlp::Tape enc_tape;
  const Vec embedding = net.net().forward(net.input_vector(x_ref, x_t, t), enc_tape);

  Mlp::Tape den_tape;
  const Vec pred =
      denoiser.net().forward(denoiser.input_vector(x_t, ConditionSet::identity_only(embedding), t), den_tape);
  Vec residual(pred.size());
  kernels::axpby(1.0, pred, -1.0, eps, residual);
  const double loss = norm2(residual) + lambda * norm2(embedding);
  if (encoder_grad.empty() && denoiser_grad.empty()) return loss;

  kernels::scale(2.0, residual, residual);
  const Vec d_input = denoiser.net().backward(den_tape, residual, denoiser_grad);
  if (encoder_grad.empty()) return loss;

  Vec d_embedding(embedding.size());
  for (std::size_t j = 0; j < embedding.size(); ++j) {
    d_embedding[j] = d_input[denoiser.dim() + j] + 2.0 * lambda * embedding[j];
  }
  net.net().backward(enc_tape, d_embedding, encoder_grad);
  return loss;
}

ToyPromptNet train_promptnet(const MixtureWorld& world, const ToyDenoiser& denoiser,
                             const TrainingConfig& tc) {
  tc.validate();
  return train_promptnet(make_promptnet(denoiser, tc.hidden, tc.seed), world, denoiser, tc);
}

ToyPromptNet train_promptnet(ToyPromptNet net, const MixtureWorld& world,
                             const ToyDenoiser& denoiser, const TrainingConfig& tc) {
  tc.validate();
  if (net.embed_dim() != denoiser.identity_dim()) {
    throw DimensionMismatch("train_promptnet: embedding vs identity slot", denoiser.identity_dim(),
                            net.embed_dim());
  }
  if (tc.steps == 0) return net;
  Rng rng = Rng::stream(tc.seed, 1);
  Adam adam(tc.learning_rate);
  const double scale = world_data_scale(world);
  Vec grad(net.net().param_count());
  for (long step = 0; step < tc.steps; ++step) {
    adam.set_learning_rate(cosine_rate(tc.learning_rate, step, tc.steps));
    std::fill(grad.begin(), grad.end(), 0.0);
    double loss = 0.0;
    for (std::size_t b = 0; b < tc.batch; ++b) {
      const MixtureWorld::Draw sample = world.draw(rng);
      const Vec view = tc.augment ? augment_view(sample.x0, scale, rng) : sample.x0;
      const int t = draw_timestep(denoiser.schedule(), rng);
      const Vec eps = rng.normal_vec(world.dim());
      loss += promptnet_loss(net, denoiser, view, sample.x0, eps, t, tc.lambda, grad);
    }
    if (!std::isfinite(loss)) throw Divergence("train_promptnet: non-finite loss", step);
    scale_in_place(grad, 1.0 / static_cast<double>(tc.batch));
    adam.step(net.net().params(), grad);
  }
  if (!all_finite(net.net().params())) throw Divergence("train_promptnet: non-finite parameters", tc.steps);
  return net;
}

EncoderMetrics evaluate_encoder(const MixtureWorld& world, const ToyPromptNet& net,
                                const ToyDenoiser& denoiser, std::size_t draws, std::uint64_t seed) {
  if (draws == 0) throw InvalidArgument("evaluate_encoder: need at least one draw");
  Rng rng(seed);
  double rec = 0.0;
  double norm = 0.0;
  for (std::size_t n = 0; n < draws; ++n) {
    const MixtureWorld::Draw sample = world.draw(rng);
    const int t = draw_timestep(denoiser.schedule(), rng);
    const Vec eps = rng.normal_vec(world.dim());
    rec += promptnet_loss(net, denoiser, sample.x0, sample.x0, eps, t, 0.0);
    const Vec x_t = noisy_sample(sample.x0, eps, denoiser.schedule().alpha_bar(t));
    norm += std::sqrt(norm2(encode(net, sample.x0, x_t, t)));
  }
  const double count = static_cast<double>(draws);
  return EncoderMetrics{rec / count, norm / count};
}

Customized finetune_customize(const ToyPromptNet& net, const ToyDenoiser& denoiser, VecView x_ref,
                              long steps, bool augment, std::uint64_t seed, std::size_t batch,
                              double learning_rate) {
  if (steps < 1) throw InvalidArgument("finetune_customize: steps must be >= 1");
  if (batch == 0) throw InvalidArgument("finetune_customize: batch must be >= 1");
  require_dim("finetune_customize: reference", x_ref, denoiser.dim());
  Customized out{net, denoiser};
  Rng rng = Rng::stream(seed, 2);
  const std::vector<char> mask = out.denoiser.condition_mask();
  Adam enc_adam(learning_rate);
  Adam den_adam(learning_rate);
  Vec enc_grad(out.net.net().param_count());
  Vec den_grad(out.denoiser.net().param_count());
  const double scale = denoiser.data_scale();
  for (long step = 0; step < steps; ++step) {
    std::fill(enc_grad.begin(), enc_grad.end(), 0.0);
    std::fill(den_grad.begin(), den_grad.end(), 0.0);
    double loss = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      const Vec view = augment ? augment_view(x_ref, scale, rng) : Vec(x_ref.begin(), x_ref.end());
      const int t = draw_timestep(out.denoiser.schedule(), rng);
      const Vec eps = rng.normal_vec(x_ref.size());
      loss += promptnet_loss(out.net, out.denoiser, view, x_ref, eps, t, 0.0, enc_grad, den_grad);
    }
    if (!std::isfinite(loss)) throw Divergence("finetune_customize: non-finite loss", step);
    scale_in_place(enc_grad, 1.0 / static_cast<double>(batch));
    scale_in_place(den_grad, 1.0 / static_cast<double>(batch));
    enc_adam.step(out.net.net().params(), enc_grad);
    den_adam.step(out.denoiser.net().params(), den_grad, &mask);
  }
  return out;
}

Vec mean_class_embedding(const ToyPromptNet& net, const MixtureWorld& world, std::size_t identity,
                         std::size_t draws, std::uint64_t seed) {
  if (draws == 0) throw InvalidArgument("mean_class_embedding: need at least one draw");
  Rng rng(seed);
  Vec mean(net.embed_dim(), 0.0);
  for (std::size_t n = 0; n < draws; ++n) {
    const std::size_t style = rng.index(world.num_styles());
    const Vec x0 = world.draw_component(identity, style, rng);
    const int t = draw_timestep(net.schedule(), rng);
    const Vec eps = rng.normal_vec(world.dim());
    const Vec s = encode(net, x0, noisy_sample(x0, eps, net.schedule().alpha_bar(t)), t);
    kernels::axpby(1.0, mean, 1.0 / static_cast<double>(draws), s, mean);
  }
  return mean;
}

Vec optimize_free_embedding(const ToyDenoiser& denoiser, VecView x_ref, VecView anchor,
                            const TrainingConfig& tc) {
  tc.validate();
  require_dim("optimize_free_embedding: reference", x_ref, denoiser.dim());
  require_dim("optimize_free_embedding: anchor", anchor, denoiser.identity_dim());
  Vec embedding(anchor.begin(), anchor.end());
  Rng rng = Rng::stream(tc.seed, 3);
  Adam adam(tc.learning_rate);
  const double scale = denoiser.data_scale();
  Vec grad(embedding.size());
  Mlp::Tape tape;
  for (long step = 0; step < tc.steps; ++step) {
    adam.set_learning_rate(cosine_rate(tc.learning_rate, step, tc.steps));
    for (std::size_t j = 0; j < grad.size(); ++j) grad[j] = 2.0 * tc.lambda * (embedding[j] - anchor[j]);
    double loss = 0.0;
    for (std::size_t b = 0; b < tc.batch; ++b) {
      const Vec x0 = tc.augment ? augment_view(x_ref, scale, rng) : Vec(x_ref.begin(), x_ref.end());
      const int t = draw_timestep(denoiser.schedule(), rng);
      const Vec eps = rng.normal_vec(x0.size());
      const Vec x_t = noisy_sample(x0, eps, denoiser.schedule().alpha_bar(t));
      const Vec pred =
          denoiser.net().forward(denoiser.input_vector(x_t, ConditionSet::identity_only(embedding), t), tape);
      Vec residual(pred.size());
      kernels::axpby(2.0 / static_cast<double>(tc.batch), pred, -2.0 / static_cast<double>(tc.batch), eps,
                     residual);
      loss += norm2(residual);
      const Vec d_input = denoiser.net().backward(tape, residual, {});
      for (std::size_t j = 0; j < grad.size(); ++j) grad[j] += d_input[denoiser.dim() + j];
    }
    if (!std::isfinite(loss)) throw Divergence("optimize_free_embedding: non-finite loss", step);
    adam.step(embedding, grad);
  }
  return embedding;
}

Vec PromptedDenoiser::predict_unchecked(VecView x_t, const ConditionSet& cond, int t) const {
  if (!cond.identity) return denoiser_.predict_eps(x_t, cond, t);
  ConditionSet filled = cond;
  filled.identity = encode(net_, x_ref_, x_t, t);
  return denoiser_.predict_eps(x_t, filled, t);
}

Vec EmbeddedDenoiser::predict_unchecked(VecView x_t, const ConditionSet& cond, int t) const {
  if (!cond.identity) return denoiser_.predict_eps(x_t, cond, t);
  ConditionSet filled = cond;
  filled.identity = embedding_;
  return denoiser_.predict_eps(x_t, filled, t);
}

}  // namespace fusion
