// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "fusion/denoiser.hpp"

namespace fusion {

// Maps a reference sample and the current noisy sample to an identity embedding
// S* that the toy denoiser reads through its identity slot.
//   input: [x_ref (d) | x_t (d) | time features]  output: S* (k)
class ToyPromptNet {
 public:
  ToyPromptNet(std::size_t data_dim, std::size_t embed_dim, std::vector<std::size_t> hidden,
               DiffusionSchedule schedule);

  std::size_t data_dim() const noexcept { return data_dim_; }
  std::size_t embed_dim() const noexcept { return embed_dim_; }
  const std::vector<std::size_t>& hidden() const noexcept { return hidden_; }
  const DiffusionSchedule& schedule() const noexcept { return schedule_; }
  Mlp& net() noexcept { return net_; }
  const Mlp& net() const noexcept { return net_; }

  Vec input_vector(VecView x_ref, VecView x_t, int t) const;

 private:
  std::size_t data_dim_;
  std::size_t embed_dim_;
  std::vector<std::size_t> hidden_;
  DiffusionSchedule schedule_;
  Mlp net_;
};

// Fresh encoder sized for the denoiser's identity slot. zero_init leaves every
// parameter at zero, so S* = 0 until trained.
ToyPromptNet make_promptnet(const ToyDenoiser& denoiser, std::vector<std::size_t> hidden,
                            std::uint64_t seed, bool zero_init = false);

Vec encode(const ToyPromptNet& net, VecView x_ref, VecView x_t, int t);

struct TrainingConfig {
  double lambda = 0.0;  // weight of ||S*||^2
  long steps = 1500;
  std::size_t batch = 32;
  bool augment = false;
  double learning_rate = 3e-3;
  std::uint64_t seed = 0;
  std::vector<std::size_t> hidden{32, 32};

  // Per-subject baseline: keep the encoder frozen and optimize one free embedding
  // for the reference, anchored to a coarse class embedding.
  bool free_embedding = false;

  void validate() const;
};

// Augmented view of a clean sample: per-axis scaling in [0.9, 1.1] plus Gaussian
// jitter with standard deviation 0.05 * data_scale.
Vec augment_view(VecView x0, double data_scale, Rng& rng);

// Minimizes E||eps - eps_hat(x_t, S*(x_bar_0, x_t, t), t)||^2 + lambda ||S*||^2 with
// the denoiser frozen. With steps = 0 returns the initialization unchanged.
ToyPromptNet train_promptnet(const MixtureWorld& world, const ToyDenoiser& denoiser,
                             const TrainingConfig& tc);
ToyPromptNet train_promptnet(ToyPromptNet init, const MixtureWorld& world,
                             const ToyDenoiser& denoiser, const TrainingConfig& tc);

// Diffusion loss of one training draw and its parameter gradients. Exposed for the
// gradient checks.
double promptnet_loss(const ToyPromptNet& net, const ToyDenoiser& denoiser, VecView x_ref,
                      VecView x0, VecView eps, int t, double lambda,
                      std::span<double> encoder_grad = {}, std::span<double> denoiser_grad = {});

struct EncoderMetrics {
  double reconstruction_error;  // mean ||eps - eps_hat||^2 on held-out draws
  double embedding_norm;        // mean ||S*||
};
EncoderMetrics evaluate_encoder(const MixtureWorld& world, const ToyPromptNet& net,
                                const ToyDenoiser& denoiser, std::size_t draws, std::uint64_t seed);

struct Customized {
  ToyPromptNet net;
  ToyDenoiser denoiser;
};

// Fits encoder and the denoiser's condition-reading weights to a single reference
// sample. Returns updated copies; the inputs are not modified.
Customized finetune_customize(const ToyPromptNet& net, const ToyDenoiser& denoiser, VecView x_ref,
                              long steps, bool augment, std::uint64_t seed, std::size_t batch = 8,
                              double learning_rate = 1e-2);

// Mean S* of an identity's samples; the default anchor for free-embedding inversion.
Vec mean_class_embedding(const ToyPromptNet& net, const MixtureWorld& world, std::size_t identity,
                         std::size_t draws, std::uint64_t seed);

// argmin_S E||eps - eps_hat(x_t, S, t)||^2 + lambda ||S - anchor||^2 over a single
// reference, denoiser frozen.
Vec optimize_free_embedding(const ToyDenoiser& denoiser, VecView x_ref, VecView anchor,
                            const TrainingConfig& tc);

// Noise predictor that recomputes the identity slot from the encoder at every
// call: the slot's contents are ignored and replaced by S*(x_ref, x_t, t).
class PromptedDenoiser final : public NoisePredictor {
 public:
  PromptedDenoiser(const ToyPromptNet& net, const ToyDenoiser& denoiser, Vec x_ref)
      : net_(net), denoiser_(denoiser), x_ref_(std::move(x_ref)) {}

  std::size_t dim() const override { return denoiser_.dim(); }
  const DiffusionSchedule& schedule() const override { return denoiser_.schedule(); }

 protected:
  Vec predict_unchecked(VecView x_t, const ConditionSet& cond, int t) const override;

 private:
  const ToyPromptNet& net_;
  const ToyDenoiser& denoiser_;
  Vec x_ref_;
};

// Noise predictor that feeds a fixed embedding into the identity slot.
class EmbeddedDenoiser final : public NoisePredictor {
 public:
  EmbeddedDenoiser(const ToyDenoiser& denoiser, Vec embedding)
      : denoiser_(denoiser), embedding_(std::move(embedding)) {}

  std::size_t dim() const override { return denoiser_.dim(); }
  const DiffusionSchedule& schedule() const override { return denoiser_.schedule(); }

 protected:
  Vec predict_unchecked(VecView x_t, const ConditionSet& cond, int t) const override;

 private:
  const ToyDenoiser& denoiser_;
  Vec embedding_;
};

}  // namespace fusion
