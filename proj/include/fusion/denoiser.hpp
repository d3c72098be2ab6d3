// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "fusion/mlp.hpp"
#include "fusion/model.hpp"

namespace fusion {

// Time features fed to the toy networks: sqrt(a_t), sqrt(1 - a_t), t / T.
inline constexpr std::size_t kTimeFeatures = 3;
void append_time_features(const DiffusionSchedule& schedule, int t, Vec& out);

// Small fully-connected noise predictor. Input layout:
//   [x_t (d) | identity slot (k) | text slot (k_c) | time features]
// A null slot feeds zeros; gamma multiplies the identity slot (and any extra
// identities, which are summed into it).
class ToyDenoiser final : public NoisePredictor {
 public:
  ToyDenoiser(std::size_t data_dim, std::size_t identity_dim, std::size_t text_dim,
              std::vector<std::size_t> hidden, DiffusionSchedule schedule);

  std::size_t dim() const override { return data_dim_; }
  const DiffusionSchedule& schedule() const override { return schedule_; }

  std::size_t identity_dim() const noexcept { return identity_dim_; }
  std::size_t text_dim() const noexcept { return text_dim_; }
  const std::vector<std::size_t>& hidden() const noexcept { return hidden_; }

  // RMS per-coordinate spread of the data it was trained on; sets augmentation jitter.
  double data_scale() const noexcept { return data_scale_; }
  void set_data_scale(double scale) noexcept { data_scale_ = scale; }

  Mlp& net() noexcept { return net_; }
  const Mlp& net() const noexcept { return net_; }

  Vec input_vector(VecView x_t, const ConditionSet& cond, int t) const;

  // First-layer weights reading the identity and text slots: the parameters
  // customization is allowed to touch.
  std::vector<char> condition_mask() const;

 protected:
  Vec predict_unchecked(VecView x_t, const ConditionSet& cond, int t) const override;

 private:
  std::size_t data_dim_;
  std::size_t identity_dim_;
  std::size_t text_dim_;
  std::vector<std::size_t> hidden_;
  DiffusionSchedule schedule_;
  Mlp net_;
  double data_scale_ = 1.0;
};

// Condition vocabulary of the toy world for the learned path. The identity slot
// has one coordinate per identity followed by one per style, so an embedding can
// carry its subject's style as well; the text slot is a style one-hot.
Vec identity_embedding(const MixtureWorld& world, std::size_t identity,
                       std::optional<std::size_t> style = std::nullopt);
Vec text_embedding(const MixtureWorld& world, std::size_t style);
std::size_t identity_embedding_dim(const MixtureWorld& world);

// Root-mean-square per-coordinate standard deviation of the world's data.
double world_data_scale(const MixtureWorld& world);

// One conditioning draw for a sample of component (identity, style), in the
// denoiser's embedding form and the equivalent oracle log-weight form.
struct TrainingCondition {
  ConditionSet embedded;
  ConditionSet oracle;
};
TrainingCondition draw_training_condition(const MixtureWorld& world, std::size_t identity,
                                          std::size_t style, Rng& rng);

struct DenoiserTrainingOptions {
  std::vector<std::size_t> hidden{64, 64};
  std::size_t batch = 64;
  double learning_rate = 3e-3;
};

// Minimizes E||eps - eps_hat(x_t, cond, t)||^2 with Adam and a cosine learning-rate
// decay. Deterministic per seed; throws Divergence on a non-finite loss.
ToyDenoiser train_denoiser(const MixtureWorld& world, const DiffusionSchedule& schedule, long steps,
                           std::uint64_t seed, const DenoiserTrainingOptions& options = {});

// Monte-Carlo eps-prediction error of the denoiser and of the exact oracle on the
// same held-out draws (same x_0, t, noise and conditions).
struct EpsErrorEstimate {
  double model_mse;
  double bayes_mse;
  std::size_t draws;
};
EpsErrorEstimate evaluate_eps_error(const MixtureWorld& world, const ToyDenoiser& denoiser,
                                    std::size_t draws, std::uint64_t seed);

}  // namespace fusion
