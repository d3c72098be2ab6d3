// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fusion/rng.hpp"
#include "fusion/types.hpp"

namespace fusion {

// Fully-connected network, tanh hidden layers, linear output. Parameters live in
// one flat array: for each layer, W (out x in, row-major) followed by its bias.
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<std::size_t> widths);

  std::size_t input_dim() const { return widths_.front(); }
  std::size_t output_dim() const { return widths_.back(); }
  std::size_t num_layers() const { return widths_.size() - 1; }
  std::size_t param_count() const { return params_.size(); }
  const std::vector<std::size_t>& widths() const noexcept { return widths_; }

  std::span<double> params() noexcept { return params_; }
  std::span<const double> params() const noexcept { return params_; }
  void set_params(std::vector<double> params);

  std::size_t weight_offset(std::size_t layer) const { return offsets_.at(layer); }
  std::size_t bias_offset(std::size_t layer) const {
    return offsets_.at(layer) + widths_.at(layer) * widths_.at(layer + 1);
  }

  // Glorot-uniform weights, zero biases; the output layer is further scaled.
  void init(Rng& rng, double output_scale = 1.0);

  // Activations per layer boundary: a[0] is the input, a.back() the output.
  struct Tape {
    std::vector<Vec> a;
  };

  Vec forward(VecView x) const;
  Vec forward(VecView x, Tape& tape) const;

  // Reverse pass for dL/d(output) = grad_out. Adds dL/d(params) into param_grad
  // unless it is empty, and returns dL/d(input).
  Vec backward(const Tape& tape, VecView grad_out, std::span<double> param_grad) const;

 private:
  std::vector<std::size_t> widths_;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
};

// Adam on a flat parameter array. A mask, when given, freezes entries that are 0.
class Adam {
 public:
  explicit Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(std::span<double> params, VecView grad, const std::vector<char>* mask = nullptr);
  long steps_taken() const noexcept { return t_; }
  void set_learning_rate(double lr) noexcept { lr_ = lr; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::vector<double> m_, v_;
  long t_ = 0;
};

}  // namespace fusion
