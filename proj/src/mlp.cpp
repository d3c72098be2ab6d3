// SPDX-License-Identifier: Apache-2.0
#include "fusion/mlp.hpp"

#include <cmath>

#include "fusion/kernels.hpp"

namespace fusion {

Mlp::Mlp(std::vector<std::size_t> widths) : widths_(std::move(widths)) {
  if (widths_.size() < 2) throw InvalidArgument("mlp: need at least input and output widths");
  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    if (widths_[l] == 0 || widths_[l + 1] == 0) throw InvalidArgument("mlp: zero-width layer");
    offsets_.push_back(total);
    total += widths_[l] * widths_[l + 1] + widths_[l + 1];
  }
  params_.assign(total, 0.0);
}

void Mlp::set_params(std::vector<double> params) {
  if (params.size() != params_.size()) {
    throw DimensionMismatch("mlp: parameter vector", params_.size(), params.size());
  }
  if (!all_finite(params)) throw InvalidArgument("mlp: parameters must be finite");
  params_ = std::move(params);
}

void Mlp::init(Rng& rng, double output_scale) {
  for (std::size_t l = 0; l < num_layers(); ++l) {
    const std::size_t in = widths_[l];
    const std::size_t out = widths_[l + 1];
    double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    if (l + 1 == num_layers()) limit *= output_scale;
    double* w = params_.data() + weight_offset(l);
    for (std::size_t i = 0; i < in * out; ++i) w[i] = rng.uniform(-limit, limit);
    double* b = params_.data() + bias_offset(l);
    for (std::size_t i = 0; i < out; ++i) b[i] = 0.0;
  }
}

Vec Mlp::forward(VecView x) const {
  require_dim("mlp: input", x, input_dim());
  const auto& k = kernels::active();
  Vec cur(x.begin(), x.end());
  Vec next;
  for (std::size_t l = 0; l < num_layers(); ++l) {
    next.resize(widths_[l + 1]);
    k.gemv(params_.data() + weight_offset(l), cur.data(), params_.data() + bias_offset(l),
           next.data(), widths_[l + 1], widths_[l]);
    if (l + 1 < num_layers()) {
      for (double& v : next) v = std::tanh(v);
    }
    cur.swap(next);
  }
  return cur;
}

Vec Mlp::forward(VecView x, Tape& tape) const {
  require_dim("mlp: input", x, input_dim());
  const auto& k = kernels::active();
  tape.a.resize(widths_.size());
  tape.a[0].assign(x.begin(), x.end());
  for (std::size_t l = 0; l < num_layers(); ++l) {
    Vec& out = tape.a[l + 1];
    out.resize(widths_[l + 1]);
    k.gemv(params_.data() + weight_offset(l), tape.a[l].data(), params_.data() + bias_offset(l),
           out.data(), widths_[l + 1], widths_[l]);
    if (l + 1 < num_layers()) {
      for (double& v : out) v = std::tanh(v);
    }
  }
  return tape.a.back();
}

Vec Mlp::backward(const Tape& tape, VecView grad_out, std::span<double> param_grad) const {
  require_dim("mlp: output gradient", grad_out, output_dim());
  if (!param_grad.empty() && param_grad.size() != params_.size()) {
    throw DimensionMismatch("mlp: parameter gradient", params_.size(), param_grad.size());
  }
  if (tape.a.size() != widths_.size()) throw InvalidArgument("mlp: tape does not match network");
  const auto& k = kernels::active();
  Vec g(grad_out.begin(), grad_out.end());
  for (std::size_t l = num_layers(); l-- > 0;) {
    const std::size_t in = widths_[l];
    const std::size_t out = widths_[l + 1];
    if (l + 1 < num_layers()) {
      // through tanh: d/dz tanh(z) = 1 - tanh(z)^2
      const Vec& act = tape.a[l + 1];
      for (std::size_t i = 0; i < out; ++i) g[i] *= 1.0 - act[i] * act[i];
    }
    if (!param_grad.empty()) {
      k.ger(1.0, g.data(), tape.a[l].data(), param_grad.data() + weight_offset(l), out, in);
      double* gb = param_grad.data() + bias_offset(l);
      for (std::size_t i = 0; i < out; ++i) gb[i] += g[i];
    }
    Vec prev(in, 0.0);
    k.gemv_t(params_.data() + weight_offset(l), g.data(), prev.data(), out, in);
    g.swap(prev);
  }
  return g;
}

void Adam::step(std::span<double> params, VecView grad, const std::vector<char>* mask) {
  require_dim("adam: gradient", grad, params.size());
  if (m_.empty()) {
    m_.assign(params.size(), 0.0);
    v_.assign(params.size(), 0.0);
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (mask != nullptr && (*mask)[i] == 0) continue;
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
    params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
  }
}

}  // namespace fusion
