// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "fusion/types.hpp"

namespace fusion {

// Discrete diffusion time t = 1..T. alpha_bar[0] = 1 is reserved for clean data,
// alpha_bar[t] = alpha_bar[t-1] * (1 - beta[t]) with beta stored at beta[t-1].
// Immutable after construction.
class DiffusionSchedule {
 public:
  // Linear beta ramp from beta_start to beta_end over T steps.
  static DiffusionSchedule linear(int T, double beta_start, double beta_end);
  // From an explicit strictly decreasing alpha_bar sequence with alpha_bar[0] = 1.
  static DiffusionSchedule from_alpha_bar(std::vector<double> alpha_bar);

  int steps() const noexcept { return T_; }
  double alpha_bar(int t) const;
  double beta(int t) const;
  const std::vector<double>& alpha_bars() const noexcept { return alpha_bar_; }
  const std::vector<double>& betas() const noexcept { return beta_; }

  double beta_start() const noexcept { return beta_start_; }
  double beta_end() const noexcept { return beta_end_; }

 private:
  DiffusionSchedule() = default;

  int T_ = 0;
  std::vector<double> alpha_bar_;
  std::vector<double> beta_;
  double beta_start_ = 0.0;
  double beta_end_ = 0.0;
};

inline DiffusionSchedule build_schedule(int T, double beta_start, double beta_end) {
  return DiffusionSchedule::linear(T, beta_start, beta_end);
}

enum class SigmaKind { ddim_eta, boundary, custom };

std::string to_string(SigmaKind kind);
SigmaKind sigma_kind_from_string(const std::string& name);

// Per-step randomness of the reverse process.
struct SigmaProfile {
  SigmaKind kind = SigmaKind::boundary;
  double eta = 0.0;
  // custom only: values[t - 1] is sigma_t
  std::vector<double> values;

  static SigmaProfile ddim(double eta);
  static SigmaProfile boundary();
  static SigmaProfile custom(std::vector<double> values);
};

// Relative slack allowed when checking sigma_t^2 <= 1 - alpha_bar[t-1]. The
// boundary profile computes sqrt(1 - a)^2, which can exceed 1 - a by an ulp.
inline constexpr double kFeasibilitySlack = 1e-12;

double sigma_at(const DiffusionSchedule& schedule, const SigmaProfile& profile, int t);

// Checks every t; throws Infeasible naming the first bad step.
void validate_profile(const DiffusionSchedule& schedule, const SigmaProfile& profile);

}  // namespace fusion
