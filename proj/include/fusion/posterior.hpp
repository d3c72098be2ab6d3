// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "fusion/rng.hpp"
#include "fusion/schedule.hpp"
#include "fusion/types.hpp"

// Gaussian algebra of one reverse step. All covariances are multiples of the
// identity, so every coefficient is a scalar applied elementwise.

namespace fusion {

// alpha_bar_t, alpha_bar_{t-1} and sigma_t for one step.
struct StepParams {
  double alpha_bar;
  double alpha_bar_prev;
  double sigma;

  static StepParams at(const DiffusionSchedule& schedule, int t, double sigma);
};

// Isotropic Gaussian N(mean, variance * I).
struct GaussianMoments {
  Vec mean;
  double variance;
};

// (x_t - sqrt(1 - a_t) eps) / sqrt(a_t)
Vec predict_x0(VecView x_t, VecView eps, double alpha_bar_t);

// q(x_{t-1} | x_t, x_0): mean sqrt(a_{t-1}) x0 + sqrt(1 - a_{t-1} - s^2)(x_t - sqrt(a_t) x0)/sqrt(1 - a_t),
// variance s^2. Requires s^2 <= 1 - a_{t-1}.
GaussianMoments prev_moments(VecView x_t, VecView x0_hat, const StepParams& p);
Vec sample_prev(VecView x_t, VecView x0_hat, const StepParams& p, Rng& rng);
Vec sample_prev(VecView x_t, VecView x0_hat, int t, const DiffusionSchedule& schedule,
                double sigma_t, Rng& rng);

// Scalars of the re-noising conditional q(x_t | x_{t-1}, x_0) = N(Sigma(A^T L (x_{t-1} - b) + B mu), Sigma).
struct PosteriorCoefficients {
  double Sigma_scale;  // (1 - a_t) s^2 / (1 - a_{t-1})
  Vec mu;              // sqrt(a_t) x0
  Vec b;               // sqrt(a_{t-1}) x0 - A sqrt(a_t) x0
  double A_scale;      // sqrt(1 - a_{t-1} - s^2) / sqrt(1 - a_t)
  double L_scale;      // 1 / s^2
  double B_scale;      // 1 / (1 - a_t)
};

// Throws Infeasible when sigma = 0: the precision L is undefined and the
// refinement-stage re-noising needs a stochastic step.
PosteriorCoefficients renoise_coefficients(VecView x0_hat, const StepParams& p);
GaussianMoments renoise_moments(VecView x_prev, VecView x0_hat, const StepParams& p);
Vec renoise(VecView x_prev, VecView x0_hat, const StepParams& p, Rng& rng);
Vec renoise(VecView x_prev, VecView x0_hat, int t, const DiffusionSchedule& schedule,
            double sigma_t, Rng& rng);

// Single fusion-stage update x_t <- x_t - eps_coeff * eps + noise_coeff * z.
struct FusedCoefficients {
  double eps_coeff;    // s^2 sqrt(1 - a_t) / (1 - a_{t-1})
  double noise_coeff;  // sqrt((1 - a_t)(2 - 2 a_{t-1} - s^2)) s / (1 - a_{t-1})
};

// Accepts s^2 <= 2 (1 - a_{t-1}), the range where the noise radicand is nonnegative.
FusedCoefficients fused_coefficients(const StepParams& p);
GaussianMoments fused_moments(VecView x_t, VecView eps_tilde, const StepParams& p);
Vec fused_update(VecView x_t, VecView eps_tilde, const StepParams& p, Rng& rng);
Vec fused_update(VecView x_t, VecView eps_tilde, int t, const DiffusionSchedule& schedule,
                 double sigma_t, Rng& rng);

// x_t + lambda * score + sqrt(2 lambda) z with score = -eps / sqrt(1 - a_t).
Vec langevin_update(VecView x_t, VecView eps_tilde, double alpha_bar_t, double lambda, Rng& rng);
// Step size whose Langevin drift equals the fused update's drift: s^2 (1 - a_t)/(1 - a_{t-1}).
double matching_langevin_step(const StepParams& p);

struct VarianceBoundRow {
  int t;
  double sigma;
  double fused_variance;     // (1 - a_t)(2 - 2 a_{t-1} - s^2) s^2 / (1 - a_{t-1})^2
  double langevin_variance;  // 2 s^2 (1 - a_t) / (1 - a_{t-1})
  double margin;             // langevin - fused, >= 0
  bool holds;
};

struct VarianceBoundReport {
  std::vector<VarianceBoundRow> rows;
  std::size_t violations = 0;
};

// The fused update never injects more noise than Langevin dynamics with the
// matching step size. Terminal steps with a_{t-1} = 1 are reported as 0 <= 0.
VarianceBoundReport check_variance_bound(const DiffusionSchedule& schedule,
                                         const SigmaProfile& profile);

}  // namespace fusion
