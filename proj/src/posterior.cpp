// SPDX-License-Identifier: Apache-2.0
#include "fusion/posterior.hpp"

#include <cmath>

#include "fusion/kernels.hpp"

namespace fusion {
namespace {

constexpr double kRadicandFloor = 1e-14;

void check_sigma(const StepParams& p, double max_sigma_sq, const char* what) {
  if (!std::isfinite(p.sigma) || p.sigma < 0.0) {
    throw Infeasible(std::string(what) + ": sigma must be finite and >= 0");
  }
  if (p.sigma * p.sigma > max_sigma_sq * (1.0 + kFeasibilitySlack) + 0.0) {
    throw Infeasible(std::string(what) + ": sigma^2 = " + std::to_string(p.sigma * p.sigma) +
                     " exceeds " + std::to_string(max_sigma_sq));
  }
}

void check_alphas(const StepParams& p) {
  if (!(p.alpha_bar > 0.0 && p.alpha_bar < 1.0 && p.alpha_bar_prev > p.alpha_bar &&
        p.alpha_bar_prev <= 1.0)) {
    throw InvalidArgument("posterior: need 0 < alpha_bar_t < alpha_bar_{t-1} <= 1");
  }
}

// Radicands this close to zero are rounding residue of a boundary sigma.
double clamp_radicand(double r, double scale) { return r > kRadicandFloor * scale ? r : 0.0; }

// sqrt(1 - a_{t-1} - s^2), zero at the boundary sigma.
double direction_coeff(const StepParams& p) {
  const double room = 1.0 - p.alpha_bar_prev;
  return std::sqrt(clamp_radicand(room - p.sigma * p.sigma, room));
}

void add_noise(Vec& x, double scale, Rng& rng) {
  Vec z = rng.normal_vec(x.size());
  kernels::axpby(1.0, x, scale, z, x);
}

}  // namespace

StepParams StepParams::at(const DiffusionSchedule& schedule, int t, double sigma) {
  if (t < 1 || t > schedule.steps()) throw InvalidArgument("posterior: timestep outside 1..T");
  return StepParams{schedule.alpha_bar(t), schedule.alpha_bar(t - 1), sigma};
}

Vec predict_x0(VecView x_t, VecView eps, double alpha_bar_t) {
  require_dim("predict_x0: eps", eps, x_t.size());
  if (!(alpha_bar_t > 0.0 && alpha_bar_t <= 1.0)) {
    throw InvalidArgument("predict_x0: alpha_bar_t must lie in (0, 1]");
  }
  const double inv = 1.0 / std::sqrt(alpha_bar_t);
  Vec out(x_t.size());
  kernels::axpby(inv, x_t, -std::sqrt(1.0 - alpha_bar_t) * inv, eps, out);
  return out;
}

GaussianMoments prev_moments(VecView x_t, VecView x0_hat, const StepParams& p) {
  require_dim("sample_prev: x0_hat", x0_hat, x_t.size());
  check_alphas(p);
  check_sigma(p, 1.0 - p.alpha_bar_prev, "sample_prev");
  const double k = direction_coeff(p) / std::sqrt(1.0 - p.alpha_bar);
  // sqrt(a_prev) x0 + k (x_t - sqrt(a) x0)
  GaussianMoments m{Vec(x_t.size()), p.sigma * p.sigma};
  kernels::axpby(k, x_t, std::sqrt(p.alpha_bar_prev) - k * std::sqrt(p.alpha_bar), x0_hat, m.mean);
  return m;
}

Vec sample_prev(VecView x_t, VecView x0_hat, const StepParams& p, Rng& rng) {
  GaussianMoments m = prev_moments(x_t, x0_hat, p);
  add_noise(m.mean, p.sigma, rng);
  return std::move(m.mean);
}

Vec sample_prev(VecView x_t, VecView x0_hat, int t, const DiffusionSchedule& schedule,
                double sigma_t, Rng& rng) {
  return sample_prev(x_t, x0_hat, StepParams::at(schedule, t, sigma_t), rng);
}

PosteriorCoefficients renoise_coefficients(VecView x0_hat, const StepParams& p) {
  check_alphas(p);
  check_sigma(p, 1.0 - p.alpha_bar_prev, "renoise");
  if (p.sigma == 0.0) {
    throw Infeasible("renoise: sigma_t = 0 leaves the re-noising precision undefined; use m = 0 for "
                     "deterministic sampling");
  }
  const double s2 = p.sigma * p.sigma;
  PosteriorCoefficients c;
  c.Sigma_scale = (1.0 - p.alpha_bar) * s2 / (1.0 - p.alpha_bar_prev);
  c.A_scale = direction_coeff(p) / std::sqrt(1.0 - p.alpha_bar);
  c.L_scale = 1.0 / s2;
  c.B_scale = 1.0 / (1.0 - p.alpha_bar);
  c.mu.resize(x0_hat.size());
  kernels::scale(std::sqrt(p.alpha_bar), x0_hat, c.mu);
  c.b.resize(x0_hat.size());
  kernels::scale(std::sqrt(p.alpha_bar_prev) - c.A_scale * std::sqrt(p.alpha_bar), x0_hat, c.b);
  return c;
}

GaussianMoments renoise_moments(VecView x_prev, VecView x0_hat, const StepParams& p) {
  require_dim("renoise: x0_hat", x0_hat, x_prev.size());
  const PosteriorCoefficients c = renoise_coefficients(x0_hat, p);
  // Sigma (A L (x_prev - b) + B mu)
  Vec residual(x_prev.size());
  kernels::axpby(1.0, x_prev, -1.0, c.b, residual);
  GaussianMoments m{Vec(x_prev.size()), c.Sigma_scale};
  kernels::axpby(c.Sigma_scale * c.A_scale * c.L_scale, residual, c.Sigma_scale * c.B_scale, c.mu,
                 m.mean);
  return m;
}

Vec renoise(VecView x_prev, VecView x0_hat, const StepParams& p, Rng& rng) {
  GaussianMoments m = renoise_moments(x_prev, x0_hat, p);
  add_noise(m.mean, std::sqrt(m.variance), rng);
  return std::move(m.mean);
}

Vec renoise(VecView x_prev, VecView x0_hat, int t, const DiffusionSchedule& schedule,
            double sigma_t, Rng& rng) {
  return renoise(x_prev, x0_hat, StepParams::at(schedule, t, sigma_t), rng);
}

FusedCoefficients fused_coefficients(const StepParams& p) {
  check_alphas(p);
  check_sigma(p, 2.0 * (1.0 - p.alpha_bar_prev), "fused_update");
  const double s2 = p.sigma * p.sigma;
  const double one_minus_prev = 1.0 - p.alpha_bar_prev;
  if (one_minus_prev == 0.0) return FusedCoefficients{0.0, 0.0};
  const double radicand =
      (1.0 - p.alpha_bar) * clamp_radicand(2.0 - 2.0 * p.alpha_bar_prev - s2, one_minus_prev);
  return FusedCoefficients{
      s2 * std::sqrt(1.0 - p.alpha_bar) / one_minus_prev,
      (radicand > 0.0 ? std::sqrt(radicand) : 0.0) * p.sigma / one_minus_prev,
  };
}

GaussianMoments fused_moments(VecView x_t, VecView eps_tilde, const StepParams& p) {
  require_dim("fused_update: eps_tilde", eps_tilde, x_t.size());
  const FusedCoefficients c = fused_coefficients(p);
  GaussianMoments m{Vec(x_t.size()), c.noise_coeff * c.noise_coeff};
  kernels::axpby(1.0, x_t, -c.eps_coeff, eps_tilde, m.mean);
  return m;
}

Vec fused_update(VecView x_t, VecView eps_tilde, const StepParams& p, Rng& rng) {
  require_dim("fused_update: eps_tilde", eps_tilde, x_t.size());
  const FusedCoefficients c = fused_coefficients(p);
  Vec z = rng.normal_vec(x_t.size());
  Vec out(x_t.size());
  kernels::lincomb3(1.0, x_t, -c.eps_coeff, eps_tilde, c.noise_coeff, z, out);
  return out;
}

Vec fused_update(VecView x_t, VecView eps_tilde, int t, const DiffusionSchedule& schedule,
                 double sigma_t, Rng& rng) {
  return fused_update(x_t, eps_tilde, StepParams::at(schedule, t, sigma_t), rng);
}

Vec langevin_update(VecView x_t, VecView eps_tilde, double alpha_bar_t, double lambda, Rng& rng) {
  require_dim("langevin_update: eps_tilde", eps_tilde, x_t.size());
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw InvalidArgument("langevin_update: step size must be positive and finite");
  }
  if (!(alpha_bar_t > 0.0 && alpha_bar_t < 1.0)) {
    throw InvalidArgument("langevin_update: alpha_bar_t must lie in (0, 1)");
  }
  // lambda * score = -lambda / sqrt(1 - a) * eps
  Vec z = rng.normal_vec(x_t.size());
  Vec out(x_t.size());
  kernels::lincomb3(1.0, x_t, -lambda / std::sqrt(1.0 - alpha_bar_t), eps_tilde,
                    std::sqrt(2.0 * lambda), z, out);
  return out;
}

double matching_langevin_step(const StepParams& p) {
  check_alphas(p);
  if (p.alpha_bar_prev == 1.0) return 0.0;
  return p.sigma * p.sigma * (1.0 - p.alpha_bar) / (1.0 - p.alpha_bar_prev);
}

VarianceBoundReport check_variance_bound(const DiffusionSchedule& schedule,
                                         const SigmaProfile& profile) {
  VarianceBoundReport report;
  report.rows.reserve(static_cast<std::size_t>(schedule.steps()));
  for (int t = 1; t <= schedule.steps(); ++t) {
    const double s = sigma_at(schedule, profile, t);
    const double a = schedule.alpha_bar(t);
    const double a_prev = schedule.alpha_bar(t - 1);
    const double s2 = s * s;
    VarianceBoundRow row{t, s, 0.0, 0.0, 0.0, true};
    const double one_minus_prev = 1.0 - a_prev;
    if (one_minus_prev > 0.0) {
      row.fused_variance =
          (1.0 - a) * (2.0 - 2.0 * a_prev - s2) * s2 / (one_minus_prev * one_minus_prev);
      row.langevin_variance = 2.0 * s2 * (1.0 - a) / one_minus_prev;
    }
    // Both sides agree up to rounding when s^2 is negligible next to 1 - a_{t-1};
    // the exact gap is (1 - a_t) s^4 / (1 - a_{t-1})^2.
    row.margin = one_minus_prev > 0.0 ? (1.0 - a) * s2 * s2 / (one_minus_prev * one_minus_prev) : 0.0;
    row.holds = row.fused_variance <= row.langevin_variance * (1.0 + kFeasibilitySlack);
    if (!row.holds) ++report.violations;
    report.rows.push_back(row);
  }
  return report;
}

}  // namespace fusion
