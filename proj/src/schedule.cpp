// SPDX-License-Identifier: Apache-2.0
#include "fusion/schedule.hpp"

#include <cmath>

namespace fusion {

DiffusionSchedule DiffusionSchedule::linear(int T, double beta_start, double beta_end) {
  if (T < 1) throw InvalidArgument("schedule: T must be >= 1, got " + std::to_string(T));
  if (!std::isfinite(beta_start) || !std::isfinite(beta_end)) {
    throw InvalidArgument("schedule: beta bounds must be finite");
  }
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw InvalidArgument("schedule: need 0 < beta_start <= beta_end < 1");
  }
  DiffusionSchedule s;
  s.T_ = T;
  s.beta_start_ = beta_start;
  s.beta_end_ = beta_end;
  s.beta_.resize(static_cast<std::size_t>(T));
  s.alpha_bar_.resize(static_cast<std::size_t>(T) + 1);
  s.alpha_bar_[0] = 1.0;
  for (int t = 1; t <= T; ++t) {
    const double frac = T == 1 ? 0.0 : static_cast<double>(t - 1) / static_cast<double>(T - 1);
    const double b = beta_start + (beta_end - beta_start) * frac;
    s.beta_[static_cast<std::size_t>(t - 1)] = b;
    s.alpha_bar_[static_cast<std::size_t>(t)] = s.alpha_bar_[static_cast<std::size_t>(t - 1)] * (1.0 - b);
  }
  return s;
}

DiffusionSchedule DiffusionSchedule::from_alpha_bar(std::vector<double> alpha_bar) {
  if (alpha_bar.size() < 2) throw InvalidArgument("schedule: need at least alpha_bar[0..1]");
  if (alpha_bar[0] != 1.0) throw InvalidArgument("schedule: alpha_bar[0] must be 1");
  DiffusionSchedule s;
  s.T_ = static_cast<int>(alpha_bar.size()) - 1;
  s.beta_.resize(alpha_bar.size() - 1);
  for (std::size_t t = 1; t < alpha_bar.size(); ++t) {
    const double a = alpha_bar[t];
    if (!std::isfinite(a) || !(a > 0.0) || !(a < alpha_bar[t - 1])) {
      throw InvalidArgument("schedule: alpha_bar must be finite, positive and strictly decreasing");
    }
    s.beta_[t - 1] = 1.0 - a / alpha_bar[t - 1];
  }
  s.beta_start_ = s.beta_.front();
  s.beta_end_ = s.beta_.back();
  s.alpha_bar_ = std::move(alpha_bar);
  return s;
}

double DiffusionSchedule::alpha_bar(int t) const {
  if (t < 0 || t > T_) {
    throw InvalidArgument("schedule: timestep " + std::to_string(t) + " outside 0.." +
                          std::to_string(T_));
  }
  return alpha_bar_[static_cast<std::size_t>(t)];
}

double DiffusionSchedule::beta(int t) const {
  if (t < 1 || t > T_) throw InvalidArgument("schedule: beta index outside 1..T");
  return beta_[static_cast<std::size_t>(t - 1)];
}

std::string to_string(SigmaKind kind) {
  switch (kind) {
    case SigmaKind::ddim_eta: return "ddim_eta";
    case SigmaKind::boundary: return "boundary";
    case SigmaKind::custom: return "custom";
  }
  return "unknown";
}

SigmaKind sigma_kind_from_string(const std::string& name) {
  if (name == "ddim_eta") return SigmaKind::ddim_eta;
  if (name == "boundary") return SigmaKind::boundary;
  if (name == "custom") return SigmaKind::custom;
  throw InvalidArgument("unknown sigma kind '" + name + "'");
}

SigmaProfile SigmaProfile::ddim(double eta) {
  if (!(eta >= 0.0 && eta <= 1.0)) throw InvalidArgument("sigma: eta must lie in [0, 1]");
  return SigmaProfile{SigmaKind::ddim_eta, eta, {}};
}

SigmaProfile SigmaProfile::boundary() { return SigmaProfile{SigmaKind::boundary, 0.0, {}}; }

SigmaProfile SigmaProfile::custom(std::vector<double> values) {
  return SigmaProfile{SigmaKind::custom, 0.0, std::move(values)};
}

double sigma_at(const DiffusionSchedule& schedule, const SigmaProfile& profile, int t) {
  if (t < 1 || t > schedule.steps()) {
    throw InvalidArgument("sigma: timestep " + std::to_string(t) + " outside 1.." +
                          std::to_string(schedule.steps()));
  }
  const double a = schedule.alpha_bar(t);
  const double a_prev = schedule.alpha_bar(t - 1);
  switch (profile.kind) {
    case SigmaKind::boundary:
      return std::sqrt(1.0 - a_prev);
    case SigmaKind::ddim_eta:
      return profile.eta * std::sqrt((1.0 - a_prev) / (1.0 - a)) * std::sqrt(1.0 - a / a_prev);
    case SigmaKind::custom: {
      if (profile.values.size() != static_cast<std::size_t>(schedule.steps())) {
        throw InvalidArgument("sigma: custom profile needs " + std::to_string(schedule.steps()) +
                              " values, got " + std::to_string(profile.values.size()));
      }
      const double s = profile.values[static_cast<std::size_t>(t - 1)];
      if (!std::isfinite(s) || s < 0.0) {
        throw Infeasible("sigma: custom value at t=" + std::to_string(t) + " must be finite and >= 0");
      }
      if (s * s > (1.0 - a_prev) * (1.0 + kFeasibilitySlack)) {
        throw Infeasible("sigma: custom value at t=" + std::to_string(t) +
                         " violates sigma^2 <= 1 - alpha_bar[t-1]");
      }
      return s;
    }
  }
  throw InvalidArgument("sigma: unknown profile kind");
}

void validate_profile(const DiffusionSchedule& schedule, const SigmaProfile& profile) {
  if (profile.kind == SigmaKind::ddim_eta && !(profile.eta >= 0.0 && profile.eta <= 1.0)) {
    throw InvalidArgument("sigma: eta must lie in [0, 1]");
  }
  for (int t = 1; t <= schedule.steps(); ++t) (void)sigma_at(schedule, profile, t);
}

}  // namespace fusion
