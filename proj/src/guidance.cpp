// SPDX-License-Identifier: Apache-2.0
#include "fusion/guidance.hpp"

#include <cmath>

#include "fusion/kernels.hpp"

namespace fusion {

void GuidanceWeights::validate() const {
  if (!std::isfinite(omega) || !std::isfinite(omega1) || !std::isfinite(omega2) ||
      !std::isfinite(omega_C) || !all_finite(omega_list)) {
    throw InvalidArgument("guidance weights must be finite");
  }
}

Vec cfg_single(VecView eps_joint, VecView eps_uncond, double omega) {
  require_dim("cfg_single: eps_uncond", eps_uncond, eps_joint.size());
  Vec out(eps_joint.size());
  kernels::axpby(1.0 + omega, eps_joint, -omega, eps_uncond, out);
  return out;
}

Vec cfg_independent(VecView eps_uncond, VecView eps_identity, VecView eps_text,
                    const GuidanceWeights& w) {
  require_dim("cfg_independent: eps_identity", eps_identity, eps_uncond.size());
  require_dim("cfg_independent: eps_text", eps_text, eps_uncond.size());
  Vec delta_identity(eps_uncond.size());
  Vec delta_text(eps_uncond.size());
  kernels::axpby(1.0, eps_identity, -1.0, eps_uncond, delta_identity);
  kernels::axpby(1.0, eps_text, -1.0, eps_uncond, delta_text);
  Vec out(eps_uncond.size());
  kernels::lincomb3(1.0, eps_uncond, 1.0 + w.omega1, delta_identity, 1.0 + w.omega2, delta_text, out);
  return out;
}

Vec cfg_multi(VecView eps_uncond, const std::vector<Vec>& eps_conds,
              const std::vector<double>& omegas) {
  if (eps_conds.size() != omegas.size()) {
    throw InvalidArgument("cfg_multi: " + std::to_string(eps_conds.size()) +
                          " predictions but " + std::to_string(omegas.size()) + " weights");
  }
  Vec out(eps_uncond.begin(), eps_uncond.end());
  Vec delta(eps_uncond.size());
  for (std::size_t i = 0; i < eps_conds.size(); ++i) {
    require_dim("cfg_multi: conditional prediction", eps_conds[i], eps_uncond.size());
    kernels::axpby(1.0, eps_conds[i], -1.0, eps_uncond, delta);
    kernels::axpby(1.0, out, 1.0 + omegas[i], delta, out);
  }
  return out;
}

Vec cfg_multi(VecView eps_uncond, const std::vector<Vec>& eps_identities, VecView eps_text,
              const GuidanceWeights& w) {
  std::vector<Vec> conds = eps_identities;
  conds.emplace_back(eps_text.begin(), eps_text.end());
  std::vector<double> omegas = w.omega_list;
  omegas.push_back(w.omega_C);
  return cfg_multi(eps_uncond, conds, omegas);
}

Vec eps_to_score(VecView eps, double alpha_bar_t) {
  if (!(alpha_bar_t > 0.0 && alpha_bar_t < 1.0)) {
    throw InvalidArgument("eps_to_score: alpha_bar_t must lie in (0, 1)");
  }
  Vec out(eps.size());
  kernels::scale(-1.0 / std::sqrt(1.0 - alpha_bar_t), eps, out);
  return out;
}

Vec score_to_eps(VecView score, double alpha_bar_t) {
  if (!(alpha_bar_t > 0.0 && alpha_bar_t < 1.0)) {
    throw InvalidArgument("score_to_eps: alpha_bar_t must lie in (0, 1)");
  }
  Vec out(score.size());
  kernels::scale(-std::sqrt(1.0 - alpha_bar_t), score, out);
  return out;
}

}  // namespace fusion
