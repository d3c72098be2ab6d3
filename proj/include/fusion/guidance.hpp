// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "fusion/types.hpp"

namespace fusion {

// Guidance weights. A weight of -1 removes its slot's contribution exactly.
struct GuidanceWeights {
  double omega = 2.0;   // joint classifier-free weight
  double omega1 = 2.0;  // identity slot, independent rule
  double omega2 = 2.0;  // text slot, independent rule
  std::vector<double> omega_list;  // one per identity condition, multi-condition rule
  double omega_C = 2.0;            // text slot, multi-condition rule

  void validate() const;
};

// (1 + omega) eps_joint - omega eps_uncond
Vec cfg_single(VecView eps_joint, VecView eps_uncond, double omega);

// eps_u + (1 + w1)(eps_S - eps_u) + (1 + w2)(eps_C - eps_u)
Vec cfg_independent(VecView eps_uncond, VecView eps_identity, VecView eps_text,
                    const GuidanceWeights& w);

// eps_u + sum_i (1 + w_i)(eps_i - eps_u), one weight per conditional prediction.
Vec cfg_multi(VecView eps_uncond, const std::vector<Vec>& eps_conds,
              const std::vector<double>& omegas);

// eps_u + sum_i (1 + omega_list[i])(eps_S_i - eps_u) + (1 + omega_C)(eps_C - eps_u)
Vec cfg_multi(VecView eps_uncond, const std::vector<Vec>& eps_identities, VecView eps_text,
              const GuidanceWeights& w);

// Score from a noise prediction: -eps / sqrt(1 - alpha_bar_t).
Vec eps_to_score(VecView eps, double alpha_bar_t);
Vec score_to_eps(VecView score, double alpha_bar_t);

}  // namespace fusion
