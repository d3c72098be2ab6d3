// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "fusion/error.hpp"

namespace fusion {

using Vec = std::vector<double>;
using VecView = std::span<const double>;

inline void require_dim(const std::string& what, VecView v, std::size_t expected) {
  if (v.size() != expected) throw DimensionMismatch(what, expected, v.size());
}

inline bool all_finite(VecView v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

inline double norm2(VecView v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return acc;
}

}  // namespace fusion
