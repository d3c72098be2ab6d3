// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "fusion/posterior.hpp"

namespace fusion {

struct CheckResult {
  std::string group;
  std::string name;
  bool passed;
  double value;      // worst observed error or margin
  double tolerance;  // bound the value is compared with
  std::string detail;
};

struct VerifyOptions {
  // Groups to run: schedule, model, guidance, posterior, sampler, encoder. Empty runs all.
  std::vector<std::string> groups;
  std::uint64_t seed = 20240611;
  std::size_t monte_carlo_draws = 100000;
  // Coefficients the posterior checks treat as the fused update. Tests swap in a
  // broken version to confirm the checks notice.
  std::function<FusedCoefficients(const StepParams&)> fused = fused_coefficients;
};

const std::vector<std::string>& verify_groups();

// Throws InvalidArgument for an unknown group name.
std::vector<CheckResult> run_checks(const VerifyOptions& options = {});

std::string checks_csv(const std::vector<CheckResult>& results);

}  // namespace fusion
