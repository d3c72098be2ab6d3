// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <span>

#include "fusion/types.hpp"

namespace fusion {

// Seeded pseudo-random source. Every consumer that may run concurrently gets its own
// stream from (seed, index); streams never share state.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);
  static Rng stream(std::uint64_t seed, std::uint64_t index);

  double normal() { return normal_(engine_); }
  double uniform(double lo, double hi);
  std::size_t index(std::size_t n);

  void fill_normal(std::span<double> out);
  Vec normal_vec(std::size_t n);

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace fusion
