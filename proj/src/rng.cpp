// SPDX-License-Identifier: Apache-2.0
#include "fusion/rng.hpp"

namespace fusion {

Rng::Rng(std::uint64_t seed) : engine_(seed) {}

Rng Rng::stream(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                    0x5eedu};
  std::uint64_t words[2];
  std::uint32_t raw[4];
  seq.generate(raw, raw + 4);
  words[0] = (static_cast<std::uint64_t>(raw[0]) << 32) | raw[1];
  words[1] = (static_cast<std::uint64_t>(raw[2]) << 32) | raw[3];
  return Rng(words[0] ^ (words[1] * 0x9e3779b97f4a7c15ULL));
}

double Rng::uniform(double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(engine_);
}

std::size_t Rng::index(std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
}

void Rng::fill_normal(std::span<double> out) {
  for (double& x : out) x = normal_(engine_);
}

Vec Rng::normal_vec(std::size_t n) {
  Vec v(n);
  fill_normal(v);
  return v;
}

}  // namespace fusion
