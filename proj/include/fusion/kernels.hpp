// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <string_view>

// Dense double-precision inner loops used by the samplers and the toy networks.
//
// Every kernel has a portable scalar reference and, where the target allows it,
// a vectorized variant. The active table is picked once at runtime from the CPU
// features; FUSION_KERNELS=scalar forces the reference.
//
// Elementwise kernels (axpby, lincomb3, scale) are bit-identical across variants.
// Reductions (dot, gemv, gemv_t, sq_dist) reassociate sums and agree to rounding.

namespace fusion::kernels {

enum class Isa { scalar, avx2, neon };

struct KernelTable {
  Isa isa;
  const char* name;

  // out[i] = a * x[i] + b * y[i]
  void (*axpby)(double a, const double* x, double b, const double* y, double* out, std::size_t n);
  // out[i] = a * x[i] + b * y[i] + c * z[i]
  void (*lincomb3)(double a, const double* x, double b, const double* y, double c, const double* z,
                   double* out, std::size_t n);
  // out[i] = a * x[i]
  void (*scale)(double a, const double* x, double* out, std::size_t n);
  double (*dot)(const double* x, const double* y, std::size_t n);
  double (*sq_dist)(const double* x, const double* y, std::size_t n);
  // out = W x + bias, W row-major rows x cols; bias may be null
  void (*gemv)(const double* w, const double* x, const double* bias, double* out, std::size_t rows,
               std::size_t cols);
  // out += W^T g
  void (*gemv_t)(const double* w, const double* g, double* out, std::size_t rows, std::size_t cols);
  // W += alpha * g x^T
  void (*ger)(double alpha, const double* g, const double* x, double* w, std::size_t rows,
              std::size_t cols);
};

const KernelTable& scalar_table();
// Null when the variant is not compiled in or not supported by this CPU.
const KernelTable* simd_table();

// Table used by the library. Resolved once; honours FUSION_KERNELS.
const KernelTable& active();

// Force a table for the rest of the process (tests, benchmarks).
void set_active(Isa isa);

std::string_view isa_name(Isa isa);

// Thin span wrappers over the active table.
inline void axpby(double a, std::span<const double> x, double b, std::span<const double> y,
                  std::span<double> out) {
  active().axpby(a, x.data(), b, y.data(), out.data(), out.size());
}

inline void lincomb3(double a, std::span<const double> x, double b, std::span<const double> y,
                     double c, std::span<const double> z, std::span<double> out) {
  active().lincomb3(a, x.data(), b, y.data(), c, z.data(), out.data(), out.size());
}

inline void scale(double a, std::span<const double> x, std::span<double> out) {
  active().scale(a, x.data(), out.data(), out.size());
}

inline double dot(std::span<const double> x, std::span<const double> y) {
  return active().dot(x.data(), y.data(), x.size());
}

inline double sq_dist(std::span<const double> x, std::span<const double> y) {
  return active().sq_dist(x.data(), y.data(), x.size());
}

}  // namespace fusion::kernels
