// SPDX-License-Identifier: Apache-2.0
#include "fusion/kernels.hpp"

namespace fusion::kernels {
namespace {

void axpby_scalar(double a, const double* x, double b, const double* y, double* out,
                  std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a * x[i] + b * y[i];
}

void lincomb3_scalar(double a, const double* x, double b, const double* y, double c,
                     const double* z, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a * x[i] + b * y[i] + c * z[i];
}

void scale_scalar(double a, const double* x, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a * x[i];
}

double dot_scalar(const double* x, const double* y, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

double sq_dist_scalar(const double* x, const double* y, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = x[i] - y[i];
    acc += d * d;
  }
  return acc;
}

void gemv_scalar(const double* w, const double* x, const double* bias, double* out,
                 std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    out[r] = dot_scalar(w + r * cols, x, cols) + (bias ? bias[r] : 0.0);
  }
}

void gemv_t_scalar(const double* w, const double* g, double* out, std::size_t rows,
                   std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double gr = g[r];
    const double* row = w + r * cols;
    for (std::size_t c = 0; c < cols; ++c) out[c] += gr * row[c];
  }
}

void ger_scalar(double alpha, const double* g, const double* x, double* w, std::size_t rows,
                std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double ag = alpha * g[r];
    double* row = w + r * cols;
    for (std::size_t c = 0; c < cols; ++c) row[c] += ag * x[c];
  }
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{Isa::scalar,   "scalar",       axpby_scalar,  lincomb3_scalar,
                                 scale_scalar,  dot_scalar,     sq_dist_scalar, gemv_scalar,
                                 gemv_t_scalar, ger_scalar};
  return table;
}

}  // namespace fusion::kernels
