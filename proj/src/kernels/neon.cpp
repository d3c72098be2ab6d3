// SPDX-License-Identifier: Apache-2.0
// NEON (2 x double) variants for aarch64. Separate multiply and add keep the
// elementwise kernels bit-identical to the scalar reference.
#include "fusion/kernels.hpp"

#include <arm_neon.h>

namespace fusion::kernels {
namespace {

constexpr std::size_t kLane = 2;

void axpby_neon(double a, const double* x, double b, const double* y, double* out,
                std::size_t n) {
  const float64x2_t va = vdupq_n_f64(a);
  const float64x2_t vb = vdupq_n_f64(b);
  std::size_t i = 0;
  for (; i + kLane <= n; i += kLane) {
    const float64x2_t ax = vmulq_f64(va, vld1q_f64(x + i));
    const float64x2_t by = vmulq_f64(vb, vld1q_f64(y + i));
    vst1q_f64(out + i, vaddq_f64(ax, by));
  }
  for (; i < n; ++i) out[i] = a * x[i] + b * y[i];
}

void lincomb3_neon(double a, const double* x, double b, const double* y, double c,
                   const double* z, double* out, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(a);
  const float64x2_t vb = vdupq_n_f64(b);
  const float64x2_t vc = vdupq_n_f64(c);
  std::size_t i = 0;
  for (; i + kLane <= n; i += kLane) {
    const float64x2_t ax = vmulq_f64(va, vld1q_f64(x + i));
    const float64x2_t by = vmulq_f64(vb, vld1q_f64(y + i));
    const float64x2_t cz = vmulq_f64(vc, vld1q_f64(z + i));
    vst1q_f64(out + i, vaddq_f64(vaddq_f64(ax, by), cz));
  }
  for (; i < n; ++i) out[i] = a * x[i] + b * y[i] + c * z[i];
}

void scale_neon(double a, const double* x, double* out, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(a);
  std::size_t i = 0;
  for (; i + kLane <= n; i += kLane) vst1q_f64(out + i, vmulq_f64(va, vld1q_f64(x + i)));
  for (; i < n; ++i) out[i] = a * x[i];
}

double dot_neon(const double* x, const double* y, std::size_t n) {
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + kLane <= n; i += kLane) {
    acc = vaddq_f64(acc, vmulq_f64(vld1q_f64(x + i), vld1q_f64(y + i)));
  }
  double tail = 0.0;
  for (; i < n; ++i) tail += x[i] * y[i];
  return vaddvq_f64(acc) + tail;
}

double sq_dist_neon(const double* x, const double* y, std::size_t n) {
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + kLane <= n; i += kLane) {
    const float64x2_t d = vsubq_f64(vld1q_f64(x + i), vld1q_f64(y + i));
    acc = vaddq_f64(acc, vmulq_f64(d, d));
  }
  double tail = 0.0;
  for (; i < n; ++i) {
    const double d = x[i] - y[i];
    tail += d * d;
  }
  return vaddvq_f64(acc) + tail;
}

void gemv_neon(const double* w, const double* x, const double* bias, double* out,
               std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    out[r] = dot_neon(w + r * cols, x, cols) + (bias ? bias[r] : 0.0);
  }
}

void gemv_t_neon(const double* w, const double* g, double* out, std::size_t rows,
                 std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double gr = g[r];
    const float64x2_t vg = vdupq_n_f64(gr);
    const double* row = w + r * cols;
    std::size_t c = 0;
    for (; c + kLane <= cols; c += kLane) {
      vst1q_f64(out + c, vaddq_f64(vld1q_f64(out + c), vmulq_f64(vg, vld1q_f64(row + c))));
    }
    for (; c < cols; ++c) out[c] += gr * row[c];
  }
}

void ger_neon(double alpha, const double* g, const double* x, double* w, std::size_t rows,
              std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double ag = alpha * g[r];
    const float64x2_t vag = vdupq_n_f64(ag);
    double* row = w + r * cols;
    std::size_t c = 0;
    for (; c + kLane <= cols; c += kLane) {
      vst1q_f64(row + c, vaddq_f64(vld1q_f64(row + c), vmulq_f64(vag, vld1q_f64(x + c))));
    }
    for (; c < cols; ++c) row[c] += ag * x[c];
  }
}

}  // namespace

const KernelTable& neon_table() {
  static const KernelTable table{Isa::neon,   "neon",       axpby_neon,   lincomb3_neon,
                                 scale_neon,  dot_neon,     sq_dist_neon, gemv_neon,
                                 gemv_t_neon, ger_neon};
  return table;
}

}  // namespace fusion::kernels
