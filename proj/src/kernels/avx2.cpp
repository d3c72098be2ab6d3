// SPDX-License-Identifier: Apache-2.0
// AVX2 (4 x double) variants. Compiled with -mavx2 only: no FMA contraction, so the
// elementwise kernels round exactly like the scalar reference.
#include "fusion/kernels.hpp"

#include <immintrin.h>

namespace fusion::kernels {
namespace {

constexpr std::size_t kLane = 4;

void axpby_avx2(double a, const double* x, double b, const double* y, double* out,
                std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  const __m256d vb = _mm256_set1_pd(b);
  std::size_t i = 0;
  for (; i + kLane <= n; i += kLane) {
    const __m256d ax = _mm256_mul_pd(va, _mm256_loadu_pd(x + i));
    const __m256d by = _mm256_mul_pd(vb, _mm256_loadu_pd(y + i));
    _mm256_storeu_pd(out + i, _mm256_add_pd(ax, by));
  }
  for (; i < n; ++i) out[i] = a * x[i] + b * y[i];
}

void lincomb3_avx2(double a, const double* x, double b, const double* y, double c,
                   const double* z, double* out, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  const __m256d vb = _mm256_set1_pd(b);
  const __m256d vc = _mm256_set1_pd(c);
  std::size_t i = 0;
  for (; i + kLane <= n; i += kLane) {
    const __m256d ax = _mm256_mul_pd(va, _mm256_loadu_pd(x + i));
    const __m256d by = _mm256_mul_pd(vb, _mm256_loadu_pd(y + i));
    const __m256d cz = _mm256_mul_pd(vc, _mm256_loadu_pd(z + i));
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_add_pd(ax, by), cz));
  }
  for (; i < n; ++i) out[i] = a * x[i] + b * y[i] + c * z[i];
}

void scale_avx2(double a, const double* x, double* out, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + kLane <= n; i += kLane) {
    _mm256_storeu_pd(out + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
  }
  for (; i < n; ++i) out[i] = a * x[i];
}

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double dot_avx2(const double* x, const double* y, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + kLane <= n; i += kLane) {
    acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  double tail = 0.0;
  for (; i < n; ++i) tail += x[i] * y[i];
  return hsum(acc) + tail;
}

double sq_dist_avx2(const double* x, const double* y, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + kLane <= n; i += kLane) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i));
    acc = _mm256_add_pd(acc, _mm256_mul_pd(d, d));
  }
  double tail = 0.0;
  for (; i < n; ++i) {
    const double d = x[i] - y[i];
    tail += d * d;
  }
  return hsum(acc) + tail;
}

void gemv_avx2(const double* w, const double* x, const double* bias, double* out,
               std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    out[r] = dot_avx2(w + r * cols, x, cols) + (bias ? bias[r] : 0.0);
  }
}

void gemv_t_avx2(const double* w, const double* g, double* out, std::size_t rows,
                 std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double gr = g[r];
    const __m256d vg = _mm256_set1_pd(gr);
    const double* row = w + r * cols;
    std::size_t c = 0;
    for (; c + kLane <= cols; c += kLane) {
      const __m256d prod = _mm256_mul_pd(vg, _mm256_loadu_pd(row + c));
      _mm256_storeu_pd(out + c, _mm256_add_pd(_mm256_loadu_pd(out + c), prod));
    }
    for (; c < cols; ++c) out[c] += gr * row[c];
  }
}

void ger_avx2(double alpha, const double* g, const double* x, double* w, std::size_t rows,
              std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double ag = alpha * g[r];
    const __m256d vag = _mm256_set1_pd(ag);
    double* row = w + r * cols;
    std::size_t c = 0;
    for (; c + kLane <= cols; c += kLane) {
      const __m256d prod = _mm256_mul_pd(vag, _mm256_loadu_pd(x + c));
      _mm256_storeu_pd(row + c, _mm256_add_pd(_mm256_loadu_pd(row + c), prod));
    }
    for (; c < cols; ++c) row[c] += ag * x[c];
  }
}

}  // namespace

const KernelTable& avx2_table() {
  static const KernelTable table{Isa::avx2,   "avx2",       axpby_avx2,   lincomb3_avx2,
                                 scale_avx2,  dot_avx2,     sq_dist_avx2, gemv_avx2,
                                 gemv_t_avx2, ger_avx2};
  return table;
}

}  // namespace fusion::kernels
