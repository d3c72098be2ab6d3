// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <string>

#include "fusion/kernels.hpp"
#include "fusion/rng.hpp"

using namespace fusion;
namespace k = fusion::kernels;

namespace {

Vec randn(Rng& rng, std::size_t n) { return rng.normal_vec(n); }

bool bits_equal(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::memcmp(&a[i], &b[i], sizeof(double)) != 0) return false;
  }
  return true;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

}  // namespace

TEST_CASE("kernel table resolves once and honours a forced scalar choice") {
  const char* forced = std::getenv("FUSION_KERNELS");
  if (forced && std::string(forced) == "scalar") {
    CHECK(k::active().isa == k::Isa::scalar);
  } else if (k::simd_table()) {
    CHECK(k::active().isa == k::simd_table()->isa);
  }
  CHECK(k::isa_name(k::Isa::scalar) == "scalar");
}

TEST_CASE("elementwise kernels are bit-identical to the scalar reference") {
  const k::KernelTable* simd = k::simd_table();
  if (!simd) {
    MESSAGE("no vectorized variant on this machine; nothing to compare");
    return;
  }
  const k::KernelTable& ref = k::scalar_table();
  Rng rng(11);
  for (std::size_t n = 0; n < 70; ++n) {
    const Vec x = randn(rng, n), y = randn(rng, n), z = randn(rng, n);
    const double a = rng.normal(), b = rng.normal(), c = rng.normal();
    Vec r1(n), r2(n);
    ref.axpby(a, x.data(), b, y.data(), r1.data(), n);
    simd->axpby(a, x.data(), b, y.data(), r2.data(), n);
    CHECK(bits_equal(r1, r2));
    ref.lincomb3(a, x.data(), b, y.data(), c, z.data(), r1.data(), n);
    simd->lincomb3(a, x.data(), b, y.data(), c, z.data(), r2.data(), n);
    CHECK(bits_equal(r1, r2));
    ref.scale(a, x.data(), r1.data(), n);
    simd->scale(a, x.data(), r2.data(), n);
    CHECK(bits_equal(r1, r2));
  }
}

TEST_CASE("reductions and matrix kernels agree with the scalar reference to rounding") {
  const k::KernelTable* simd = k::simd_table();
  if (!simd) return;
  const k::KernelTable& ref = k::scalar_table();
  Rng rng(12);
  for (std::size_t n = 0; n < 70; ++n) {
    const Vec x = randn(rng, n), y = randn(rng, n);
    CHECK(rel_err(simd->dot(x.data(), y.data(), n), ref.dot(x.data(), y.data(), n)) < 1e-13);
    CHECK(rel_err(simd->sq_dist(x.data(), y.data(), n), ref.sq_dist(x.data(), y.data(), n)) < 1e-13);
  }
  for (std::size_t rows : {1u, 3u, 8u, 17u}) {
    for (std::size_t cols : {1u, 2u, 5u, 16u, 33u}) {
      const Vec w = randn(rng, rows * cols), x = randn(rng, cols), g = randn(rng, rows), bias = randn(rng, rows);
      Vec o1(rows), o2(rows);
      ref.gemv(w.data(), x.data(), bias.data(), o1.data(), rows, cols);
      simd->gemv(w.data(), x.data(), bias.data(), o2.data(), rows, cols);
      for (std::size_t i = 0; i < rows; ++i) CHECK(rel_err(o2[i], o1[i]) < 1e-13);
      ref.gemv(w.data(), x.data(), nullptr, o1.data(), rows, cols);
      simd->gemv(w.data(), x.data(), nullptr, o2.data(), rows, cols);
      for (std::size_t i = 0; i < rows; ++i) CHECK(rel_err(o2[i], o1[i]) < 1e-13);

      Vec t1(cols, 0.5), t2(cols, 0.5);
      ref.gemv_t(w.data(), g.data(), t1.data(), rows, cols);
      simd->gemv_t(w.data(), g.data(), t2.data(), rows, cols);
      for (std::size_t j = 0; j < cols; ++j) CHECK(rel_err(t2[j], t1[j]) < 1e-13);

      Vec w1 = w, w2 = w;
      ref.ger(0.3, g.data(), x.data(), w1.data(), rows, cols);
      simd->ger(0.3, g.data(), x.data(), w2.data(), rows, cols);
      for (std::size_t i = 0; i < w1.size(); ++i) CHECK(rel_err(w2[i], w1[i]) < 1e-14);
    }
  }
}

TEST_CASE("scalar reference computes what it documents") {
  const k::KernelTable& ref = k::scalar_table();
  const Vec w{1, 2, 3, 4, 5, 6};  // 2 x 3
  const Vec x{1, -1, 2};
  const Vec bias{0.5, -0.5};
  Vec out(2);
  ref.gemv(w.data(), x.data(), bias.data(), out.data(), 2, 3);
  CHECK(out[0] == 5.5);   // 1 - 2 + 6 + 0.5
  CHECK(out[1] == 10.5);  // 4 - 5 + 12 - 0.5
  Vec back(3, 0.0);
  const Vec g{1, 2};
  ref.gemv_t(w.data(), g.data(), back.data(), 2, 3);
  CHECK(back == Vec{9, 12, 15});
  Vec w2 = w;
  ref.ger(2.0, g.data(), x.data(), w2.data(), 2, 3);
  CHECK(w2 == Vec{3, 0, 7, 8, 1, 14});
  CHECK(ref.dot(x.data(), x.data(), 3) == 6.0);
  CHECK(ref.sq_dist(x.data(), g.data(), 2) == 9.0);
}

TEST_CASE("set_active switches the table used by the span wrappers") {
  const k::Isa before = k::active().isa;
  k::set_active(k::Isa::scalar);
  CHECK(k::active().isa == k::Isa::scalar);
  Vec out(3);
  k::axpby(2.0, Vec{1, 2, 3}, -1.0, Vec{1, 1, 1}, out);
  CHECK(out == Vec{1, 3, 5});
  if (before != k::Isa::scalar) k::set_active(before);
  if (!k::simd_table()) CHECK_THROWS(k::set_active(k::Isa::avx2));
}
