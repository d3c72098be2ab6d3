// SPDX-License-Identifier: Apache-2.0
#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "fusion/kernels.hpp"

namespace fusion::kernels {

#if defined(FUSION_HAVE_AVX2)
const KernelTable& avx2_table();
#endif
#if defined(FUSION_HAVE_NEON)
const KernelTable& neon_table();
#endif

const KernelTable* simd_table() {
#if defined(FUSION_HAVE_AVX2)
  static const bool supported = __builtin_cpu_supports("avx2");
  return supported ? &avx2_table() : nullptr;
#elif defined(FUSION_HAVE_NEON)
  return &neon_table();
#else
  return nullptr;
#endif
}

namespace {

const KernelTable* resolve() {
  const char* forced = std::getenv("FUSION_KERNELS");
  if (forced != nullptr && std::string(forced) == "scalar") return &scalar_table();
  if (const KernelTable* simd = simd_table()) return simd;
  return &scalar_table();
}

std::atomic<const KernelTable*> g_active{nullptr};

}  // namespace

const KernelTable& active() {
  const KernelTable* table = g_active.load(std::memory_order_acquire);
  if (table == nullptr) {
    table = resolve();
    g_active.store(table, std::memory_order_release);
  }
  return *table;
}

void set_active(Isa isa) {
  if (isa == Isa::scalar) {
    g_active.store(&scalar_table(), std::memory_order_release);
    return;
  }
  const KernelTable* simd = simd_table();
  if (simd == nullptr || simd->isa != isa) {
    throw std::invalid_argument("kernel variant not available: " + std::string(isa_name(isa)));
  }
  g_active.store(simd, std::memory_order_release);
}

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
    case Isa::neon: return "neon";
  }
  return "unknown";
}

}  // namespace fusion::kernels
