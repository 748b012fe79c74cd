#include <atomic>
#include <cstdlib>
#include <string_view>

#include "hypflow/kernels.hpp"

namespace hypflow::kernels {

#if defined(HYPFLOW_HAVE_AVX2)
extern const KernelTable kAvx2Table;
#endif

namespace {

std::atomic<const KernelTable*> g_forced{nullptr};

const KernelTable& detect() {
  const char* env = std::getenv("HYPFLOW_SIMD");
  if (env != nullptr && std::string_view(env) == "scalar")
    return scalar_kernels();
  if (const KernelTable* t = avx2_kernels()) return *t;
  return scalar_kernels();
}

}  // namespace

const KernelTable* avx2_kernels() {
#if defined(HYPFLOW_HAVE_AVX2)
  static const bool supported =
      __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return supported ? &kAvx2Table : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable& active() {
  if (const KernelTable* f = g_forced.load()) return *f;
  static const KernelTable& chosen = detect();
  return chosen;
}

void set_active(const KernelTable* table) { g_forced.store(table); }

}  // namespace hypflow::kernels
