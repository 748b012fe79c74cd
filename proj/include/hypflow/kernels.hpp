#pragma once

// Dense arithmetic inner loops used by the network engine and the flow
// stepper. Every kernel has a portable scalar reference implementation;
// vectorized variants are selected once at runtime from CPU features and
// are tested for equivalence against the reference.

#include <cstddef>
#include <string_view>

namespace hypflow::kernels {

/// All matrices are row-major and densely packed.
struct KernelTable {
  std::string_view name;

  /// sum_i x[i] * y[i]
  double (*dot)(const double* x, const double* y, std::size_t n);

  /// y += a * x
  void (*axpy)(double a, const double* x, double* y, std::size_t n);

  /// sum_i w[i] * x[i]^2
  double (*weighted_sum_sq)(const double* w, const double* x, std::size_t n);

  /// C[m x n] = beta * C + A[m x k] * B[k x n]   (beta is 0 or 1)
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k,
                  const double* a, const double* b, double beta, double* c);

  /// C[m x n] = beta * C + A^T * B  with A stored [k x m], B stored [k x n]
  void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k,
                  const double* a, const double* b, double beta, double* c);

  /// C[m x n] = beta * C + A * B^T  with A stored [m x k], B stored [n x k]
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k,
                  const double* a, const double* b, double beta, double* c);
};

/// Portable reference kernels.
const KernelTable& scalar_kernels();

/// AVX2+FMA kernels, or nullptr when not compiled in or not supported by
/// the running CPU.
const KernelTable* avx2_kernels();

/// The table used by the library. Chosen on first use: the best supported
/// variant, unless HYPFLOW_SIMD=scalar is set in the environment.
const KernelTable& active();

/// Forces a specific table (nullptr restores automatic selection).
void set_active(const KernelTable* table);

}  // namespace hypflow::kernels
