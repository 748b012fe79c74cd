#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <string_view>
#include <tuple>
#include <vector>

#include "doctest.h"
#include "hypflow/kernels.hpp"
#include "hypflow/random.hpp"

using namespace hypflow;

namespace {

std::vector<double> fill_random(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

void check_close(const std::vector<double>& a, const std::vector<double>& b, double tol) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= tol * (1.0 + std::abs(b[i])));
}

}  // namespace

TEST_CASE("scalar kernels on small exact inputs") {
  const kernels::KernelTable& k = kernels::scalar_kernels();
  const double x[3] = {1, 2, 3}, y[3] = {4, 5, 6};
  CHECK(k.dot(x, y, 3) == 32.0);
  CHECK(k.weighted_sum_sq(y, x, 3) == 4 + 20 + 54);
  double z[3] = {1, 1, 1};
  k.axpy(2.0, x, z, 3);
  CHECK(z[2] == 7.0);

  const double a[4] = {1, 2, 3, 4};  // 2x2
  const double b[4] = {5, 6, 7, 8};
  double c[4] = {};
  k.gemm_nn(2, 2, 2, a, b, 0.0, c);
  CHECK(c[0] == 19.0);
  CHECK(c[3] == 50.0);
  k.gemm_tn(2, 2, 2, a, b, 0.0, c);  // A^T B
  CHECK(c[0] == 26.0);
  CHECK(c[1] == 30.0);
  k.gemm_nt(2, 2, 2, a, b, 1.0, c);  // += A B^T
  CHECK(c[0] == 26.0 + 17.0);
}

TEST_CASE("vectorized kernels match the scalar reference") {
  const kernels::KernelTable* simd = kernels::avx2_kernels();
  if (!simd) {
    MESSAGE("AVX2 kernels unavailable on this machine");
    return;
  }
  const kernels::KernelTable& ref = kernels::scalar_kernels();
  Rng rng(17);
  for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 8u, 31u, 144u, 1001u}) {
    const auto x = fill_random(rng, n), y = fill_random(rng, n);
    CHECK(simd->dot(x.data(), y.data(), n) == doctest::Approx(ref.dot(x.data(), y.data(), n)).epsilon(1e-13));
    CHECK(simd->weighted_sum_sq(x.data(), y.data(), n) ==
          doctest::Approx(ref.weighted_sum_sq(x.data(), y.data(), n)).epsilon(1e-13));
    auto za = y, zb = y;
    simd->axpy(0.3, x.data(), za.data(), n);
    ref.axpy(0.3, x.data(), zb.data(), n);
    check_close(za, zb, 1e-15);
  }
  for (auto [m, n, kk] : {std::tuple{1u, 1u, 1u}, std::tuple{5u, 7u, 3u}, std::tuple{32u, 64u, 144u},
                          std::tuple{13u, 4u, 65u}, std::tuple{8u, 9u, 10u}}) {
    const auto a = fill_random(rng, m * kk), b = fill_random(rng, kk * n), bt = fill_random(rng, n * kk);
    const auto at = fill_random(rng, kk * m);
    const auto c0 = fill_random(rng, m * n);
    for (double beta : {0.0, 1.0}) {
      auto c1 = c0, c2 = c0;
      simd->gemm_nn(m, n, kk, a.data(), b.data(), beta, c1.data());
      ref.gemm_nn(m, n, kk, a.data(), b.data(), beta, c2.data());
      check_close(c1, c2, 1e-13);
      c1 = c0;
      c2 = c0;
      simd->gemm_tn(m, n, kk, at.data(), b.data(), beta, c1.data());
      ref.gemm_tn(m, n, kk, at.data(), b.data(), beta, c2.data());
      check_close(c1, c2, 1e-13);
      c1 = c0;
      c2 = c0;
      simd->gemm_nt(m, n, kk, a.data(), bt.data(), beta, c1.data());
      ref.gemm_nt(m, n, kk, a.data(), bt.data(), beta, c2.data());
      check_close(c1, c2, 1e-13);
    }
  }
}

TEST_CASE("active table can be forced") {
  kernels::set_active(&kernels::scalar_kernels());
  CHECK(kernels::active().name == kernels::scalar_kernels().name);
  kernels::set_active(nullptr);
  const char* env = std::getenv("HYPFLOW_SIMD");
  if (env && std::string_view(env) == "scalar") CHECK(kernels::active().name == "scalar");
  else if (kernels::avx2_kernels()) CHECK(kernels::active().name == kernels::avx2_kernels()->name);
}

TEST_CASE("rng streams") {
  Rng a(5), b(5);
  for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());
  Rng c(8);
  double mean = 0.0, var = 0.0;
  const int N = 20000;
  for (int i = 0; i < N; ++i) {
    const double z = c.normal();
    mean += z;
    var += z * z;
  }
  mean /= N;
  var = var / N - mean * mean;
  CHECK(std::abs(mean) < 0.03);
  CHECK(std::abs(var - 1.0) < 0.05);
  for (int i = 0; i < 1000; ++i) {
    const double u = c.uniform();
    CHECK((u >= 0.0 && u < 1.0));
    CHECK(c.below(7) < 7);
  }
  std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7};
  std::vector<int> w = v;
  Rng s1(3), s2(3);
  shuffle(v.begin(), v.end(), s1);
  shuffle(w.begin(), w.end(), s2);
  CHECK(v == w);
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7});
}
