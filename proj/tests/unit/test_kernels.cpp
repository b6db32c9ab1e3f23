#include <doctest.h>

#include <cmath>
#include <vector>

#include "conformer/kernels.hpp"
#include "conformer/params.hpp"

using namespace conformer;

namespace {

std::vector<const kernels::KernelTable*> vector_tables() {
  std::vector<const kernels::KernelTable*> out;
  if (const auto* t = kernels::avx2_table()) out.push_back(t);
  if (const auto* t = kernels::neon_table()) out.push_back(t);
  return out;
}

std::vector<double> random_vec(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-2, 2);
  return v;
}

// Reassociated sums of k terms of magnitude <= 4 differ by a few ulps of the total.
double tolerance(std::size_t k) { return 1e-13 * static_cast<double>(k + 1); }

}  // namespace

TEST_SUITE("kernels") {
  TEST_CASE("scalar reference matches naive loops") {
    Rng rng(11);
    const std::size_t m = 3, n = 5, k = 4;
    const auto a = random_vec(m * k, rng);
    const auto b = random_vec(k * n, rng);
    std::vector<double> c(m * n, 0.5);
    kernels::scalar_table().gemm_nn(m, n, k, a.data(), b.data(), c.data());
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double ref = 0.5;
        for (std::size_t p = 0; p < k; ++p) ref += a[i * k + p] * b[p * n + j];
        CHECK(c[i * n + j] == doctest::Approx(ref).epsilon(1e-14));
      }
  }

  TEST_CASE("active table is one of the compiled variants") {
    const auto name = kernels::active().name;
    CHECK((name == "scalar" || name == "avx2" || name == "neon"));
  }

  TEST_CASE("vector variants agree with the scalar reference") {
    const auto& ref = kernels::scalar_table();
    const auto tables = vector_tables();
    if (tables.empty()) MESSAGE("no SIMD variant available on this machine; equivalence vacuous");
    Rng rng(12);
    for (const auto* t : tables) {
      CAPTURE(t->name);
      for (std::size_t n : {0, 1, 2, 3, 4, 5, 7, 8, 9, 15, 16, 17, 31, 64, 100}) {
        const auto a = random_vec(n, rng);
        const auto b = random_vec(n, rng);
        CHECK(std::abs(t->dot(a.data(), b.data(), n) - ref.dot(a.data(), b.data(), n)) <= tolerance(n));
        auto y1 = random_vec(n, rng);
        auto y2 = y1;
        t->axpy(0.37, a.data(), y1.data(), n);
        ref.axpy(0.37, a.data(), y2.data(), n);
        for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(y1[i] - y2[i]) <= 1e-15);
      }
      for (int trial = 0; trial < 60; ++trial) {
        const std::size_t m = 1 + rng.below(13), n = 1 + rng.below(13), k = 1 + rng.below(13);
        const auto a = random_vec(m * k, rng);
        const auto at = random_vec(k * m, rng);
        const auto b = random_vec(k * n, rng);
        const auto bt = random_vec(n * k, rng);
        const auto c0 = random_vec(m * n, rng);
        auto check_same = [&](auto fn, const double* lhs, const double* rhs) {
          auto c1 = c0;
          auto c2 = c0;
          (t->*fn)(m, n, k, lhs, rhs, c1.data());
          (ref.*fn)(m, n, k, lhs, rhs, c2.data());
          for (std::size_t i = 0; i < m * n; ++i) CHECK(std::abs(c1[i] - c2[i]) <= tolerance(k));
        };
        check_same(&kernels::KernelTable::gemm_nn, a.data(), b.data());
        check_same(&kernels::KernelTable::gemm_nt, a.data(), bt.data());
        check_same(&kernels::KernelTable::gemm_tn, at.data(), b.data());
      }
    }
  }

  TEST_CASE("gemm accumulates rather than overwrites") {
    const auto& t = kernels::active();
    const std::vector<double> a{1, 2};
    const std::vector<double> b{3, 4};
    std::vector<double> c{10};
    t.gemm_nn(1, 1, 2, a.data(), b.data(), c.data());
    CHECK(c[0] == 21.0);
  }
}
