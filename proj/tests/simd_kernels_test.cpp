#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "sptok/simd/kernels.hpp"

namespace sptok::simd {
namespace {

template <typename T>
std::vector<T> random_vec(std::size_t n, std::mt19937& gen) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(dist(gen));
  return v;
}

template <typename T>
double tol() {
  return std::is_same_v<T, float> ? 2e-5 : 1e-12;
}

template <typename T>
class KernelEquivalence : public ::testing::Test {};

using ScalarTypes = ::testing::Types<float, double>;
TYPED_TEST_SUITE(KernelEquivalence, ScalarTypes);

// Sizes straddle every vector-width boundary and tail path.
const std::size_t kSizes[] = {1, 3, 4, 7, 8, 9, 15, 16, 17, 31, 32, 33, 64, 65, 127};

TYPED_TEST(KernelEquivalence, VectorKernelsMatchScalarReference) {
  using T = TypeParam;
  if (detected_isa() != Isa::kAvx2) GTEST_SKIP() << "no AVX2 on this host";
  std::mt19937 gen(7);
  const auto& ref = scalar_kernels<T>();
  const auto& fast = kernels_for<T>(Isa::kAvx2);
  for (std::size_t n : kSizes) {
    auto a = random_vec<T>(n, gen);
    auto b = random_vec<T>(n, gen);
    EXPECT_NEAR(ref.dot(a.data(), b.data(), n), fast.dot(a.data(), b.data(), n), tol<T>() * n) << n;
    EXPECT_NEAR(ref.sq_dist(a.data(), b.data(), n), fast.sq_dist(a.data(), b.data(), n), tol<T>() * n) << n;
    auto y_ref = b;
    auto y_fast = b;
    ref.axpy(T(0.37), a.data(), y_ref.data(), n);
    fast.axpy(T(0.37), a.data(), y_fast.data(), n);
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(y_ref[i], y_fast[i], tol<T>());
  }
}

TYPED_TEST(KernelEquivalence, GemmVariantsMatchScalarReference) {
  using T = TypeParam;
  if (detected_isa() != Isa::kAvx2) GTEST_SKIP() << "no AVX2 on this host";
  std::mt19937 gen(11);
  const auto& ref = scalar_kernels<T>();
  const auto& fast = kernels_for<T>(Isa::kAvx2);
  const std::size_t dims[][3] = {{1, 1, 1}, {3, 5, 7}, {4, 16, 32}, {5, 33, 65}, {17, 8, 40}, {2, 64, 96}};
  for (const auto& d : dims) {
    const std::size_t n = d[0], k = d[1], m = d[2];
    auto a = random_vec<T>(n * k, gen);
    auto b = random_vec<T>(k * m, gen);
    auto c0 = random_vec<T>(n * m, gen);
    auto c_ref = c0, c_fast = c0;
    ref.gemm_nn(n, k, m, a.data(), b.data(), c_ref.data());
    fast.gemm_nn(n, k, m, a.data(), b.data(), c_fast.data());
    for (std::size_t i = 0; i < n * m; ++i) ASSERT_NEAR(c_ref[i], c_fast[i], tol<T>() * k) << "nn";

    auto bt = random_vec<T>(m * k, gen);
    c_ref = c0;
    c_fast = c0;
    ref.gemm_nt(n, k, m, a.data(), bt.data(), c_ref.data());
    fast.gemm_nt(n, k, m, a.data(), bt.data(), c_fast.data());
    for (std::size_t i = 0; i < n * m; ++i) ASSERT_NEAR(c_ref[i], c_fast[i], tol<T>() * k) << "nt";

    auto b2 = random_vec<T>(n * m, gen);
    auto ck = random_vec<T>(k * m, gen);
    auto ck_ref = ck, ck_fast = ck;
    ref.gemm_tn(n, k, m, a.data(), b2.data(), ck_ref.data());
    fast.gemm_tn(n, k, m, a.data(), b2.data(), ck_fast.data());
    for (std::size_t i = 0; i < k * m; ++i) ASSERT_NEAR(ck_ref[i], ck_fast[i], tol<T>() * n) << "tn";
  }
}

TEST(KernelReference, GemmAgainstNaiveTripleLoop) {
  const std::size_t n = 3, k = 4, m = 5;
  std::vector<double> a(n * k), b(k * m), c(n * m, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = static_cast<double>(i) - 4.0;
  for (std::size_t i = 0; i < b.size(); ++i) b[i] = 0.5 * static_cast<double>(i % 7);
  scalar_kernels<double>().gemm_nn(n, k, m, a.data(), b.data(), c.data());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double expect = 0;
      for (std::size_t p = 0; p < k; ++p) expect += a[i * k + p] * b[p * m + j];
      EXPECT_DOUBLE_EQ(c[i * m + j], expect);
    }
  }
}

TEST(KernelDispatch, RowsAreComputedIndependently) {
  // Changing row 1 of A must not perturb row 0 of C, bit for bit.
  std::mt19937 gen(3);
  const std::size_t n = 2, k = 37, m = 41;
  auto a = random_vec<float>(n * k, gen);
  auto b = random_vec<float>(k * m, gen);
  std::vector<float> c1(n * m, 0.f), c2(n * m, 0.f);
  gemm_nn(n, k, m, a.data(), b.data(), c1.data());
  for (std::size_t p = 0; p < k; ++p) a[k + p] += 1.0f;
  gemm_nn(n, k, m, a.data(), b.data(), c2.data());
  for (std::size_t j = 0; j < m; ++j) EXPECT_EQ(c1[j], c2[j]);
}

TEST(KernelDispatch, ScalarCanBeForced) {
  const Isa before = active_isa();
  set_active_isa(Isa::kScalar);
  EXPECT_EQ(active_isa(), Isa::kScalar);
  set_active_isa(before);
  EXPECT_EQ(active_isa(), before);
}

}  // namespace
}  // namespace sptok::simd
