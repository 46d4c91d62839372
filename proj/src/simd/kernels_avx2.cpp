// Compiled with -mavx2 -mfma; only reached after a CPUID check.
#include <immintrin.h>

#include "sptok/simd/kernels.hpp"

namespace sptok::simd {
namespace {

inline float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  __m128 shuf = _mm_movehdup_ps(lo);
  __m128 sums = _mm_add_ps(lo, shuf);
  shuf = _mm_movehl_ps(shuf, sums);
  sums = _mm_add_ss(sums, shuf);
  return _mm_cvtss_f32(sums);
}

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d high64 = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, high64));
}

// Thin traits so float and double share one kernel body.
template <typename T>
struct Vec;

template <>
struct Vec<float> {
  using reg = __m256;
  static constexpr std::size_t kWidth = 8;
  static reg zero() { return _mm256_setzero_ps(); }
  static reg load(const float* p) { return _mm256_loadu_ps(p); }
  static void store(float* p, reg v) { _mm256_storeu_ps(p, v); }
  static reg set1(float x) { return _mm256_set1_ps(x); }
  static reg fmadd(reg a, reg b, reg c) { return _mm256_fmadd_ps(a, b, c); }
  static reg add(reg a, reg b) { return _mm256_add_ps(a, b); }
  static reg sub(reg a, reg b) { return _mm256_sub_ps(a, b); }
  static float sum(reg v) { return hsum(v); }
};

template <>
struct Vec<double> {
  using reg = __m256d;
  static constexpr std::size_t kWidth = 4;
  static reg zero() { return _mm256_setzero_pd(); }
  static reg load(const double* p) { return _mm256_loadu_pd(p); }
  static void store(double* p, reg v) { _mm256_storeu_pd(p, v); }
  static reg set1(double x) { return _mm256_set1_pd(x); }
  static reg fmadd(reg a, reg b, reg c) { return _mm256_fmadd_pd(a, b, c); }
  static reg add(reg a, reg b) { return _mm256_add_pd(a, b); }
  static reg sub(reg a, reg b) { return _mm256_sub_pd(a, b); }
  static double sum(reg v) { return hsum(v); }
};

template <typename T>
T dot_avx2(const T* a, const T* b, std::size_t n) {
  using V = Vec<T>;
  constexpr std::size_t W = V::kWidth;
  auto acc0 = V::zero();
  auto acc1 = V::zero();
  std::size_t i = 0;
  for (; i + 2 * W <= n; i += 2 * W) {
    acc0 = V::fmadd(V::load(a + i), V::load(b + i), acc0);
    acc1 = V::fmadd(V::load(a + i + W), V::load(b + i + W), acc1);
  }
  for (; i + W <= n; i += W) acc0 = V::fmadd(V::load(a + i), V::load(b + i), acc0);
  T acc = V::sum(V::add(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

template <typename T>
void axpy_avx2(T alpha, const T* x, T* y, std::size_t n) {
  using V = Vec<T>;
  constexpr std::size_t W = V::kWidth;
  const auto va = V::set1(alpha);
  std::size_t i = 0;
  for (; i + W <= n; i += W) V::store(y + i, V::fmadd(va, V::load(x + i), V::load(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
T sq_dist_avx2(const T* a, const T* b, std::size_t n) {
  using V = Vec<T>;
  constexpr std::size_t W = V::kWidth;
  auto acc = V::zero();
  std::size_t i = 0;
  for (; i + W <= n; i += W) {
    const auto d = V::sub(V::load(a + i), V::load(b + i));
    acc = V::fmadd(d, d, acc);
  }
  T total = V::sum(acc);
  for (; i < n; ++i) {
    const T d = a[i] - b[i];
    total += d * d;
  }
  return total;
}

// Register-blocked over four vector columns; the inner dimension is always
// walked in ascending order so per-element accumulation order is fixed.
template <typename T>
void gemm_nn_avx2(std::size_t n, std::size_t k, std::size_t m, const T* a, const T* b, T* c) {
  using V = Vec<T>;
  constexpr std::size_t W = V::kWidth;
  for (std::size_t i = 0; i < n; ++i) {
    const T* a_row = a + i * k;
    T* c_row = c + i * m;
    std::size_t j = 0;
    for (; j + 4 * W <= m; j += 4 * W) {
      auto c0 = V::load(c_row + j);
      auto c1 = V::load(c_row + j + W);
      auto c2 = V::load(c_row + j + 2 * W);
      auto c3 = V::load(c_row + j + 3 * W);
      for (std::size_t p = 0; p < k; ++p) {
        const auto av = V::set1(a_row[p]);
        const T* b_row = b + p * m + j;
        c0 = V::fmadd(av, V::load(b_row), c0);
        c1 = V::fmadd(av, V::load(b_row + W), c1);
        c2 = V::fmadd(av, V::load(b_row + 2 * W), c2);
        c3 = V::fmadd(av, V::load(b_row + 3 * W), c3);
      }
      V::store(c_row + j, c0);
      V::store(c_row + j + W, c1);
      V::store(c_row + j + 2 * W, c2);
      V::store(c_row + j + 3 * W, c3);
    }
    for (; j + W <= m; j += W) {
      auto c0 = V::load(c_row + j);
      for (std::size_t p = 0; p < k; ++p) c0 = V::fmadd(V::set1(a_row[p]), V::load(b + p * m + j), c0);
      V::store(c_row + j, c0);
    }
    for (; j < m; ++j) {
      T acc = c_row[j];
      for (std::size_t p = 0; p < k; ++p) acc += a_row[p] * b[p * m + j];
      c_row[j] = acc;
    }
  }
}

template <typename T>
void gemm_nt_avx2(std::size_t n, std::size_t k, std::size_t m, const T* a, const T* b, T* c) {
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) c[i * m + j] += dot_avx2(a + i * k, b + j * k, k);
  }
}

template <typename T>
void gemm_tn_avx2(std::size_t n, std::size_t k, std::size_t m, const T* a, const T* b, T* c) {
  for (std::size_t i = 0; i < n; ++i) {
    const T* b_row = b + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const T a_ip = a[i * k + p];
      if (a_ip != T(0)) axpy_avx2(a_ip, b_row, c + p * m, m);
    }
  }
}

}  // namespace

template <typename T>
const KernelTable<T>& avx2_kernels() {
  static const KernelTable<T> table{&dot_avx2<T>,     &axpy_avx2<T>,    &sq_dist_avx2<T>,
                                    &gemm_nn_avx2<T>, &gemm_nt_avx2<T>, &gemm_tn_avx2<T>};
  return table;
}

template const KernelTable<float>& avx2_kernels<float>();
template const KernelTable<double>& avx2_kernels<double>();

}  // namespace sptok::simd
