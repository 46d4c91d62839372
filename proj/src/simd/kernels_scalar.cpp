#include "sptok/simd/kernels.hpp"

namespace sptok::simd {
namespace {

template <typename T>
T dot_scalar(const T* a, const T* b, std::size_t n) {
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

template <typename T>
void axpy_scalar(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
T sq_dist_scalar(const T* a, const T* b, std::size_t n) {
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const T d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

template <typename T>
void gemm_nn_scalar(std::size_t n, std::size_t k, std::size_t m, const T* a, const T* b, T* c) {
  for (std::size_t i = 0; i < n; ++i) {
    T* c_row = c + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const T a_ip = a[i * k + p];
      const T* b_row = b + p * m;
      for (std::size_t j = 0; j < m; ++j) c_row[j] += a_ip * b_row[j];
    }
  }
}

template <typename T>
void gemm_nt_scalar(std::size_t n, std::size_t k, std::size_t m, const T* a, const T* b, T* c) {
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) c[i * m + j] += dot_scalar(a + i * k, b + j * k, k);
  }
}

template <typename T>
void gemm_tn_scalar(std::size_t n, std::size_t k, std::size_t m, const T* a, const T* b, T* c) {
  for (std::size_t i = 0; i < n; ++i) {
    const T* b_row = b + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const T a_ip = a[i * k + p];
      T* c_row = c + p * m;
      for (std::size_t j = 0; j < m; ++j) c_row[j] += a_ip * b_row[j];
    }
  }
}

}  // namespace

template <typename T>
const KernelTable<T>& scalar_kernels() {
  static const KernelTable<T> table{&dot_scalar<T>,     &axpy_scalar<T>,    &sq_dist_scalar<T>,
                                    &gemm_nn_scalar<T>, &gemm_nt_scalar<T>, &gemm_tn_scalar<T>};
  return table;
}

template const KernelTable<float>& scalar_kernels<float>();
template const KernelTable<double>& scalar_kernels<double>();

}  // namespace sptok::simd
