#pragma once

// Dense arithmetic kernels shared by every trainable module.
//
// Each kernel has a scalar reference implementation and, on x86-64, an
// AVX2/FMA variant. The variant is picked once per process from CPUID
// (override with SPTOK_ISA=scalar|avx2). Within one process the choice is
// fixed, so results are deterministic; the two variants agree to rounding
// (see tests/simd_kernels_test.cpp).
//
// Matrices are row-major. Every gemm accumulates into C and computes each
// output element as an ordered sum over the inner dimension, so row i of C
// depends on row i of the left operand only.

#include <cstddef>
#include <string_view>

namespace sptok::simd {

enum class Isa { kScalar, kAvx2 };

std::string_view isa_name(Isa isa);

// Best ISA supported by this CPU and build.
Isa detected_isa();
// ISA used by the free-function dispatchers below.
Isa active_isa();
// Test hook; throws Error(kInvalidArgument) if the ISA is unavailable.
void set_active_isa(Isa isa);

template <typename T>
struct KernelTable {
  // sum_i a[i] * b[i]
  T (*dot)(const T* a, const T* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(T alpha, const T* x, T* y, std::size_t n);
  // sum_i (a[i] - b[i])^2
  T (*sq_dist)(const T* a, const T* b, std::size_t n);
  // C[n x m] += A[n x k] * B[k x m]
  void (*gemm_nn)(std::size_t n, std::size_t k, std::size_t m, const T* a, const T* b, T* c);
  // C[n x m] += A[n x k] * B[m x k]^T
  void (*gemm_nt)(std::size_t n, std::size_t k, std::size_t m, const T* a, const T* b, T* c);
  // C[k x m] += A[n x k]^T * B[n x m]
  void (*gemm_tn)(std::size_t n, std::size_t k, std::size_t m, const T* a, const T* b, T* c);
};

template <typename T>
const KernelTable<T>& scalar_kernels();

#if defined(SPTOK_HAVE_AVX2)
template <typename T>
const KernelTable<T>& avx2_kernels();
#endif

template <typename T>
const KernelTable<T>& kernels_for(Isa isa);

template <typename T>
const KernelTable<T>& kernels() {
  return kernels_for<T>(active_isa());
}

template <typename T>
T dot(const T* a, const T* b, std::size_t n) {
  return kernels<T>().dot(a, b, n);
}
template <typename T>
void axpy(T alpha, const T* x, T* y, std::size_t n) {
  kernels<T>().axpy(alpha, x, y, n);
}
template <typename T>
T sq_dist(const T* a, const T* b, std::size_t n) {
  return kernels<T>().sq_dist(a, b, n);
}
template <typename T>
void gemm_nn(std::size_t n, std::size_t k, std::size_t m, const T* a, const T* b, T* c) {
  kernels<T>().gemm_nn(n, k, m, a, b, c);
}
template <typename T>
void gemm_nt(std::size_t n, std::size_t k, std::size_t m, const T* a, const T* b, T* c) {
  kernels<T>().gemm_nt(n, k, m, a, b, c);
}
template <typename T>
void gemm_tn(std::size_t n, std::size_t k, std::size_t m, const T* a, const T* b, T* c) {
  kernels<T>().gemm_tn(n, k, m, a, b, c);
}

}  // namespace sptok::simd
