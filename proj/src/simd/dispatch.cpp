#include <atomic>
#include <cstdlib>
#include <cstring>

#include "sptok/error.hpp"
#include "sptok/simd/kernels.hpp"

namespace sptok::simd {
namespace {

bool cpu_has_avx2() {
#if defined(SPTOK_HAVE_AVX2) && (defined(__x86_64__) || defined(__i386__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa initial_isa() {
  const Isa best = detected_isa();
  if (const char* env = std::getenv("SPTOK_ISA")) {
    if (std::strcmp(env, "scalar") == 0) return Isa::kScalar;
  }
  return best;
}

std::atomic<int>& active_storage() {
  static std::atomic<int> value{static_cast<int>(initial_isa())};
  return value;
}

}  // namespace

std::string_view isa_name(Isa isa) { return isa == Isa::kAvx2 ? "avx2" : "scalar"; }

Isa detected_isa() {
  static const Isa isa = cpu_has_avx2() ? Isa::kAvx2 : Isa::kScalar;
  return isa;
}

Isa active_isa() { return static_cast<Isa>(active_storage().load(std::memory_order_relaxed)); }

void set_active_isa(Isa isa) {
  if (isa == Isa::kAvx2 && detected_isa() != Isa::kAvx2) {
    fail(ErrorCode::kInvalidArgument, "AVX2 kernels are not available on this CPU/build");
  }
  active_storage().store(static_cast<int>(isa));
}

template <typename T>
const KernelTable<T>& kernels_for(Isa isa) {
#if defined(SPTOK_HAVE_AVX2)
  if (isa == Isa::kAvx2) return avx2_kernels<T>();
#else
  (void)isa;
#endif
  return scalar_kernels<T>();
}

template const KernelTable<float>& kernels_for<float>(Isa);
template const KernelTable<double>& kernels_for<double>(Isa);

}  // namespace sptok::simd
