#include <cstdlib>
#include <string>

#include "kernels_internal.hpp"
#include "stancegen/simd/kernels.hpp"

namespace stancegen::simd {
namespace {

bool cpu_has_avx2() {
#if defined(STANCEGEN_HAVE_AVX2) && (defined(__x86_64__) || defined(__i386__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa choose_isa() {
  const char* env = std::getenv("STANCEGEN_SIMD");
  const std::string want = env ? env : "auto";
  if (want == "scalar") return Isa::Scalar;
  return cpu_has_avx2() ? Isa::Avx2 : Isa::Scalar;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::Scalar: return "scalar";
    case Isa::Avx2: return "avx2";
  }
  return "unknown";
}

Isa active_isa() {
  static const Isa isa = choose_isa();
  return isa;
}

template <>
const KernelTable<float>* avx2_kernels<float>() {
#ifdef STANCEGEN_HAVE_AVX2
  if (cpu_has_avx2()) return &avx2::table_float();
#endif
  return nullptr;
}

template <>
const KernelTable<double>* avx2_kernels<double>() {
#ifdef STANCEGEN_HAVE_AVX2
  if (cpu_has_avx2()) return &avx2::table_double();
#endif
  return nullptr;
}

template <typename Real>
const KernelTable<Real>& active_kernels() {
  static const KernelTable<Real>& table = [] () -> const KernelTable<Real>& {
    if (active_isa() == Isa::Avx2) {
      if (const auto* t = avx2_kernels<Real>()) return *t;
    }
    return scalar_kernels<Real>();
  }();
  return table;
}

template const KernelTable<float>& active_kernels<float>();
template const KernelTable<double>& active_kernels<double>();

}  // namespace stancegen::simd
