#pragma once
// Dense inner-loop kernels used by the tensor engine.
//
// Every kernel has a scalar reference implementation. An AVX2+FMA variant is
// compiled on x86-64 and selected at runtime when the CPU supports it; the
// STANCEGEN_SIMD environment variable ("scalar", "avx2", "auto") overrides the
// choice. Results of the two variants agree up to floating-point
// reassociation; within one process the selection never changes, so runs are
// reproducible.

#include <cstddef>
#include <string_view>

namespace stancegen::simd {

enum class Isa { Scalar, Avx2 };

std::string_view isa_name(Isa isa);

template <typename Real>
struct KernelTable {
  Isa isa;
  // sum_i a[i] * b[i]
  Real (*dot)(const Real* a, const Real* b, std::size_t n);
  // y[i] += alpha * x[i]
  void (*axpy)(Real alpha, const Real* x, Real* y, std::size_t n);
  // out[i] = a[i] (+,-,*) b[i]
  void (*add)(const Real* a, const Real* b, Real* out, std::size_t n);
  void (*sub)(const Real* a, const Real* b, Real* out, std::size_t n);
  void (*mul)(const Real* a, const Real* b, Real* out, std::size_t n);
  // y[i] += a[i] * b[i]
  void (*mul_acc)(const Real* a, const Real* b, Real* y, std::size_t n);
  // out[i] = alpha * x[i]
  void (*scale)(Real alpha, const Real* x, Real* out, std::size_t n);
  // y[i] += x[i]
  void (*acc)(const Real* x, Real* y, std::size_t n);
};

template <typename Real>
const KernelTable<Real>& scalar_kernels();

// nullptr when the variant is not compiled in or the CPU lacks the features.
template <typename Real>
const KernelTable<Real>* avx2_kernels();

// The table chosen for this process (first call decides).
template <typename Real>
const KernelTable<Real>& active_kernels();

Isa active_isa();

// y = W[:, 0:cols] x, where W is row-major with leading dimension ld.
template <typename Real>
void gemv(const KernelTable<Real>& k, std::size_t rows, std::size_t cols,
          const Real* w, std::size_t ld, const Real* x, Real* y) {
  for (std::size_t r = 0; r < rows; ++r) y[r] = k.dot(w + r * ld, x, cols);
}

// out += W[:, 0:cols]^T g
template <typename Real>
void gemv_t_acc(const KernelTable<Real>& k, std::size_t rows, std::size_t cols,
                const Real* w, std::size_t ld, const Real* g, Real* out) {
  for (std::size_t r = 0; r < rows; ++r) {
    if (g[r] != Real(0)) k.axpy(g[r], w + r * ld, out, cols);
  }
}

// Wgrad[:, 0:cols] += g x^T
template <typename Real>
void ger_acc(const KernelTable<Real>& k, std::size_t rows, std::size_t cols,
             const Real* g, const Real* x, Real* wgrad, std::size_t ld) {
  for (std::size_t r = 0; r < rows; ++r) {
    if (g[r] != Real(0)) k.axpy(g[r], x, wgrad + r * ld, cols);
  }
}

}  // namespace stancegen::simd
