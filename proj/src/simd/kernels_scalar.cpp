#include "stancegen/simd/kernels.hpp"

namespace stancegen::simd {
namespace {

template <typename Real>
Real dot(const Real* a, const Real* b, std::size_t n) {
  Real s = 0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

template <typename Real>
void axpy(Real alpha, const Real* x, Real* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename Real>
void add(const Real* a, const Real* b, Real* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

template <typename Real>
void sub(const Real* a, const Real* b, Real* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

template <typename Real>
void mul(const Real* a, const Real* b, Real* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

template <typename Real>
void mul_acc(const Real* a, const Real* b, Real* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a[i] * b[i];
}

template <typename Real>
void scale(Real alpha, const Real* x, Real* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = alpha * x[i];
}

template <typename Real>
void acc(const Real* x, Real* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += x[i];
}

template <typename Real>
constexpr KernelTable<Real> kTable{Isa::Scalar,  &dot<Real>, &axpy<Real>,
                                   &add<Real>,   &sub<Real>, &mul<Real>,
                                   &mul_acc<Real>, &scale<Real>, &acc<Real>};

}  // namespace

template <>
const KernelTable<float>& scalar_kernels<float>() {
  return kTable<float>;
}
template <>
const KernelTable<double>& scalar_kernels<double>() {
  return kTable<double>;
}

}  // namespace stancegen::simd
