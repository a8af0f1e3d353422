#pragma once

#include "stancegen/simd/kernels.hpp"

namespace stancegen::simd::avx2 {

const KernelTable<float>& table_float();
const KernelTable<double>& table_double();

}  // namespace stancegen::simd::avx2
