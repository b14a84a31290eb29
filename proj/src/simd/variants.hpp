// Copyright 2026 The bitro Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "bitro/simd/kernels.hpp"

namespace bitro::simd::detail {

extern const Kernels scalar_kernels;
#if defined(BITRO_HAVE_AVX2)
extern const Kernels avx2_kernels;
#endif
#if defined(BITRO_HAVE_NEON)
extern const Kernels neon_kernels;
#endif

}  // namespace bitro::simd::detail
