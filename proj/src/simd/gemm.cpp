// Copyright 2026 The bitro Authors
// SPDX-License-Identifier: Apache-2.0

#include "bitro/simd/kernels.hpp"

namespace bitro::simd {

void gemm_nn(const Kernels& kr, std::size_t m, std::size_t k, std::size_t n, const double* a,
             const double* b, double* c) {
    for (std::size_t i = 0; i < m; ++i) {
        double* ci = c + i * n;
        const double* ai = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            if (ai[p] != 0.0) kr.axpy(ai[p], b + p * n, ci, n);
        }
    }
}

void gemm_nt(const Kernels& kr, std::size_t m, std::size_t k, std::size_t n, const double* a,
             const double* b, double* c) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a + i * k;
        double* ci = c + i * n;
        for (std::size_t j = 0; j < n; ++j) ci[j] += kr.dot(ai, b + j * k, k);
    }
}

void gemm_tn(const Kernels& kr, std::size_t m, std::size_t k, std::size_t n, const double* a,
             const double* b, double* c) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a + i * k;
        const double* bi = b + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            if (ai[p] != 0.0) kr.axpy(ai[p], bi, c + p * n, n);
        }
    }
}

}  // namespace bitro::simd
