// Copyright 2026 The bitro Authors
// SPDX-License-Identifier: Apache-2.0

// Reference kernels. Plain left-to-right loops; these define the semantics
// the vector variants are tested against.

#include "variants.hpp"

namespace bitro::simd::detail {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

double sq_dist_scalar(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

double sum_scalar(const double* x, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i];
    return s;
}

void mul_scalar(const double* a, const double* b, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

}  // namespace

const Kernels scalar_kernels{Isa::scalar, dot_scalar, axpy_scalar, sq_dist_scalar, sum_scalar,
                             mul_scalar};

}  // namespace bitro::simd::detail
