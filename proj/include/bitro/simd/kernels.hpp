// Copyright 2026 The bitro Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Inner-loop kernels over contiguous double arrays.
//
// Every kernel has a scalar reference implementation and, where the target
// supports it, an AVX2+FMA (x86-64) or NEON (aarch64) variant. The variant is
// chosen once at runtime from the CPU's capabilities; BITRO_SIMD=scalar|avx2|neon
// overrides the choice. Variants agree with the reference to rounding (the
// vector paths use a different summation order), and each variant is itself
// deterministic.

#include <cstddef>
#include <span>
#include <string_view>

namespace bitro::simd {

enum class Isa { scalar, avx2, neon };

std::string_view isa_name(Isa isa);

struct Kernels {
    Isa isa;
    /// sum_i a[i] * b[i]
    double (*dot)(const double* a, const double* b, std::size_t n);
    /// y[i] += alpha * x[i]
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
    /// sum_i (a[i] - b[i])^2
    double (*sq_dist)(const double* a, const double* b, std::size_t n);
    /// sum_i x[i]
    double (*sum)(const double* x, std::size_t n);
    /// out[i] = a[i] * b[i]
    void (*mul)(const double* a, const double* b, double* out, std::size_t n);
};

/// True if the variant was compiled in and the running CPU can execute it.
bool supported(Isa isa);

/// Kernel table for a specific variant; throws ConfigError when unsupported.
const Kernels& kernels(Isa isa);

/// Best supported variant on this machine.
Isa best_available();

/// Table used by the library. Resolved on first call.
const Kernels& active();

/// Force the active variant (tests and benchmarking).
void set_active(Isa isa);

// Row-major matrix products, accumulating into C.
//   gemm_nn: C[m x n] += A[m x k] * B[k x n]
//   gemm_nt: C[m x n] += A[m x k] * B[n x k]^T
//   gemm_tn: C[k x n] += A[m x k]^T * B[m x n]
void gemm_nn(const Kernels& kr, std::size_t m, std::size_t k, std::size_t n,
             const double* a, const double* b, double* c);
void gemm_nt(const Kernels& kr, std::size_t m, std::size_t k, std::size_t n,
             const double* a, const double* b, double* c);
void gemm_tn(const Kernels& kr, std::size_t m, std::size_t k, std::size_t n,
             const double* a, const double* b, double* c);

inline double dot(std::span<const double> a, std::span<const double> b) {
    return active().dot(a.data(), b.data(), a.size());
}

inline double sq_dist(std::span<const double> a, std::span<const double> b) {
    return active().sq_dist(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    active().axpy(alpha, x.data(), y.data(), x.size());
}

}  // namespace bitro::simd
