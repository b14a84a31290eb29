// Copyright 2026 The bitro Authors
// SPDX-License-Identifier: Apache-2.0

#include <atomic>
#include <cstdlib>
#include <string>

#include "bitro/error.hpp"
#include "variants.hpp"

namespace bitro::simd {

std::string_view isa_name(Isa isa) {
    switch (isa) {
        case Isa::scalar: return "scalar";
        case Isa::avx2: return "avx2";
        case Isa::neon: return "neon";
    }
    return "unknown";
}

bool supported(Isa isa) {
    switch (isa) {
        case Isa::scalar:
            return true;
        case Isa::avx2:
#if defined(BITRO_HAVE_AVX2)
            return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
            return false;
#endif
        case Isa::neon:
#if defined(BITRO_HAVE_NEON)
            return true;
#else
            return false;
#endif
    }
    return false;
}

const Kernels& kernels(Isa isa) {
    if (!supported(isa))
        throw ConfigError("SIMD variant '" + std::string(isa_name(isa)) +
                          "' is not available on this machine");
    switch (isa) {
#if defined(BITRO_HAVE_AVX2)
        case Isa::avx2: return detail::avx2_kernels;
#endif
#if defined(BITRO_HAVE_NEON)
        case Isa::neon: return detail::neon_kernels;
#endif
        default: return detail::scalar_kernels;
    }
}

Isa best_available() {
    if (supported(Isa::avx2)) return Isa::avx2;
    if (supported(Isa::neon)) return Isa::neon;
    return Isa::scalar;
}

namespace {

std::atomic<const Kernels*> g_active{nullptr};

const Kernels* resolve_from_env() {
    const char* env = std::getenv("BITRO_SIMD");
    if (env != nullptr) {
        const std::string v(env);
        if (v == "scalar") return &kernels(Isa::scalar);
        if (v == "avx2") return &kernels(Isa::avx2);
        if (v == "neon") return &kernels(Isa::neon);
        if (v != "auto" && !v.empty())
            throw ConfigError("BITRO_SIMD must be one of scalar|avx2|neon|auto, got '" + v + "'");
    }
    return &kernels(best_available());
}

}  // namespace

const Kernels& active() {
    const Kernels* k = g_active.load(std::memory_order_acquire);
    if (k == nullptr) {
        k = resolve_from_env();
        g_active.store(k, std::memory_order_release);
    }
    return *k;
}

void set_active(Isa isa) { g_active.store(&kernels(isa), std::memory_order_release); }

}  // namespace bitro::simd
