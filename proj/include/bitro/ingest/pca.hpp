// Copyright 2026 The bitro Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>

#include "bitro/numerics/tensor.hpp"

namespace bitro::ingest {

inline constexpr std::size_t kDefaultFeatureWidth = 1024;
inline constexpr std::size_t kDefaultModelWidth = 128;

struct PcaModel {
    Tensor mean;                // F
    Tensor components;          // d x F, orthonormal rows
    Tensor explained_variance;  // d, descending
    double total_variance = 0.0;

    std::size_t in_width() const { return mean.size(); }
    std::size_t out_width() const { return components.rows(); }
};

/// Top-d eigenvectors of the population covariance. Each component's largest
/// absolute entry is made positive. ContractError if d >= F or d >= N.
PcaModel fit_pca(const Tensor& features, std::size_t d);
Tensor apply_pca(const PcaModel& model, const Tensor& features);

}  // namespace bitro::ingest
