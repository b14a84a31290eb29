// Copyright 2026 The bitro Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "bitro/numerics/ops.hpp"

namespace bitro::cluster {

inline constexpr std::size_t kDefaultClusters = 8;

struct KMeansOptions {
    std::size_t k = kDefaultClusters;
    std::uint64_t seed = 0;
    std::size_t max_iter = 100;
};

struct PhenotypeModel {
    Tensor centroids;             // K x D
    std::vector<std::size_t> labels;  // labels of the fitting data
    std::vector<double> history;  // objective after seeding and after every iteration
    std::size_t iterations = 0;
    bool converged = false;

    std::size_t k() const { return centroids.rows(); }
};

/// Size-normalised within-cluster scatter: J = sum_k (1/|S_k|) sum_{i in S_k} ||h_i - mean_k||^2.
/// Empty clusters contribute 0.
double objective(const Tensor& h, std::span<const std::size_t> labels, std::size_t k);

/// k-means++ seeding followed by Lloyd iterations on J. A Lloyd pass is kept
/// only if it lowers J without emptying a cluster; otherwise single-point
/// moves that lower J are applied instead, so J never increases. Stops when
/// no assignment changes or after max_iter passes.
PhenotypeModel kmeans_fit(const Tensor& h, const KMeansOptions& opt);

/// Nearest centroid per row, ties to the lower centroid index.
std::vector<std::size_t> assign(const Tensor& centroids, const Tensor& h);

/// sum over clusters with >= 2 members of (1/|S_k|) sum_i ||y_i - mean_k(y)||^2,
/// with the cluster means taken over the rows of `y_cell` itself.
ad::Var cluster_loss(ad::Var y_cell, std::span<const std::size_t> labels);

}  // namespace bitro::cluster
