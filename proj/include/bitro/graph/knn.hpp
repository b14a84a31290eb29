// Copyright 2026 The bitro Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "bitro/numerics/tensor.hpp"

namespace bitro::graph {

/// k-nearest-neighbour graph over 2-D points. Each node lists its nearest
/// other nodes, closest first (ties by lower index). The self-loop is not
/// stored; attention adds it at the use site.
struct SpatialGraph {
    std::size_t n = 0;
    std::vector<std::vector<std::size_t>> neighbors;
};

/// Above this many points the exact search switches from brute force to a
/// uniform grid.
inline constexpr std::size_t kBruteForceLimit = 20000;

/// Exact kNN by Euclidean distance. Each list has min(k, n-1) entries.
/// Throws GraphError if fewer than two points or k == 0.
SpatialGraph build_knn_graph(const Tensor& coords, std::size_t k);

/// Same contract, forcing one search strategy (exposed for equivalence tests).
SpatialGraph build_knn_graph_brute(const Tensor& coords, std::size_t k);
SpatialGraph build_knn_graph_grid(const Tensor& coords, std::size_t k);

/// Union of per-patch kNN graphs: edges never cross patch boundaries. A
/// patch holding a single node leaves that node with only its self-loop.
SpatialGraph build_patch_graph(const Tensor& coords, std::span<const std::size_t> patch_of, std::size_t k);

}  // namespace bitro::graph
