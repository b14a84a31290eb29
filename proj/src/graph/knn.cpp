// Copyright 2026 The bitro Authors
// SPDX-License-Identifier: Apache-2.0

#include "bitro/graph/knn.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <utility>

#include "bitro/error.hpp"

namespace bitro::graph {
namespace {

using Cand = std::pair<double, std::size_t>;  // (squared distance, index)

void check_input(const Tensor& coords, std::size_t k) {
    if (coords.rank() != 2 || coords.cols() != 2)
        throw GraphError("coordinates must be an N x 2 matrix, got " + shape_str(coords.shape()));
    if (coords.rows() < 2) throw GraphError("kNN graph needs at least 2 nodes, got " + std::to_string(coords.rows()));
    if (k == 0) throw GraphError("k must be at least 1");
}

inline double d2(const Tensor& c, std::size_t i, std::size_t j) {
    const double dx = c(i, 0) - c(j, 0);
    const double dy = c(i, 1) - c(j, 1);
    return dx * dx + dy * dy;
}

std::vector<std::size_t> take_k(std::vector<Cand>& cands, std::size_t k) {
    const std::size_t kk = std::min(k, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(kk), cands.end());
    std::vector<std::size_t> out(kk);
    for (std::size_t i = 0; i < kk; ++i) out[i] = cands[i].second;
    return out;
}

}  // namespace

SpatialGraph build_knn_graph_brute(const Tensor& coords, std::size_t k) {
    check_input(coords, k);
    const std::size_t n = coords.rows();
    SpatialGraph g{n, std::vector<std::vector<std::size_t>>(n)};
    std::vector<Cand> cands;
    cands.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        cands.clear();
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) cands.emplace_back(d2(coords, i, j), j);
        g.neighbors[i] = take_k(cands, k);
    }
    return g;
}

SpatialGraph build_knn_graph_grid(const Tensor& coords, std::size_t k) {
    check_input(coords, k);
    const std::size_t n = coords.rows();
    const std::size_t kk = std::min(k, n - 1);

    double x0 = coords(0, 0), x1 = x0, y0 = coords(0, 1), y1 = y0;
    for (std::size_t i = 1; i < n; ++i) {
        x0 = std::min(x0, coords(i, 0));
        x1 = std::max(x1, coords(i, 0));
        y0 = std::min(y0, coords(i, 1));
        y1 = std::max(y1, coords(i, 1));
    }
    const double area = std::max((x1 - x0) * (y1 - y0), 1e-12);
    // about k points per bucket
    double cell = std::sqrt(area * static_cast<double>(std::max<std::size_t>(kk, 1)) / static_cast<double>(n));
    if (!(cell > 0.0)) cell = 1.0;
    const auto nx = static_cast<long>(std::floor((x1 - x0) / cell)) + 1;
    const auto ny = static_cast<long>(std::floor((y1 - y0) / cell)) + 1;
    auto bx = [&](double x) { return std::clamp(static_cast<long>(std::floor((x - x0) / cell)), 0L, nx - 1); };
    auto by = [&](double y) { return std::clamp(static_cast<long>(std::floor((y - y0) / cell)), 0L, ny - 1); };

    std::map<std::pair<long, long>, std::vector<std::size_t>> buckets;
    for (std::size_t i = 0; i < n; ++i) buckets[{bx(coords(i, 0)), by(coords(i, 1))}].push_back(i);

    SpatialGraph g{n, std::vector<std::vector<std::size_t>>(n)};
    std::vector<Cand> cands;
    for (std::size_t i = 0; i < n; ++i) {
        cands.clear();
        const long cx = bx(coords(i, 0)), cy = by(coords(i, 1));
        const long max_ring = std::max(nx, ny);
        for (long r = 0; r <= max_ring; ++r) {
            for (long gx = cx - r; gx <= cx + r; ++gx) {
                for (long gy = cy - r; gy <= cy + r; ++gy) {
                    if (std::max(std::abs(gx - cx), std::abs(gy - cy)) != r) continue;
                    auto it = buckets.find({gx, gy});
                    if (it == buckets.end()) continue;
                    for (std::size_t j : it->second)
                        if (j != i) cands.emplace_back(d2(coords, i, j), j);
                }
            }
            if (cands.size() >= kk) {
                // Anything outside ring r is at least r*cell away.
                std::nth_element(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(kk - 1), cands.end());
                const double kth = cands[kk - 1].first;
                const double bound = static_cast<double>(r) * cell;
                if (kth < bound * bound) break;
            }
        }
        g.neighbors[i] = take_k(cands, kk);
    }
    return g;
}

SpatialGraph build_knn_graph(const Tensor& coords, std::size_t k) {
    return coords.rows() <= kBruteForceLimit ? build_knn_graph_brute(coords, k) : build_knn_graph_grid(coords, k);
}

SpatialGraph build_patch_graph(const Tensor& coords, std::span<const std::size_t> patch_of, std::size_t k) {
    if (coords.rows() != patch_of.size()) throw DimensionError("patch labels do not match coordinate rows");
    if (k == 0) throw GraphError("k must be at least 1");
    const std::size_t n = coords.rows();
    std::map<std::size_t, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < n; ++i) members[patch_of[i]].push_back(i);

    SpatialGraph g{n, std::vector<std::vector<std::size_t>>(n)};
    for (const auto& [patch, idx] : members) {
        if (idx.size() < 2) continue;
        Tensor sub(Shape{idx.size(), 2});
        for (std::size_t r = 0; r < idx.size(); ++r) {
            sub(r, 0) = coords(idx[r], 0);
            sub(r, 1) = coords(idx[r], 1);
        }
        const SpatialGraph local = build_knn_graph(sub, k);
        for (std::size_t r = 0; r < idx.size(); ++r) {
            auto& out = g.neighbors[idx[r]];
            out.reserve(local.neighbors[r].size());
            for (std::size_t j : local.neighbors[r]) out.push_back(idx[j]);
        }
    }
    return g;
}

}  // namespace bitro::graph
