// Copyright 2026 The bitro Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bitro/error.hpp"
#include "bitro/graph/gat.hpp"
#include "bitro/graph/knn.hpp"
#include "bitro/numerics/params.hpp"
#include "doctest.h"
#include "fd_check.hpp"

using namespace bitro;
using ad::Tape;
using ad::Var;
using graph::SpatialGraph;
using testing::random_tensor;

namespace {

// Exhaustive oracle: sort every other node by (distance, index).
std::vector<std::vector<std::size_t>> knn_oracle(const Tensor& c, std::size_t k) {
    const std::size_t n = c.rows();
    std::vector<std::vector<std::size_t>> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::pair<double, std::size_t>> d;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const double dx = c(i, 0) - c(j, 0), dy = c(i, 1) - c(j, 1);
            d.emplace_back(dx * dx + dy * dy, j);
        }
        std::sort(d.begin(), d.end());
        for (std::size_t r = 0; r < std::min(k, n - 1); ++r) out[i].push_back(d[r].second);
    }
    return out;
}

Tensor random_coords(std::size_t n, Rng& rng, double scale, bool integer) {
    Tensor c(Shape{n, 2});
    for (double& v : c.data()) v = integer ? std::floor(rng.uniform(0.0, scale)) : rng.uniform(0.0, scale);
    return c;
}

}  // namespace

TEST_CASE("knn examples") {
    const Tensor square = Tensor::from({{0, 0}, {1, 0}, {0, 1}, {1, 1}});
    auto g = graph::build_knn_graph(square, 1);
    CHECK(g.neighbors[0] == std::vector<std::size_t>{1});

    const Tensor line = Tensor::from({{0, 0}, {1, 0}, {2, 0}});
    auto gl = graph::build_knn_graph(line, 2);
    auto n1 = gl.neighbors[1];
    std::sort(n1.begin(), n1.end());
    CHECK(n1 == std::vector<std::size_t>{0, 2});

    CHECK_THROWS_AS(graph::build_knn_graph(Tensor::from({{0, 0}}), 1), GraphError);
    CHECK_THROWS_AS(graph::build_knn_graph(square, 0), GraphError);
    CHECK(graph::build_knn_graph(square, 8).neighbors[2].size() == 3);
}

TEST_CASE("brute force and grid buckets match the exhaustive oracle") {
    Rng rng(11);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t n = 2 + rng.below(300);
        const std::size_t k = 1 + rng.below(10);
        // integer coordinates force many distance ties
        const Tensor c = random_coords(n, rng, trial % 2 ? 20.0 : 1000.0, trial % 2 == 1);
        const auto want = knn_oracle(c, k);
        CHECK(graph::build_knn_graph_brute(c, k).neighbors == want);
        CHECK(graph::build_knn_graph_grid(c, k).neighbors == want);
    }
}

TEST_CASE("patch graphs never cross patch boundaries") {
    const Tensor c = Tensor::from({{0, 0}, {1, 0}, {100, 0}, {2, 0}, {101, 0}, {500, 500}});
    const std::vector<std::size_t> patch{0, 0, 1, 0, 1, 2};
    auto g = graph::build_patch_graph(c, patch, 8);
    auto n0 = g.neighbors[0];
    std::sort(n0.begin(), n0.end());
    CHECK(n0 == std::vector<std::size_t>{1, 3});
    CHECK(g.neighbors[2] == std::vector<std::size_t>{4});
    CHECK(g.neighbors[5].empty());
}

namespace {

graph::GatLayerParams random_layer(Tape& t, std::size_t din, std::size_t dout, std::size_t heads, Rng& rng) {
    graph::GatLayerParams p;
    for (std::size_t h = 0; h < heads; ++h) {
        p.w.push_back(t.constant(random_tensor({din, dout / heads}, rng, 0.5)));
        p.a.push_back(t.constant(random_tensor({2 * dout / heads}, rng, 0.5)));
    }
    p.out_proj = t.constant(random_tensor({dout, dout}, rng, 0.5));
    return p;
}

}  // namespace

TEST_CASE("gat layer hand example") {
    Tape t(false);
    graph::GatLayerParams p;
    p.w.push_back(t.constant(Tensor::from({{1, 0}, {0, 1}})));
    p.a.push_back(t.constant(Tensor::vector({0, 0, 0, 0})));
    p.out_proj = t.constant(Tensor::from({{1, 0}, {0, 1}}));
    const Tensor h = Tensor::from({{1, 1}, {2, 0}, {0, 2}});
    SpatialGraph g{3, {{1, 2}, {0, 2}, {0, 1}}};
    std::vector<graph::AttentionWeights> w;
    auto y = graph::gat_layer(t.constant(h), g, p, {}, &w);
    for (double a : w[0].alpha[0]) CHECK(a == doctest::Approx(1.0 / 3.0));
    CHECK(y.value()(0, 0) == 0.0);
    CHECK(y.value()(0, 1) == 0.0);
}

TEST_CASE("attention rows sum to one and encode composes layers") {
    Rng rng(4);
    Tape t(false);
    const Tensor coords = random_coords(12, rng, 10.0, false);
    auto g = graph::build_knn_graph(coords, 4);
    auto h = t.constant(random_tensor({12, 8}, rng));
    auto l0 = random_layer(t, 8, 8, 4, rng), l1 = random_layer(t, 8, 8, 4, rng);
    std::vector<graph::AttentionWeights> w;
    auto once = graph::gat_layer(h, g, l0, {}, &w);
    for (const auto& head : w)
        for (const auto& row : head.alpha) {
            CHECK(row.size() == 5);
            CHECK(std::fabs(std::accumulate(row.begin(), row.end(), 0.0) - 1.0) < 1e-9);
        }
    auto twice = graph::gat_layer(once, g, l1);
    CHECK(graph::gat_encode(h, g, {l0, l1}).value() == twice.value());
    CHECK(graph::gat_encode(h, g, {}).value() == h.value());
}

TEST_CASE("gat encode is permutation equivariant") {
    Rng rng(21);
    Tape t(false);
    const std::size_t n = 15;
    const Tensor coords = random_coords(n, rng, 10.0, false);
    const Tensor feats = random_tensor({n, 8}, rng);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    Tensor pc(Shape{n, 2}), pf(Shape{n, 8});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < 2; ++c) pc(i, c) = coords(perm[i], c);
        for (std::size_t c = 0; c < 8; ++c) pf(i, c) = feats(perm[i], c);
    }
    auto layers = std::vector{random_layer(t, 8, 8, 2, rng), random_layer(t, 8, 8, 2, rng)};
    auto y = graph::gat_encode(t.constant(feats), graph::build_knn_graph(coords, 4), layers).value();
    auto yp = graph::gat_encode(t.constant(pf), graph::build_knn_graph(pc, 4), layers).value();
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < 8; ++c) worst = std::max(worst, std::fabs(yp(i, c) - y(perm[i], c)));
    CHECK(worst < 1e-9);
}

TEST_CASE("gat layer gradients pass finite differences") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(seed + 1000);
        const std::size_t n = 3 + rng.below(4), heads = 2, d = 4;
        const Tensor coords = random_coords(n, rng, 5.0, false);
        const auto g = graph::build_knn_graph(coords, 3);
        const std::uint64_t proj_seed = seed;
        testing::LossFn f = [&](Tape&, const std::vector<Var>& v) {
            graph::GatLayerParams p;
            p.w = {v[1], v[2]};
            p.a = {v[3], v[4]};
            p.out_proj = v[5];
            Rng pr(proj_seed);
            return testing::project(graph::gat_layer(v[0], g, p), pr);
        };
        std::vector<Tensor> in{random_tensor({n, d}, rng),          random_tensor({d, d / heads}, rng),
                               random_tensor({d, d / heads}, rng),  random_tensor({d}, rng),
                               random_tensor({d}, rng),             random_tensor({d, d}, rng)};
        CAPTURE(seed);
        CHECK(testing::fd_max_rel_error(f, in) < 1e-4);
    }
}

TEST_CASE("gat shape errors") {
    Tape t(false);
    Rng rng(2);
    SpatialGraph g{3, {{1}, {0}, {1}}};
    auto wh = t.constant(random_tensor({4, 2}, rng));
    CHECK_THROWS_AS(graph::graph_attention(wh, t.constant(random_tensor({4}, rng)), g), DimensionError);
    auto wh3 = t.constant(random_tensor({3, 2}, rng));
    CHECK_THROWS_AS(graph::graph_attention(wh3, t.constant(random_tensor({3}, rng)), g), DimensionError);
}
