// Copyright 2026 The bitro Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <limits>

#include "bitro/cluster/kmeans.hpp"
#include "bitro/error.hpp"
#include "doctest.h"
#include "fd_check.hpp"

using namespace bitro;
using testing::random_tensor;

namespace {

// Eq.-style objective evaluated directly from its definition.
double j_ref(const Tensor& h, const std::vector<std::size_t>& labels, std::size_t k) {
    double j = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
        std::vector<std::size_t> rows;
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == c) rows.push_back(i);
        if (rows.empty()) continue;
        std::vector<double> mean(h.cols(), 0.0);
        for (std::size_t i : rows)
            for (std::size_t d = 0; d < h.cols(); ++d) mean[d] += h(i, d) / static_cast<double>(rows.size());
        double s = 0.0;
        for (std::size_t i : rows)
            for (std::size_t d = 0; d < h.cols(); ++d) s += (h(i, d) - mean[d]) * (h(i, d) - mean[d]);
        j += s / static_cast<double>(rows.size());
    }
    return j;
}

Tensor blobs(std::size_t n, std::size_t d, std::size_t centers, Rng& rng) {
    Tensor c = random_tensor({centers, d}, rng, 5.0);
    Tensor h(Shape{n, d});
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t k = rng.below(centers);
        for (std::size_t j = 0; j < d; ++j) h(i, j) = c(k, j) + rng.normal();
    }
    return h;
}

}  // namespace

TEST_CASE("four-point example reaches J = 0.5") {
    const Tensor h = Tensor::from({{0, 0}, {0, 1}, {10, 10}, {10, 11}});
    // exhaustive enumeration over all 2-cluster splits
    double best = std::numeric_limits<double>::infinity();
    for (unsigned mask = 1; mask < 15; ++mask) {
        std::vector<std::size_t> l(4);
        for (std::size_t i = 0; i < 4; ++i) l[i] = (mask >> i) & 1u;
        best = std::min(best, j_ref(h, l, 2));
    }
    CHECK(best == 0.5);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto m = cluster::kmeans_fit(h, {2, seed, 100});
        CHECK(m.history.back() == 0.5);
        CHECK(m.labels[0] == m.labels[1]);
        CHECK(m.labels[2] == m.labels[3]);
        CHECK(m.labels[0] != m.labels[2]);
    }
}

TEST_CASE("k = N gives zero objective; N < k is an error") {
    Rng rng(1);
    const Tensor h = random_tensor({5, 3}, rng);
    CHECK(cluster::kmeans_fit(h, {5, 3, 100}).history.back() == 0.0);
    CHECK_THROWS_AS(cluster::kmeans_fit(h, {6, 3, 100}), ContractError);
}

TEST_CASE("objective is monotone over 100 seeded runs and matches the definition") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(seed);
        const std::size_t k = 2 + rng.below(7);
        const Tensor h = blobs(40 + rng.below(200), 2 + rng.below(6), 1 + rng.below(8), rng);
        const auto m = cluster::kmeans_fit(h, {k, seed, 100});
        CAPTURE(seed);
        for (std::size_t i = 1; i < m.history.size(); ++i) CHECK(m.history[i] <= m.history[i - 1]);
        CHECK(std::fabs(m.history.back() - j_ref(h, m.labels, k)) < 1e-9 * (1.0 + m.history.back()));
        CHECK(cluster::objective(h, m.labels, k) == doctest::Approx(m.history.back()).epsilon(1e-12));
    }
}

TEST_CASE("same seed gives bit-identical centroids") {
    Rng rng(9);
    const Tensor h = blobs(300, 5, 6, rng);
    auto a = cluster::kmeans_fit(h, {8, 42, 100}), b = cluster::kmeans_fit(h, {8, 42, 100});
    CHECK(a.centroids == b.centroids);
    CHECK(a.labels == b.labels);
}

TEST_CASE("assign examples and brute-force oracle") {
    const Tensor c = Tensor::from({{0, 0}, {2, 0}});
    auto l = cluster::assign(c, Tensor::from({{2, 0}, {1, 0}, {-1, 3}}));
    CHECK(l == std::vector<std::size_t>{1, 0, 0});
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const Tensor cc = random_tensor({5, 3}, rng), h = random_tensor({20, 3}, rng);
        const auto got = cluster::assign(cc, h);
        for (std::size_t i = 0; i < 20; ++i) {
            std::size_t best = 0;
            double bd = std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < 5; ++k) {
                double d = 0.0;
                for (std::size_t j = 0; j < 3; ++j) d += (h(i, j) - cc(k, j)) * (h(i, j) - cc(k, j));
                if (d < bd) {
                    bd = d;
                    best = k;
                }
            }
            CHECK(got[i] == best);
        }
    }
}

TEST_CASE("cluster loss examples") {
    ad::Tape t(false);
    const std::vector<std::size_t> one{0, 0, 0};
    CHECK(cluster::cluster_loss(t.constant(Tensor(Shape{3, 2}, 1.5)), one).value().item() == 0.0);
    const std::vector<std::size_t> two{0, 0};
    CHECK(cluster::cluster_loss(t.constant(Tensor::from({{0}, {2}})), two).value().item() == 1.0);
    const std::vector<std::size_t> singles{0, 1, 2};
    CHECK(cluster::cluster_loss(t.constant(Tensor::from({{0}, {5}, {9}})), singles).value().item() == 0.0);
}

TEST_CASE("cluster loss is non-negative and its gradient flows through the means") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(seed + 3000);
        const std::size_t n = 2 + rng.below(5), g = 1 + rng.below(3);
        std::vector<std::size_t> labels(n);
        for (auto& l : labels) l = rng.below(3);
        testing::LossFn f = [&](ad::Tape&, const std::vector<ad::Var>& v) {
            return cluster::cluster_loss(v[0], labels);
        };
        const Tensor y = random_tensor({n, g}, rng);
        ad::Tape t(false);
        CHECK(cluster::cluster_loss(t.constant(y), labels).value().item() >= 0.0);
        CAPTURE(seed);
        CHECK(testing::fd_max_rel_error(f, {y}) < 1e-4);
    }
}
