// Copyright 2026 The bitro Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <filesystem>
#include <set>

#include "bitro/error.hpp"
#include "bitro/eval/metrics.hpp"
#include "bitro/eval/protocol.hpp"
#include "bitro/ingest/tsv.hpp"
#include "bitro/rng.hpp"
#include "doctest.h"
#include "metric_oracles.hpp"

using namespace bitro;
using namespace bitro::eval;
using bitro::testing::js_oracle;
using bitro::testing::pearson_oracle;

using V = std::vector<double>;

TEST_CASE("pcc examples") {
    CHECK(pcc_overall(V{1, 2, 3}, V{2, 4, 6}) == doctest::Approx(1.0));
    CHECK(pcc_overall(V{1, 2, 3}, V{3, 2, 1}) == doctest::Approx(-1.0));
    CHECK(pcc_overall(V{1, 2, 3, 4}, V{1, 3, 2, 4}) == doctest::Approx(0.8).epsilon(1e-14));
    CHECK(std::isnan(pcc_overall(V{1, 1, 1}, V{1, 2, 3})));
    CHECK_THROWS_AS(pcc_overall(V{1}, V{1}), MetricError);
    CHECK_THROWS_AS(pcc_overall(V{1, 2}, V{1, 2, 3}), DimensionError);
}

TEST_CASE("pcc_gene examples") {
    Tensor y = Tensor::from({{1, 5, 2}, {2, 5, 0}, {4, 5, 1}});
    auto same = pcc_gene(y, y);
    CHECK(same[0] == doctest::Approx(1.0));
    CHECK(std::isnan(same[1]));
    CHECK(same[2] == doctest::Approx(1.0));
    auto st = summarize(same);
    CHECK(st.count == 2);
    CHECK(st.skipped == 1);
    CHECK(st.mean == doctest::Approx(1.0));
}

TEST_CASE("js examples") {
    CHECK(js_divergence(V{0.2, 0.8}, V{0.2, 0.8}) == 0.0);
    CHECK(js_divergence(V{1, 0}, V{0.5, 0.5}) == doctest::Approx(0.2158).epsilon(1e-4 / 0.2158));
    CHECK(js_divergence(V{1, 0}, V{0, 1}) == doctest::Approx(std::log(2.0)).epsilon(1e-9));
    CHECK(js_divergence(V{-3, 1}, V{0, 1}) == doctest::Approx(0.0).epsilon(1e-9));
    CHECK_THROWS_AS(js_divergence(V{0, 0}, V{1, 1}), MetricError);
}

TEST_CASE("metrics match brute-force oracles") {
    Rng rng(11);
    for (int c = 0; c < 1000; ++c) {
        const std::size_t g = 2 + rng.below(30), m = 2 + rng.below(6);
        V y(g), yh(g);
        for (std::size_t i = 0; i < g; ++i) {
            y[i] = rng.normal() * 3;
            yh[i] = y[i] * rng.uniform(-1, 1) + rng.normal();
        }
        CHECK(std::fabs(pcc_overall(y, yh) - pearson_oracle(y, yh)) < 1e-10);
        const double a = rng.uniform(0.01, 100), b = rng.normal() * 10;
        V aff(g);
        for (std::size_t i = 0; i < g; ++i) aff[i] = a * yh[i] + b;
        CHECK(std::fabs(pcc_overall(y, aff) - pcc_overall(y, yh)) < 1e-12);

        V p(g), q(g);
        for (std::size_t i = 0; i < g; ++i) {
            p[i] = rng.uniform() < 0.2 ? 0.0 : rng.uniform(0, 5);
            q[i] = rng.uniform(-0.5, 5);
        }
        p[0] = 1.0;
        q[1] = 1.0;
        const double js = js_divergence(p, q);
        CHECK(std::fabs(js - js_oracle(p, q)) < 1e-10);
        CHECK(js == js_divergence(q, p));
        CHECK(js >= 0.0);
        CHECK(js <= std::log(2.0));
        CHECK(js_divergence(p, p) == 0.0);

        Tensor ty(Shape{m, 3}), tp(Shape{m, 3});
        for (double& v : ty.data()) v = rng.normal();
        for (double& v : tp.data()) v = rng.normal();
        const auto gene = pcc_gene(ty, tp);
        for (std::size_t j = 0; j < 3; ++j) {
            V cy(m), cp(m);
            for (std::size_t i = 0; i < m; ++i) {
                cy[i] = ty(i, j);
                cp[i] = tp(i, j);
            }
            CHECK(std::fabs(gene[j] - pearson_oracle(cy, cp)) < 1e-10);
        }
    }
}

TEST_CASE("evaluate and report files") {
    Tensor y = Tensor::from({{1, 2, 3}, {3, 2, 2}, {0, 1, 5}});
    Tensor p = Tensor::from({{1, 2, 4}, {3, 1, 2}, {1, 1, 5}});
    auto r = evaluate(y, p, {"a", "b", "c"}, {"G1", "G2", "G3"}, "f0");
    CHECK(r.per_unit_pcc.size() == 3);
    CHECK(r.per_gene_pcc.size() == 3);
    auto js = summary_json({r});
    CHECK(js["pcc_overall"]["count"] == 3);
    CHECK(js["folds"].size() == 1);
    const auto dir = std::filesystem::temp_directory_path() / "bitro_eval_io";
    write_eval_report(dir / "eval_report.tsv", {r});
    const auto lines = ingest::read_lines(dir / "eval_report.tsv");
    CHECK(lines.size() == 7);
    CHECK(lines[0] == "fold\tkind\tid\tpcc\tjs");
    std::filesystem::remove_all(dir);
}

TEST_CASE("sample-level protocols") {
    std::vector<std::size_t> units{0, 0, 1, 2, 2, 2};
    auto loo = sample_folds(Protocol::loo, units, 3, 1);
    REQUIRE(loo.size() == 3);
    CHECK(loo[1].test == std::vector<std::size_t>{2});
    CHECK(loo[1].train == std::vector<std::size_t>{0, 1, 3, 4, 5});
    CHECK_THROWS_AS(sample_folds(Protocol::loo, std::vector<std::size_t>{0}, 1, 1), ProtocolError);

    std::vector<std::size_t> ten(10);
    for (std::size_t i = 0; i < 10; ++i) ten[i] = i;
    auto a = sample_folds(Protocol::split_4_1, ten, 10, 7), b = sample_folds(Protocol::split_4_1, ten, 10, 7);
    REQUIRE(a.size() == 1);
    CHECK(a[0].train.size() == 8);
    CHECK(a[0].test.size() == 2);
    CHECK(a[0].test == b[0].test);
    CHECK(parse_protocol("spatial_5fold") == Protocol::spatial_5fold);
    CHECK_THROWS_AS(parse_protocol("kfold"), ConfigError);
}

TEST_CASE("spatial strips follow x quantiles") {
    Rng rng(12);
    std::vector<double> xs(1000);
    for (double& x : xs) x = rng.uniform(0, 1000);
    const auto bounds = strip_boundaries(xs);
    REQUIRE(bounds.size() == 4);
    std::vector<double> sorted = xs;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t k = 0; k < 4; ++k) {
        // quantile oracle: position q*(n-1) interpolated
        const double pos = 0.2 * (k + 1) * 999.0;
        const auto lo = static_cast<std::size_t>(pos);
        const double expect = sorted[lo] + (pos - lo) * (sorted[lo + 1] - sorted[lo]);
        CHECK(bounds[k] == doctest::Approx(expect).epsilon(1e-14));
    }
    CHECK(strip_of(-1.0, bounds) == 0);
    CHECK(strip_of(bounds[1], bounds) == 2);
    CHECK(strip_of(2000.0, bounds) == 4);

    std::vector<std::size_t> sample(xs.size(), 0);
    auto folds = spatial_folds(sample, xs, {xs});
    REQUIRE(folds.size() == 5);
    std::set<std::size_t> all;
    for (const auto& f : folds) {
        CHECK(f.test.size() >= 190);
        CHECK(f.test.size() + f.train.size() == xs.size());
        all.insert(f.test.begin(), f.test.end());
    }
    CHECK(all.size() == xs.size());
}
