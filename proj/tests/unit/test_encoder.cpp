// Copyright 2026 The bitro Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <numeric>

#include "bitro/encoder/transformer.hpp"
#include "bitro/error.hpp"
#include "doctest.h"
#include "fd_check.hpp"

using namespace bitro;
using ad::Tape;
using ad::Var;
using encoder::TransformerLayerParams;
using testing::random_tensor;

namespace {

TransformerLayerParams random_layer(Tape& t, std::size_t d, Rng& rng, double sd = 0.5) {
    return {t.constant(random_tensor({d, d}, rng, sd)),     t.constant(random_tensor({d, d}, rng, sd)),
            t.constant(random_tensor({d, d}, rng, sd)),     t.constant(random_tensor({d, d}, rng, sd)),
            t.constant(random_tensor({d, 4 * d}, rng, sd)), t.constant(random_tensor({4 * d, d}, rng, sd))};
}

// Plain-loop reference of one pre-norm block, independent of the tape ops.
Tensor ln_ref(const Tensor& x, double eps) {
    Tensor y = x;
    for (std::size_t r = 0; r < x.rows(); ++r) {
        double m = 0.0, v = 0.0;
        for (double a : x.row_span(r)) m += a;
        m /= static_cast<double>(x.cols());
        for (double a : x.row_span(r)) v += (a - m) * (a - m);
        v /= static_cast<double>(x.cols());
        const double sd = std::sqrt(std::max(v, eps));
        for (std::size_t c = 0; c < x.cols(); ++c) y(r, c) = (x(r, c) - m) / sd;
    }
    return y;
}

Tensor mm(const Tensor& a, const Tensor& b) {
    Tensor c(Shape{a.rows(), b.cols()});
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j)
            for (std::size_t k = 0; k < a.cols(); ++k) c(i, j) += a(i, k) * b(k, j);
    return c;
}

Tensor block_ref(const Tensor& x, const TransformerLayerParams& p, std::size_t heads) {
    const std::size_t n = x.rows(), d = x.cols(), dh = d / heads;
    const Tensor u = ln_ref(x, 1e-5);
    const Tensor q = mm(u, p.q.value()), k = mm(u, p.k.value()), v = mm(u, p.v.value());
    Tensor mixed(Shape{n, d});
    for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<double> s(n);
            double mx = -1e300, z = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                for (std::size_t c = 0; c < dh; ++c) s[j] += q(i, h * dh + c) * k(j, h * dh + c);
                s[j] /= std::sqrt(static_cast<double>(dh));
                mx = std::max(mx, s[j]);
            }
            for (double& e : s) z += (e = std::exp(e - mx));
            for (std::size_t j = 0; j < n; ++j)
                for (std::size_t c = 0; c < dh; ++c) mixed(i, h * dh + c) += s[j] / z * v(j, h * dh + c);
        }
    Tensor y = x;
    const Tensor o = mm(mixed, p.o.value());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += o[i];
    Tensor f = mm(ln_ref(y, 1e-5), p.ffn_in.value());
    for (double& a : f.data()) a = std::max(a, 0.0);
    const Tensor g = mm(f, p.ffn_out.value());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += g[i];
    return y;
}

}  // namespace

TEST_CASE("quantize bins and clamps") {
    const encoder::Extent e{0, 0, 100, 50};
    const Tensor c = Tensor::from({{0, 0}, {100, 50}, {50, 25}, {-3, 60}, {0.01, 0.02}});
    auto idx = encoder::quantize(c, e, 1024);
    CHECK(idx.ix[0] == 0);
    CHECK(idx.ix[1] == 1023);
    CHECK(idx.iy[1] == 1023);
    CHECK(idx.ix[2] == 512);
    CHECK(idx.ix[3] == 0);
    CHECK(idx.iy[3] == 1023);
    CHECK(idx.clamped == 2);
    CHECK(idx.ix[4] == 0);
    CHECK(encoder::Extent::of(c).x0 == -3.0);
    CHECK(encoder::quantize(Tensor::from({{5, 5}}), encoder::Extent{5, 5, 5, 5}, 8).ix[0] == 0);
}

TEST_CASE("positional embedding looks up both halves") {
    Tape t(false);
    Rng rng(1);
    auto ex = t.constant(random_tensor({4, 2}, rng)), ey = t.constant(random_tensor({4, 2}, rng));
    const Tensor c = Tensor::from({{0.1, 0.9}, {0.2, 0.95}, {1.0, 0.0}});
    std::size_t clamped = 99;
    auto s = encoder::positional_embed(c, {0, 0, 1, 1}, ex, ey, &clamped).value();
    CHECK(clamped == 0);
    CHECK(s.cols() == 4);
    for (std::size_t j = 0; j < 4; ++j) CHECK(s(0, j) == s(1, j));
    CHECK(s(2, 0) == ex.value()(3, 0));
    CHECK(s(2, 3) == ey.value()(0, 1));
}

TEST_CASE("zero output projections give the residual identity") {
    Tape t(false);
    Rng rng(2);
    auto p = random_layer(t, 8, rng);
    p.o = t.constant(Tensor(Shape{8, 8}, 0.0));
    p.ffn_out = t.constant(Tensor(Shape{32, 8}, 0.0));
    auto h = t.constant(random_tensor({5, 8}, rng)), s = t.constant(random_tensor({5, 8}, rng));
    auto y = encoder::transformer_encode(h, s, {p, p});
    CHECK(y.value() == ad::add(h, s).value());
}

TEST_CASE("single token attends to itself") {
    Tape t(false);
    Rng rng(3);
    auto p = random_layer(t, 4, rng);
    std::vector<Tensor> att;
    encoder::self_attention(t.constant(random_tensor({1, 4}, rng)), p, 2, &att);
    for (const auto& a : att) CHECK(a.item() == 1.0);
}

TEST_CASE("transformer matches a dense reference and rows are stochastic") {
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        Tape t(false);
        const std::size_t n = 3, d = 8;
        auto l0 = random_layer(t, d, rng), l1 = random_layer(t, d, rng);
        const Tensor h = random_tensor({n, d}, rng), s = random_tensor({n, d}, rng);
        Tensor x = h;
        for (std::size_t i = 0; i < x.size(); ++i) x[i] += s[i];
        const Tensor want = block_ref(block_ref(x, l0, 4), l1, 4);
        auto got = encoder::transformer_encode(t.constant(h), t.constant(s), {l0, l1}).value();
        CHECK(max_abs_diff(got, want) < 1e-9);
        std::vector<Tensor> att;
        encoder::self_attention(t.constant(random_tensor({6, d}, rng, 10.0)), l0, 4, &att);
        for (const auto& a : att)
            for (std::size_t r = 0; r < a.rows(); ++r) {
                const auto row = a.row_span(r);
                CHECK(std::fabs(std::accumulate(row.begin(), row.end(), 0.0) - 1.0) < 1e-9);
            }
    }
}

TEST_CASE("token permutation permutes outputs") {
    Rng rng(5);
    Tape t(false);
    const std::size_t n = 7, d = 8;
    auto layers = std::vector{random_layer(t, d, rng), random_layer(t, d, rng)};
    const Tensor h = random_tensor({n, d}, rng), s = random_tensor({n, d}, rng);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    auto y = encoder::transformer_encode(t.constant(h), t.constant(s), layers).value();
    auto hp = ad::gather_rows(t.constant(h), perm), sp = ad::gather_rows(t.constant(s), perm);
    auto yp = encoder::transformer_encode(hp, sp, layers).value();
    CHECK(max_abs_diff(yp, ad::gather_rows(t.constant(y), perm).value()) < 1e-9);
}

TEST_CASE("windowed attention equals independent chunks") {
    Rng rng(6);
    Tape t(false);
    const std::size_t d = 4;
    auto layer = random_layer(t, d, rng);
    const Tensor h = random_tensor({5, d}, rng), s = random_tensor({5, d}, rng);
    encoder::TransformerOptions opt;
    opt.heads = 2;
    opt.window = 3;
    auto y = encoder::transformer_encode(t.constant(h), t.constant(s), {layer}, opt).value();
    opt.window = 100;
    auto a = encoder::transformer_encode(ad::slice_rows(t.constant(h), 0, 3), ad::slice_rows(t.constant(s), 0, 3),
                                         {layer}, opt).value();
    auto b = encoder::transformer_encode(ad::slice_rows(t.constant(h), 3, 5), ad::slice_rows(t.constant(s), 3, 5),
                                         {layer}, opt).value();
    CHECK(max_abs_diff(y, ad::concat_rows({t.constant(a), t.constant(b)}).value()) == 0.0);
}

TEST_CASE("transformer gradients pass finite differences") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(seed + 77);
        const std::size_t n = 2 + rng.below(5), d = 4;
        testing::LossFn f = [&, seed](Tape&, const std::vector<Var>& v) {
            TransformerLayerParams p{v[2], v[3], v[4], v[5], v[6], v[7]};
            encoder::TransformerOptions opt;
            opt.heads = 2;
            Rng pr(seed);
            return testing::project(encoder::transformer_encode(v[0], v[1], {p}, opt), pr);
        };
        std::vector<Tensor> in{random_tensor({n, d}, rng),      random_tensor({n, d}, rng),
                               random_tensor({d, d}, rng, 0.5), random_tensor({d, d}, rng, 0.5),
                               random_tensor({d, d}, rng, 0.5), random_tensor({d, d}, rng, 0.5),
                               random_tensor({d, 4 * d}, rng, 0.5), random_tensor({4 * d, d}, rng, 0.5)};
        CAPTURE(seed);
        CHECK(testing::fd_max_rel_error(f, in) < 1e-4);
    }
}

TEST_CASE("transformer shape errors") {
    Tape t(false);
    Rng rng(7);
    auto p = random_layer(t, 6, rng);
    auto h = t.constant(random_tensor({3, 6}, rng));
    CHECK_THROWS_AS(encoder::transformer_encode(h, t.constant(random_tensor({3, 4}, rng)), {p}), DimensionError);
    encoder::TransformerOptions opt;
    opt.heads = 4;
    CHECK_THROWS_AS(encoder::transformer_encode(h, h, {p}, opt), DimensionError);
}
