// Copyright 2026 The bitro Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <numeric>

#include "bitro/error.hpp"
#include "bitro/numerics/ops.hpp"
#include "bitro/numerics/params.hpp"
#include "doctest.h"
#include "fd_check.hpp"

using namespace bitro;
using ad::Tape;
using ad::Var;
using testing::fd_max_rel_error;
using testing::project;
using testing::random_tensor;

TEST_CASE("tensor construction validates shape") {
    CHECK_THROWS_AS(Tensor(Shape{2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
    const Tensor t = Tensor::from({{1, 2, 3}, {4, 5, 6}});
    CHECK(t.rows() == 2);
    CHECK(t.cols() == 3);
    CHECK(t(1, 2) == 6.0);
    CHECK(t.transposed()(2, 1) == 6.0);
    CHECK(Tensor::scalar(4.0).item() == 4.0);
}

TEST_CASE("matmul examples") {
    Tape t(false);
    auto id = t.constant(Tensor::from({{1, 0}, {0, 1}}));
    auto col = t.constant(Tensor::from({{3}, {4}}));
    CHECK(ad::matmul(id, col).value() == Tensor::from({{3}, {4}}));
    CHECK(ad::matmul(t.constant(Tensor::from({{1, 2}})), col).value().item() == 11.0);
    CHECK(ad::matmul(t.constant(Tensor::from({{0, 0}})), col).value().item() == 0.0);
    CHECK_THROWS_AS(ad::matmul(col, col), DimensionError);
}

TEST_CASE("softmax rows") {
    Tape t(false);
    auto a = ad::softmax_rows(t.constant(Tensor::from({{0, 0}})));
    CHECK(a.value()(0, 0) == doctest::Approx(0.5));
    auto b = ad::softmax_rows(t.constant(Tensor::from({{std::log(1.0), std::log(3.0)}})));
    CHECK(b.value()(0, 0) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(b.value()(0, 1) == doctest::Approx(0.75).epsilon(1e-12));
    auto c = ad::softmax_rows(t.constant(Tensor::from({{1000, 0}})));
    CHECK(c.value().all_finite());
    CHECK(c.value()(0, 0) == doctest::Approx(1.0));
    CHECK(c.value()(0, 1) < 1e-300);

    Rng rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        auto x = ad::softmax_rows(t.constant(random_tensor({3, 7}, rng, 300.0)));
        for (std::size_t r = 0; r < 3; ++r) {
            double s = 0.0;
            for (double v : x.value().row_span(r)) s += v;
            CHECK(std::fabs(s - 1.0) < 1e-9);
        }
    }
}

TEST_CASE("layer norm examples and properties") {
    Tape t(false);
    auto z = ad::layer_norm_rows(t.constant(Tensor::from({{1, 1}})), 1e-5);
    CHECK(z.value()(0, 0) == 0.0);
    CHECK(z.value()(0, 1) == 0.0);
    auto pm = ad::layer_norm_rows(t.constant(Tensor::from({{1, -1}})), 1e-5);
    CHECK(std::fabs(pm.value()(0, 0) - 1.0) < 1e-6);
    CHECK(std::fabs(pm.value()(0, 1) + 1.0) < 1e-6);
    auto three = ad::layer_norm_rows(t.constant(Tensor::from({{2, 4, 6}})), 1e-5);
    CHECK(std::fabs(three.value()(0, 0) + 1.2247) < 1e-4);
    CHECK(std::fabs(three.value()(0, 1)) < 1e-12);
    CHECK(std::fabs(three.value()(0, 2) - 1.2247) < 1e-4);

    Rng rng(8);
    for (int trial = 0; trial < 100; ++trial) {
        auto y = ad::layer_norm_rows(t.constant(random_tensor({4, 9}, rng, 5.0)), 1e-5);
        for (std::size_t r = 0; r < 4; ++r) {
            double m = 0.0, v = 0.0;
            for (double x : y.value().row_span(r)) m += x;
            m /= 9.0;
            for (double x : y.value().row_span(r)) v += (x - m) * (x - m);
            v /= 9.0;
            CHECK(std::fabs(m) < 1e-9);
            CHECK(v > 1.0 - 1e-3);
            CHECK(v < 1.0 + 1e-3);
        }
    }
}

TEST_CASE("elementwise activations") {
    Tape t(false);
    CHECK(ad::softplus(t.constant(Tensor::scalar(0.0))).value().item() == doctest::Approx(std::log(2.0)));
    CHECK(ad::relu(t.constant(Tensor::scalar(-5.0))).value().item() == 0.0);
    CHECK(ad::leaky_relu(t.constant(Tensor::scalar(-1.0)), 0.2).value().item() == doctest::Approx(-0.2));
    CHECK(ad::softplus_value(50.0) == 50.0);
    CHECK(ad::softplus_value(-50.0) == doctest::Approx(std::exp(-50.0)));
}

TEST_CASE("backward basics") {
    Tape t;
    auto x = t.leaf(Tensor::scalar(3.0));
    t.backward(ad::mul(x, x));
    CHECK(x.grad().item() == doctest::Approx(6.0));

    Tape t2;
    auto c = t2.leaf(Tensor::scalar(2.0));
    auto k = t2.constant(Tensor::scalar(7.0));
    t2.backward(ad::add(k, ad::scale(k, 0.0)));
    CHECK(c.grad().item() == 0.0);

    Tape t3;
    auto m = t3.leaf(Tensor::from({{1, 2}}));
    CHECK_THROWS_AS(t3.backward(m), ContractError);
    auto s = ad::sum(m);
    t3.backward(s);
    CHECK_THROWS_AS(t3.backward(s), ContractError);
}

namespace {

struct Case {
    const char* name;
    std::vector<Shape> shapes;
    testing::LossFn fn;
};

}  // namespace

TEST_CASE("every primitive passes finite differences over 100 seeds") {
    Rng proj_rng(0);
    auto P = [&](Var v) {
        Rng r(static_cast<std::uint64_t>(v.shape().size() * 31 + v.value().size()));
        return project(v, r);
    };
    const std::vector<Case> cases = {
        {"matmul", {{3, 4}, {4, 2}}, [&](Tape&, const auto& v) { return P(ad::matmul(v[0], v[1])); }},
        {"matmul_nt", {{3, 4}, {2, 4}}, [&](Tape&, const auto& v) { return P(ad::matmul_nt(v[0], v[1])); }},
        {"transpose", {{3, 2}}, [&](Tape&, const auto& v) { return P(ad::transpose(v[0])); }},
        {"add/sub/mul", {{2, 3}, {2, 3}},
         [&](Tape&, const auto& v) { return P(ad::mul(ad::add(v[0], v[1]), ad::sub(v[0], v[1]))); }},
        {"scale", {{2, 3}}, [&](Tape&, const auto& v) { return P(ad::scale(v[0], -1.7)); }},
        {"row broadcast", {{3, 4}, {1, 4}, {1, 4}, {1, 4}},
         [&](Tape&, const auto& v) {
             return P(ad::mul_row(ad::sub_row(ad::add_row(v[0], v[1]), v[2]), v[3]));
         }},
        {"reductions", {{3, 4}},
         [&](Tape&, const auto& v) {
             return ad::add(ad::mean(ad::square(v[0])),
                            ad::add(P(ad::sum_rows(v[0])), P(ad::mean_rows(ad::square(v[0])))));
         }},
        {"relu", {{4, 5}}, [&](Tape&, const auto& v) { return P(ad::relu(v[0])); }},
        {"leaky_relu", {{4, 5}}, [&](Tape&, const auto& v) { return P(ad::leaky_relu(v[0], 0.2)); }},
        {"softplus", {{4, 5}}, [&](Tape&, const auto& v) { return P(ad::softplus(v[0])); }},
        {"softmax_rows", {{3, 5}}, [&](Tape&, const auto& v) { return P(ad::softmax_rows(v[0])); }},
        {"softmax crossproduct", {{3, 4}, {5, 4}},
         [&](Tape&, const auto& v) { return P(ad::matmul(ad::softmax_rows(ad::matmul_nt(v[0], v[1])), v[1])); }},
        {"layer_norm_rows", {{3, 6}}, [&](Tape&, const auto& v) { return P(ad::layer_norm_rows(v[0])); }},
        {"concat/slice", {{3, 2}, {3, 3}, {2, 5}},
         [&](Tape&, const auto& v) {
             auto c = ad::concat_rows({ad::concat_cols({v[0], v[1]}), v[2]});
             return ad::add(P(ad::slice_cols(c, 1, 4)), P(ad::slice_rows(c, 2, 5)));
         }},
        {"gather_rows", {{4, 3}},
         [&](Tape&, const auto& v) {
             const std::vector<std::size_t> idx{3, 0, 3, 1};
             return P(ad::gather_rows(v[0], idx));
         }},
        {"reshape", {{2, 6}}, [&](Tape&, const auto& v) { return P(ad::reshape(v[0], Shape{3, 4})); }},
    };
    for (const auto& c : cases) {
        CAPTURE(c.name);
        double worst = 0.0;
        for (std::uint64_t seed = 0; seed < 100; ++seed) {
            Rng rng(mix_seed(fnv1a(c.name), seed));
            std::vector<Tensor> inputs;
            for (const auto& s : c.shapes) inputs.push_back(random_tensor(s, rng));
            worst = std::max(worst, fd_max_rel_error(c.fn, inputs));
        }
        CHECK(worst < 1e-4);
    }
}

TEST_CASE("dropout is identity at p=0 and inverted otherwise") {
    Tape t(false);
    Rng rng(1);
    auto x = t.constant(Tensor(Shape{10, 10}, 1.0));
    CHECK(ad::dropout(x, 0.0, rng).value() == x.value());
    auto y = ad::dropout(x, 0.5, rng).value();
    for (double v : y.data()) CHECK((v == 0.0 || v == 2.0));
}

TEST_CASE("adam step examples") {
    ParamTree p;
    p.set("x", Tensor::scalar(1.0));
    AdamState st;
    st.config.lr = 0.1;
    adam_step(p, {{"x", Tensor::scalar(0.0)}}, st);
    CHECK(p.at("x").item() == 1.0);

    ParamTree q;
    q.set("x", Tensor::scalar(1.0));
    AdamState st2;
    st2.config.lr = 0.1;
    adam_step(q, {{"x", Tensor::scalar(1.0)}}, st2);
    // m_hat = 1, v_hat = 1, step = lr / (1 + eps)
    CHECK(q.at("x").item() == doctest::Approx(1.0 - 0.1 / (1.0 + 1e-8)).epsilon(1e-12));
}

TEST_CASE("adam clips the global norm") {
    // With clipping, g = [6, 8] (norm 10) becomes [0.6, 0.8]; the first Adam
    // step is sign-like, so compare second moments instead.
    ParamTree p;
    p.set("a", Tensor::vector({0.0, 0.0}));
    AdamState st;
    const double norm = adam_step(p, {{"a", Tensor::vector({6.0, 8.0})}}, st);
    CHECK(norm == doctest::Approx(10.0));
    CHECK(st.m.at("a")[0] == doctest::Approx(0.1 * 0.6));
    CHECK(st.m.at("a")[1] == doctest::Approx(0.1 * 0.8));
    CHECK(st.v.at("a")[1] == doctest::Approx(0.001 * 0.64));
}

TEST_CASE("adam leaves frozen tensors bit-identical and requires trainable grads") {
    ParamTree p;
    p.set("w", Tensor::from({{0.1, 0.2}}));
    p.set("frozen", Tensor::from({{0.3, 0.4}}), false);
    const Tensor before = p.at("frozen");
    AdamState st;
    for (int i = 0; i < 5; ++i) adam_step(p, {{"w", Tensor::from({{1.0, -1.0}})}}, st);
    CHECK(p.at("frozen") == before);
    CHECK(p.at("w") != Tensor::from({{0.1, 0.2}}));
    CHECK_THROWS_AS(adam_step(p, {}, st), ContractError);
}

TEST_CASE("bound params expose gradients of trainable entries only") {
    ParamTree p;
    p.set("w", Tensor::from({{2.0}}));
    p.set("c", Tensor::from({{3.0}}), false);
    Tape t;
    Bound b(p, t);
    t.backward(ad::sum(ad::mul(b["w"], b["c"])));
    const auto g = b.grads(p);
    CHECK(g.size() == 1);
    CHECK(g.at("w").item() == doctest::Approx(3.0));
    CHECK_THROWS(b["missing"]);
}
