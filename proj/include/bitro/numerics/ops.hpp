// Copyright 2026 The bitro Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Differentiable primitives over 2-D tensors recorded on an ad::Tape.

#include <cstddef>
#include <span>
#include <vector>

#include "bitro/numerics/tape.hpp"

namespace bitro {
class Rng;
}

namespace bitro::ad {

Var matmul(Var a, Var b);     // [m x k] * [k x n]
Var matmul_nt(Var a, Var b);  // [m x k] * [n x k]^T
Var transpose(Var a);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);  // element-wise
Var scale(Var a, double s);

/// Broadcast a 1 x n row over every row of an m x n matrix.
Var add_row(Var a, Var row);
Var sub_row(Var a, Var row);
Var mul_row(Var a, Var row);

Var sum(Var a);        // -> scalar
Var mean(Var a);       // -> scalar
Var sum_rows(Var a);   // [m x n] -> [1 x n]
Var mean_rows(Var a);  // [m x n] -> [1 x n]
Var square(Var a);

Var relu(Var a);
Var leaky_relu(Var a, double slope);
/// ln(1 + e^x), switching to x (and e^x) beyond |x| > 30.
Var softplus(Var a);

/// Row-wise softmax, stabilised by subtracting each row's maximum.
Var softmax_rows(Var a);

/// Row-wise normalisation to zero mean and unit variance, no affine.
/// The variance is floored at eps: rows whose variance is below eps are
/// centred and divided by sqrt(eps) instead.
Var layer_norm_rows(Var a, double eps = 1e-5);

Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
Var slice_rows(Var a, std::size_t begin, std::size_t end);
Var gather_rows(Var a, std::span<const std::size_t> rows);
Var reshape(Var a, Shape shape);

/// Inverted dropout; identity when p == 0.
Var dropout(Var a, double p, Rng& rng);

// Scalar reference functions shared with non-differentiable code paths.
double softplus_value(double x);

}  // namespace bitro::ad
