// Copyright 2026 The bitro Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>

#include "bitro/numerics/ops.hpp"

namespace bitro::mil {

struct PoolResult {
    ad::Var attention;  // G x N, row-stochastic
    ad::Var z;          // G x D
};

/// A = softmax_rows(Q H^T / sqrt(D)), Z = A H.
PoolResult pool(ad::Var h_cell, ad::Var q_gene);

/// Shared per-gene head: optional Softplus(w2^T ReLU(w1^T LN(z_g))).
/// Returns a 1 x G row.
ad::Var readout(ad::Var z, ad::Var w1, ad::Var w2, bool use_softplus, double ln_eps = 1e-5);

/// y_cell[i, g] = A[g, i] * y[g]; columns of the result sum to y.
Tensor deconvolve(const Tensor& attention, std::span<const double> y);
ad::Var deconvolve(ad::Var attention, ad::Var y_row);

}  // namespace bitro::mil
