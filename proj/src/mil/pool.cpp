// Copyright 2026 The bitro Authors
// SPDX-License-Identifier: Apache-2.0

#include "bitro/mil/pool.hpp"

#include <cmath>

#include "bitro/error.hpp"

namespace bitro::mil {

using ad::Var;

PoolResult pool(Var h_cell, Var q_gene) {
    if (h_cell.value().rank() != 2 || h_cell.rows() == 0) throw BagError("pooling needs at least one cell");
    if (q_gene.cols() != h_cell.cols())
        throw DimensionError("gene queries have width " + std::to_string(q_gene.cols()) + ", cells have " +
                             std::to_string(h_cell.cols()));
    const double scale = 1.0 / std::sqrt(static_cast<double>(h_cell.cols()));
    Var a = ad::softmax_rows(ad::scale(ad::matmul_nt(q_gene, h_cell), scale));
    return {a, ad::matmul(a, h_cell)};
}

Var readout(Var z, Var w1, Var w2, bool use_softplus, double ln_eps) {
    Var hidden = ad::relu(ad::matmul(ad::layer_norm_rows(z, ln_eps), w1));
    Var w2col = w2.value().rank() == 2 ? w2 : ad::reshape(w2, Shape{w2.value().size(), 1});
    Var out = ad::transpose(ad::matmul(hidden, w2col));
    return use_softplus ? ad::softplus(out) : out;
}

Tensor deconvolve(const Tensor& a, std::span<const double> y) {
    if (a.rank() != 2 || a.rows() != y.size())
        throw DimensionError("attention " + shape_str(a.shape()) + " does not match " + std::to_string(y.size()) +
                             " gene values");
    const std::size_t g = a.rows(), n = a.cols();
    Tensor out(Shape{n, g});
    for (std::size_t j = 0; j < g; ++j)
        for (std::size_t i = 0; i < n; ++i) out(i, j) = a(j, i) * y[j];
    return out;
}

Var deconvolve(Var attention, Var y_row) {
    Var yr = y_row.value().rank() == 2 ? y_row : ad::reshape(y_row, Shape{1, y_row.value().size()});
    return ad::mul_row(ad::transpose(attention), yr);
}

}  // namespace bitro::mil
