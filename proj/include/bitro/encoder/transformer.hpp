// Copyright 2026 The bitro Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "bitro/numerics/ops.hpp"

namespace bitro {
class Bound;
class Rng;
}  // namespace bitro

namespace bitro::encoder {

inline constexpr std::size_t kDefaultPositions = 1024;
inline constexpr std::size_t kDefaultWindow = 4096;

/// Axis-aligned box used to quantise coordinates.
struct Extent {
    double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;

    /// Bounding box of an N x 2 coordinate matrix.
    static Extent of(const Tensor& coords);
    Extent merged(const Extent& other) const;
};

struct PosIndex {
    std::vector<std::size_t> ix, iy;
    std::size_t clamped = 0;  // coordinates that fell outside the extent
};

/// Uniform bins over [x0, x1] (and [y0, y1]); the upper edge maps to the last
/// bin, out-of-range values are clamped and counted.
PosIndex quantize(const Tensor& coords, const Extent& extent, std::size_t n_pos);

/// s_i = emb_x[bin(x_i)] ++ emb_y[bin(y_i)], an N x (2 * half) matrix.
ad::Var positional_embed(const Tensor& coords, const Extent& extent, ad::Var emb_x, ad::Var emb_y,
                         std::size_t* clamped = nullptr);

struct TransformerLayerParams {
    ad::Var q, k, v, o;
    ad::Var ffn_in, ffn_out;
};

struct TransformerOptions {
    std::size_t heads = 4;
    /// Tokens attend only within consecutive chunks of this many rows.
    std::size_t window = kDefaultWindow;
    double dropout = 0.0;
    Rng* rng = nullptr;  // required when dropout > 0
    double ln_eps = 1e-5;
};

std::string trf_name(std::size_t layer, const char* which);
TransformerLayerParams bind_transformer_layer(const Bound& params, std::size_t layer);

/// Multi-head self-attention of one window; returns the concatenated head
/// outputs before the output projection. `attention`, when given, receives
/// one N x N matrix per head.
ad::Var self_attention(ad::Var u, const TransformerLayerParams& p, std::size_t heads,
                       std::vector<Tensor>* attention = nullptr);

/// Pre-norm encoder over tokens h + s:
///   x += Drop(MHA(LN(x)) W_o);  x += Drop(ReLU(LN(x) W_in) W_out)
ad::Var transformer_encode(ad::Var h, ad::Var s, const std::vector<TransformerLayerParams>& layers,
                           const TransformerOptions& opt = {});

}  // namespace bitro::encoder
