// Copyright 2026 The bitro Authors
// SPDX-License-Identifier: Apache-2.0

#include "bitro/encoder/transformer.hpp"

#include <algorithm>
#include <cmath>

#include "bitro/error.hpp"
#include "bitro/numerics/params.hpp"

namespace bitro::encoder {

using ad::Var;

Extent Extent::of(const Tensor& coords) {
    if (coords.rank() != 2 || coords.cols() != 2 || coords.rows() == 0)
        throw DimensionError("extent needs a non-empty N x 2 coordinate matrix, got " + shape_str(coords.shape()));
    Extent e{coords(0, 0), coords(0, 1), coords(0, 0), coords(0, 1)};
    for (std::size_t i = 1; i < coords.rows(); ++i) {
        e.x0 = std::min(e.x0, coords(i, 0));
        e.x1 = std::max(e.x1, coords(i, 0));
        e.y0 = std::min(e.y0, coords(i, 1));
        e.y1 = std::max(e.y1, coords(i, 1));
    }
    return e;
}

Extent Extent::merged(const Extent& o) const {
    return {std::min(x0, o.x0), std::min(y0, o.y0), std::max(x1, o.x1), std::max(y1, o.y1)};
}

namespace {

std::size_t bin(double v, double lo, double hi, std::size_t n_pos, std::size_t& clamped) {
    if (v < lo || v > hi) {
        ++clamped;
        v = std::clamp(v, lo, hi);
    }
    if (hi <= lo) return 0;
    const double f = (v - lo) / (hi - lo) * static_cast<double>(n_pos);
    return std::min(static_cast<std::size_t>(f), n_pos - 1);
}

}  // namespace

PosIndex quantize(const Tensor& coords, const Extent& e, std::size_t n_pos) {
    if (n_pos == 0) throw ConfigError("n_pos must be positive");
    if (coords.rank() != 2 || coords.cols() != 2)
        throw DimensionError("coordinates must be N x 2, got " + shape_str(coords.shape()));
    PosIndex out;
    out.ix.resize(coords.rows());
    out.iy.resize(coords.rows());
    for (std::size_t i = 0; i < coords.rows(); ++i) {
        out.ix[i] = bin(coords(i, 0), e.x0, e.x1, n_pos, out.clamped);
        out.iy[i] = bin(coords(i, 1), e.y0, e.y1, n_pos, out.clamped);
    }
    return out;
}

Var positional_embed(const Tensor& coords, const Extent& extent, Var emb_x, Var emb_y, std::size_t* clamped) {
    if (emb_x.shape() != emb_y.shape() || emb_x.value().rank() != 2)
        throw DimensionError("positional tables must share an n_pos x D/2 shape");
    const PosIndex idx = quantize(coords, extent, emb_x.rows());
    if (clamped) *clamped = idx.clamped;
    return ad::concat_cols({ad::gather_rows(emb_x, idx.ix), ad::gather_rows(emb_y, idx.iy)});
}

std::string trf_name(std::size_t layer, const char* which) {
    return "trf." + std::to_string(layer) + "." + which;
}

TransformerLayerParams bind_transformer_layer(const Bound& params, std::size_t l) {
    return {params[trf_name(l, "q")],      params[trf_name(l, "k")],      params[trf_name(l, "v")],
            params[trf_name(l, "o")],      params[trf_name(l, "ffn_in")], params[trf_name(l, "ffn_out")]};
}

Var self_attention(Var u, const TransformerLayerParams& p, std::size_t heads, std::vector<Tensor>* attention) {
    const std::size_t d = u.cols();
    if (heads == 0 || d % heads != 0)
        throw DimensionError("model width " + std::to_string(d) + " is not divisible by " + std::to_string(heads) +
                             " heads");
    const std::size_t dh = d / heads;
    Var q = ad::matmul(u, p.q), k = ad::matmul(u, p.k), v = ad::matmul(u, p.v);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<Var> outs;
    outs.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        Var qh = heads == 1 ? q : ad::slice_cols(q, h * dh, (h + 1) * dh);
        Var kh = heads == 1 ? k : ad::slice_cols(k, h * dh, (h + 1) * dh);
        Var vh = heads == 1 ? v : ad::slice_cols(v, h * dh, (h + 1) * dh);
        Var a = ad::softmax_rows(ad::scale(ad::matmul_nt(qh, kh), scale));
        if (attention) attention->push_back(a.value());
        outs.push_back(ad::matmul(a, vh));
    }
    return heads == 1 ? outs[0] : ad::concat_cols(outs);
}

Var transformer_encode(Var h, Var s, const std::vector<TransformerLayerParams>& layers,
                       const TransformerOptions& opt) {
    if (h.shape() != s.shape())
        throw DimensionError("token features " + shape_str(h.shape()) + " and positions " + shape_str(s.shape()) +
                             " differ in shape");
    if (opt.window == 0) throw ConfigError("attention window must be positive");
    if (opt.dropout > 0.0 && opt.rng == nullptr) throw ContractError("dropout needs a random source");
    const std::size_t n = h.rows();
    auto drop = [&](Var x) { return opt.dropout > 0.0 ? ad::dropout(x, opt.dropout, *opt.rng) : x; };

    Var x = ad::add(h, s);
    for (const auto& p : layers) {
        Var u = ad::layer_norm_rows(x, opt.ln_eps);
        Var mixed;
        if (n <= opt.window) {
            mixed = self_attention(u, p, opt.heads);
        } else {
            std::vector<Var> chunks;
            for (std::size_t b = 0; b < n; b += opt.window)
                chunks.push_back(self_attention(ad::slice_rows(u, b, std::min(n, b + opt.window)), p, opt.heads));
            mixed = ad::concat_rows(chunks);
        }
        x = ad::add(x, drop(ad::matmul(mixed, p.o)));
        Var f = ad::matmul(ad::relu(ad::matmul(ad::layer_norm_rows(x, opt.ln_eps), p.ffn_in)), p.ffn_out);
        x = ad::add(x, drop(f));
    }
    return x;
}

}  // namespace bitro::encoder
