// Copyright 2026 The bitro Authors
// SPDX-License-Identifier: Apache-2.0

#include "bitro/graph/gat.hpp"

#include <algorithm>
#include <cmath>

#include "bitro/error.hpp"
#include "bitro/numerics/params.hpp"
#include "bitro/simd/kernels.hpp"

namespace bitro::graph {

using ad::Tape;
using ad::Var;

Var graph_attention(Var wh, Var a, const SpatialGraph& g, double slope, AttentionWeights* weights) {
    const Tensor& whv = wh.value();
    if (whv.rank() != 2) throw DimensionError("graph_attention: wh must be a matrix");
    const std::size_t n = whv.rows(), d = whv.cols();
    if (g.n != n)
        throw DimensionError("graph_attention: graph has " + std::to_string(g.n) + " nodes, features have " +
                             std::to_string(n) + " rows");
    if (a.value().size() != 2 * d)
        throw DimensionError("graph_attention: attention vector needs " + std::to_string(2 * d) + " values, got " +
                             std::to_string(a.value().size()));
    const auto& kr = simd::active();
    const double* av = a.value().data().data();

    std::vector<double> s_src(n), s_dst(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double* wi = whv.data().data() + i * d;
        s_src[i] = kr.dot(av, wi, d);
        s_dst[i] = kr.dot(av + d, wi, d);
    }

    // CSR over neighbourhoods [i, neighbors(i)...]
    std::vector<std::size_t> offs(n + 1, 0), nbr;
    for (std::size_t i = 0; i < n; ++i) offs[i + 1] = offs[i] + 1 + g.neighbors[i].size();
    nbr.reserve(offs[n]);
    for (std::size_t i = 0; i < n; ++i) {
        nbr.push_back(i);
        for (std::size_t j : g.neighbors[i]) {
            if (j >= n) throw GraphError("neighbor index out of range");
            nbr.push_back(j);
        }
    }
    std::vector<double> pre(offs[n]), alpha(offs[n]);
    Tensor out(Shape{n, d});
    for (std::size_t i = 0; i < n; ++i) {
        double mx = -INFINITY;
        for (std::size_t e = offs[i]; e < offs[i + 1]; ++e) {
            pre[e] = s_src[i] + s_dst[nbr[e]];
            const double act = pre[e] > 0.0 ? pre[e] : slope * pre[e];
            alpha[e] = act;
            mx = std::max(mx, act);
        }
        double s = 0.0;
        for (std::size_t e = offs[i]; e < offs[i + 1]; ++e) {
            alpha[e] = std::exp(alpha[e] - mx);
            s += alpha[e];
        }
        double* oi = out.data().data() + i * d;
        for (std::size_t e = offs[i]; e < offs[i + 1]; ++e) {
            alpha[e] /= s;
            kr.axpy(alpha[e], whv.data().data() + nbr[e] * d, oi, d);
        }
    }
    if (weights != nullptr) {
        weights->alpha.assign(n, {});
        for (std::size_t i = 0; i < n; ++i)
            weights->alpha[i].assign(alpha.begin() + static_cast<std::ptrdiff_t>(offs[i]),
                                     alpha.begin() + static_cast<std::ptrdiff_t>(offs[i + 1]));
    }

    Tape& t = wh.tape();
    if (!t.tracks({wh, a})) return t.push_constant(std::move(out));
    return t.push(std::move(out), [iw = wh.id(), ia = a.id(), n, d, slope, offs = std::move(offs),
                                   nbr = std::move(nbr), pre = std::move(pre),
                                   alpha = std::move(alpha)](Tape& t, std::size_t self) {
        const auto& kr = simd::active();
        const Tensor& gout = t.grad(self);
        const Tensor& whv = t.value(iw);
        const double* av = t.value(ia).data().data();
        const bool need_w = t.requires_grad(iw), need_a = t.requires_grad(ia);
        std::vector<double> ds_src(n, 0.0), ds_dst(n, 0.0);
        Tensor* gw = need_w ? &t.grad_accum(iw) : nullptr;
        std::vector<double> dalpha;
        for (std::size_t i = 0; i < n; ++i) {
            const double* gi = gout.data().data() + i * d;
            const std::size_t b = offs[i], e_end = offs[i + 1];
            dalpha.assign(e_end - b, 0.0);
            double weighted = 0.0;
            for (std::size_t e = b; e < e_end; ++e) {
                const double* wj = whv.data().data() + nbr[e] * d;
                dalpha[e - b] = kr.dot(gi, wj, d);
                weighted += alpha[e] * dalpha[e - b];
                if (gw) kr.axpy(alpha[e], gi, gw->data().data() + nbr[e] * d, d);
            }
            for (std::size_t e = b; e < e_end; ++e) {
                const double de = alpha[e] * (dalpha[e - b] - weighted);
                const double dp = pre[e] > 0.0 ? de : slope * de;
                ds_src[i] += dp;
                ds_dst[nbr[e]] += dp;
            }
        }
        if (gw) {
            for (std::size_t i = 0; i < n; ++i) {
                double* gwi = gw->data().data() + i * d;
                kr.axpy(ds_src[i], av, gwi, d);
                kr.axpy(ds_dst[i], av + d, gwi, d);
            }
        }
        if (need_a) {
            double* ga = t.grad_accum(ia).data().data();
            for (std::size_t i = 0; i < n; ++i) {
                const double* wi = whv.data().data() + i * d;
                kr.axpy(ds_src[i], wi, ga, d);
                kr.axpy(ds_dst[i], wi, ga + d, d);
            }
        }
    });
}

std::string gat_w_name(std::size_t layer, std::size_t head) {
    return "gat." + std::to_string(layer) + ".head" + std::to_string(head) + ".w";
}
std::string gat_a_name(std::size_t layer, std::size_t head) {
    return "gat." + std::to_string(layer) + ".head" + std::to_string(head) + ".a";
}
std::string gat_out_proj_name(std::size_t layer) { return "gat." + std::to_string(layer) + ".out_proj"; }
std::string gat_ln_name(std::size_t layer, const char* which) {
    return "gat." + std::to_string(layer) + ".ln." + which;
}

GatLayerParams bind_gat_layer(const Bound& params, std::size_t layer, std::size_t heads, bool ln_affine) {
    GatLayerParams p;
    for (std::size_t h = 0; h < heads; ++h) {
        p.w.push_back(params[gat_w_name(layer, h)]);
        p.a.push_back(params[gat_a_name(layer, h)]);
    }
    p.out_proj = params[gat_out_proj_name(layer)];
    if (ln_affine) {
        p.ln_gamma = params[gat_ln_name(layer, "gamma")];
        p.ln_beta = params[gat_ln_name(layer, "beta")];
    }
    return p;
}

Var gat_layer(Var h, const SpatialGraph& g, const GatLayerParams& p, const GatOptions& opt,
              std::vector<AttentionWeights>* weights) {
    if (p.heads() == 0) throw ContractError("GAT layer needs at least one head");
    std::vector<Var> heads;
    heads.reserve(p.heads());
    if (weights) weights->assign(p.heads(), {});
    for (std::size_t k = 0; k < p.heads(); ++k) {
        Var wh = ad::matmul(h, p.w[k]);
        heads.push_back(graph_attention(wh, p.a[k], g, opt.slope, weights ? &(*weights)[k] : nullptr));
    }
    Var cat = heads.size() == 1 ? heads[0] : ad::concat_cols(heads);
    Var y = ad::layer_norm_rows(ad::matmul(cat, p.out_proj), opt.ln_eps);
    if (p.ln_gamma) y = ad::add_row(ad::mul_row(y, *p.ln_gamma), *p.ln_beta);
    return ad::relu(y);
}

Var gat_encode(Var h, const SpatialGraph& g, const std::vector<GatLayerParams>& layers, const GatOptions& opt) {
    for (const auto& layer : layers) h = gat_layer(h, g, layer, opt);
    return h;
}

}  // namespace bitro::graph
