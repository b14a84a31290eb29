// Copyright 2026 The bitro Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "bitro/graph/knn.hpp"
#include "bitro/numerics/ops.hpp"

namespace bitro {
class Bound;
}

namespace bitro::graph {

inline constexpr double kDefaultLeakySlope = 0.2;

/// Attention weights of one head, stored per node over its neighbourhood
/// [self, neighbors...] in the same order as SpatialGraph::neighbors.
struct AttentionWeights {
    std::vector<std::vector<double>> alpha;
};

/// Single-head graph attention over N(i) plus the self-loop:
///   e_ij = LeakyReLU(a_src . wh_i + a_dst . wh_j),  alpha_i = softmax_j(e_i),
///   out_i = sum_j alpha_ij wh_j
/// `a` holds [a_src, a_dst] (2d values). Differentiable in wh and a.
ad::Var graph_attention(ad::Var wh, ad::Var a, const SpatialGraph& g, double slope = kDefaultLeakySlope,
                        AttentionWeights* weights = nullptr);

struct GatLayerParams {
    std::vector<ad::Var> w;  // per head, D_in x (D_out / heads)
    std::vector<ad::Var> a;  // per head, 2 * D_out / heads values
    ad::Var out_proj;        // D_out x D_out
    std::optional<ad::Var> ln_gamma;
    std::optional<ad::Var> ln_beta;

    std::size_t heads() const { return w.size(); }
};

std::string gat_w_name(std::size_t layer, std::size_t head);
std::string gat_a_name(std::size_t layer, std::size_t head);
std::string gat_out_proj_name(std::size_t layer);
std::string gat_ln_name(std::size_t layer, const char* which);

GatLayerParams bind_gat_layer(const Bound& params, std::size_t layer, std::size_t heads, bool ln_affine);

struct GatOptions {
    double slope = kDefaultLeakySlope;
    double ln_eps = 1e-5;
};

/// One layer: heads run graph_attention on h W_h, are concatenated, then
/// projected, layer-normalised and passed through ReLU.
ad::Var gat_layer(ad::Var h, const SpatialGraph& g, const GatLayerParams& p, const GatOptions& opt = {},
                  std::vector<AttentionWeights>* weights = nullptr);

/// L stacked layers; L = 0 returns h unchanged.
ad::Var gat_encode(ad::Var h, const SpatialGraph& g, const std::vector<GatLayerParams>& layers,
                   const GatOptions& opt = {});

}  // namespace bitro::graph
