// Copyright 2026 The bitro Authors
// SPDX-License-Identifier: Apache-2.0

#include "bitro/mil/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bitro/error.hpp"
#include "bitro/graph/gat.hpp"
#include "bitro/mil/pool.hpp"
#include "bitro/rng.hpp"

namespace bitro::mil {

using ad::Var;

void ModelConfig::validate() const {
    if (d_model == 0 || genes == 0) throw ConfigError("model width and gene count must be positive");
    if (d_model % 2 != 0) throw ConfigError("model width must be even for the positional tables");
    if (gat_heads == 0 || d_model % gat_heads != 0)
        throw ConfigError("model width " + std::to_string(d_model) + " not divisible by " +
                          std::to_string(gat_heads) + " GAT heads");
    if (trf_heads == 0 || d_model % trf_heads != 0)
        throw ConfigError("model width " + std::to_string(d_model) + " not divisible by " +
                          std::to_string(trf_heads) + " transformer heads");
    if (n_pos == 0 || knn == 0 || window == 0 || ff_mult == 0)
        throw ConfigError("n_pos, knn, window and ff_mult must be positive");
}

namespace {

Tensor gaussian(Shape shape, double sd, Rng& rng) {
    Tensor t(std::move(shape));
    for (double& v : t.data()) v = rng.normal(0.0, sd);
    return t;
}

}  // namespace

Tensor init_gene_queries(std::size_t count, std::size_t d, std::uint64_t seed) {
    Rng rng(seed);
    return gaussian({count, d}, 1.0 / std::sqrt(static_cast<double>(d)), rng);
}

ParamTree init_params(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const std::size_t d = cfg.d_model;
    const double s = 1.0 / std::sqrt(static_cast<double>(d));
    ParamTree p;
    // Each tensor gets its own stream so adding a tensor never shifts others.
    auto rng_for = [&](const std::string& name) { return Rng(mix_seed(seed, fnv1a(name))); };
    auto put = [&](const std::string& name, Shape shape, double sd) {
        Rng rng = rng_for(name);
        p.set(name, gaussian(std::move(shape), sd, rng));
    };
    const std::size_t dh = d / cfg.gat_heads;
    for (std::size_t l = 0; l < cfg.gat_layers; ++l) {
        for (std::size_t h = 0; h < cfg.gat_heads; ++h) {
            put(graph::gat_w_name(l, h), {d, dh}, s);
            put(graph::gat_a_name(l, h), {2 * dh}, 1.0 / std::sqrt(static_cast<double>(2 * dh)));
        }
        put(graph::gat_out_proj_name(l), {d, d}, s);
    }
    put("pos.emb_x", {cfg.n_pos, d / 2}, 0.02);
    put("pos.emb_y", {cfg.n_pos, d / 2}, 0.02);
    const std::size_t ff = cfg.ff_mult * d;
    for (std::size_t l = 0; l < cfg.trf_layers; ++l) {
        for (const char* w : {"q", "k", "v", "o"}) put(encoder::trf_name(l, w), {d, d}, s);
        put(encoder::trf_name(l, "ffn_in"), {d, ff}, s);
        put(encoder::trf_name(l, "ffn_out"), {ff, d}, 1.0 / std::sqrt(static_cast<double>(ff)));
    }
    p.set("mil.q_gene", init_gene_queries(cfg.genes, d, mix_seed(seed, fnv1a("mil.q_gene"))));
    put("mil.w1", {d, d}, s);
    put("mil.w2", {d, 1}, s);
    return p;
}

void prepare_bag(BagInput& bag, std::size_t knn) {
    const std::size_t n = bag.size();
    if (n == 0) throw BagError("bag '" + bag.unit_id + "' has no cells");
    if (bag.coords.rank() != 2 || bag.coords.rows() != n || bag.coords.cols() != 2)
        throw DimensionError("bag '" + bag.unit_id + "' coordinates " + shape_str(bag.coords.shape()) +
                             " do not match " + std::to_string(n) + " cells");
    if (!bag.patch.empty() && bag.patch.size() != n) throw DimensionError("patch ids do not match cell count");
    if (!bag.cell_ids.empty() && bag.cell_ids.size() != n) throw DimensionError("cell ids do not match cell count");
    if (!bag.labels.empty() && bag.labels.size() != n) throw DimensionError("labels do not match cell count");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    auto patch_of = [&](std::size_t i) { return bag.patch.empty() ? std::size_t{0} : bag.patch[i]; };
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (patch_of(a) != patch_of(b)) return patch_of(a) < patch_of(b);
        if (bag.coords(a, 1) != bag.coords(b, 1)) return bag.coords(a, 1) < bag.coords(b, 1);
        return bag.coords(a, 0) < bag.coords(b, 0);
    });
    const std::size_t f = bag.features.cols();
    Tensor feats(Shape{n, f}), coords(Shape{n, 2});
    for (std::size_t r = 0; r < n; ++r) {
        std::copy_n(bag.features.row_span(order[r]).begin(), f, feats.row_span(r).begin());
        coords(r, 0) = bag.coords(order[r], 0);
        coords(r, 1) = bag.coords(order[r], 1);
    }
    auto permute = [&](auto& v) {
        if (v.empty()) return;
        auto copy = v;
        for (std::size_t r = 0; r < n; ++r) v[r] = copy[order[r]];
    };
    permute(bag.patch);
    permute(bag.cell_ids);
    permute(bag.labels);
    bag.features = std::move(feats);
    bag.coords = std::move(coords);

    if (n < 2) {
        bag.graph = graph::SpatialGraph{n, std::vector<std::vector<std::size_t>>(n)};
    } else if (bag.patch.empty()) {
        bag.graph = graph::build_knn_graph(bag.coords, knn);
    } else {
        bag.graph = graph::build_patch_graph(bag.coords, bag.patch, knn);
    }
    bag.prepared = true;
}

BagForward forward_bag(const Bound& params, const ModelConfig& cfg, const BagInput& bag, const ForwardOptions& opt) {
    if (!bag.prepared) throw ContractError("bag '" + bag.unit_id + "' was not prepared");
    if (bag.features.cols() != cfg.d_model)
        throw DimensionError("bag '" + bag.unit_id + "' has feature width " + std::to_string(bag.features.cols()) +
                             ", model expects " + std::to_string(cfg.d_model));
    ad::Tape& tape = params.tape();
    Var h = tape.constant(bag.features);

    std::vector<graph::GatLayerParams> gat;
    for (std::size_t l = 0; l < cfg.gat_layers; ++l)
        gat.push_back(graph::bind_gat_layer(params, l, cfg.gat_heads, false));
    h = graph::gat_encode(h, bag.graph, gat, {cfg.leaky_slope, cfg.ln_eps});

    Var s = encoder::positional_embed(bag.coords, bag.extent, params["pos.emb_x"], params["pos.emb_y"]);
    std::vector<encoder::TransformerLayerParams> trf;
    for (std::size_t l = 0; l < cfg.trf_layers; ++l) trf.push_back(encoder::bind_transformer_layer(params, l));
    encoder::TransformerOptions topt;
    topt.heads = cfg.trf_heads;
    topt.window = cfg.window;
    topt.dropout = opt.dropout;
    topt.rng = opt.rng;
    topt.ln_eps = cfg.ln_eps;
    Var h_cell = encoder::transformer_encode(h, s, trf, topt);

    PoolResult pr = pool(h_cell, params["mil.q_gene"]);
    Var y = readout(pr.z, params["mil.w1"], params["mil.w2"], cfg.use_softplus, cfg.ln_eps);
    return {y, pr.attention};
}

BagPrediction predict_bag(const ParamTree& params, const ModelConfig& cfg, const BagInput& bag) {
    ad::Tape tape(false);
    Bound bound(params, tape);
    BagForward f = forward_bag(bound, cfg, bag);
    return {f.pred.value().values(), f.attention.value()};
}

}  // namespace bitro::mil
