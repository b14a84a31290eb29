// Copyright 2026 The bitro Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bitro/encoder/transformer.hpp"
#include "bitro/graph/knn.hpp"
#include "bitro/numerics/params.hpp"

namespace bitro::mil {

struct ModelConfig {
    std::size_t d_model = 128;
    std::size_t genes = 0;
    std::size_t gat_layers = 2;
    std::size_t gat_heads = 4;
    std::size_t trf_layers = 2;
    std::size_t trf_heads = 4;
    std::size_t ff_mult = 4;
    std::size_t n_pos = encoder::kDefaultPositions;
    std::size_t knn = 8;
    std::size_t window = encoder::kDefaultWindow;
    double leaky_slope = 0.2;
    double ln_eps = 1e-5;
    bool use_softplus = true;

    /// Throws ConfigError on inconsistent widths.
    void validate() const;
};

/// Fresh parameters: Gaussian weights scaled by 1/sqrt(fan_in), small
/// positional tables, gene queries N(0, 1/sqrt(D)).
ParamTree init_params(const ModelConfig& cfg, std::uint64_t seed);

/// Gene-query rows for `count` genes drawn the same way init_params does.
Tensor init_gene_queries(std::size_t count, std::size_t d_model, std::uint64_t seed);

/// One bag ready for the network. prepare_bag() orders cells spatially (patch
/// first, then y, then x) so attention windows hold neighbouring cells, and
/// builds the kNN graph inside each patch.
struct BagInput {
    std::string unit_id;
    Tensor features;                   // N x D
    Tensor coords;                     // N x 2, slide pixels
    std::vector<std::size_t> patch;   // per-cell patch id; empty means one patch
    std::vector<std::int64_t> cell_ids;
    std::vector<std::size_t> labels;  // phenotype cluster per cell; may be empty
    encoder::Extent extent;           // positional quantisation box
    std::optional<std::vector<double>> target;  // G values in training space

    graph::SpatialGraph graph;
    bool prepared = false;

    std::size_t size() const { return features.rows(); }
};

void prepare_bag(BagInput& bag, std::size_t knn);

struct ForwardOptions {
    double dropout = 0.0;
    Rng* rng = nullptr;
};

struct BagForward {
    ad::Var pred;       // 1 x G
    ad::Var attention;  // G x N
};

/// Features -> GAT -> positional fusion -> transformer -> gene pooling ->
/// readout, recorded on the tape owning `params`.
BagForward forward_bag(const Bound& params, const ModelConfig& cfg, const BagInput& bag,
                       const ForwardOptions& opt = {});

struct BagPrediction {
    std::vector<double> y;  // G values
    Tensor attention;       // G x N
};

/// Inference without gradient recording. Thread-safe for a shared ParamTree.
BagPrediction predict_bag(const ParamTree& params, const ModelConfig& cfg, const BagInput& bag);

}  // namespace bitro::mil
