// Copyright 2026 The bitro Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "bitro/ingest/dataset.hpp"
#include "bitro/numerics/tensor.hpp"

namespace bitro::synth {

struct WorldConfig {
    std::uint64_t seed = 0;
    std::size_t features = 16;
    std::size_t genes = 32;
    std::size_t types = 4;
    double noise = 0.1;          // expression noise, SD = noise * sqrt(mean)
    double feature_noise = 0.5;  // per-dimension SD around the type mean
    double patch_px = ingest::kDefaultPatchPx;

    void validate() const;
};

struct Layout {
    std::size_t samples = 6;
    std::size_t spots = 64;
    std::size_t cells_per_spot = 24;
};

/// Planted cell types: each has a feature mean and a non-negative expression
/// profile; a cell's true expression is its type's profile.
struct PlantedWorld {
    WorldConfig cfg;
    Tensor type_means;  // K x F
    Tensor profiles;    // K x G, >= 0
    std::vector<std::string> genes;
};

PlantedWorld make_world(const WorldConfig& cfg);

struct SynthSample {
    ingest::CellTable cells;
    std::vector<std::size_t> types;  // per cell
    std::vector<std::size_t> spot;   // per cell
    ingest::ExpressionFrame expr;    // spots, or one bulk row
    Tensor truth;                    // per-cell expression, N x G
};

/// One sample: spots on a square grid with `patch_px` pitch, cells uniform
/// within 100 px of their spot centre, types drawn from a smooth spatial
/// field. Spot rows sum their cells' profiles; bulk sums every spot.
SynthSample sample_world(const PlantedWorld& world, const std::string& sample_id, std::size_t spots,
                         std::size_t cells_per_spot, ingest::TaskKind task);

/// Writes manifest.json, <id>_cells.tsv, <id>_expr.tsv per sample and
/// truth_cells.tsv under `dir`. Sample ids are prefix0, prefix1, ...
ingest::DatasetDescriptor generate(const PlantedWorld& world, const std::filesystem::path& dir, const Layout& layout,
                                   ingest::TaskKind task, const std::string& prefix = "s");

struct PairedTasks {
    ingest::DatasetDescriptor st;
    ingest::DatasetDescriptor bulk;
};

/// Spot and bulk datasets from the same world with disjoint sample ids, in
/// dir/st and dir/bulk.
PairedTasks paired_tasks(const PlantedWorld& world, const std::filesystem::path& dir, const Layout& st,
                         const Layout& bulk);

}  // namespace bitro::synth
