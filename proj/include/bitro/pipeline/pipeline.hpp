// Copyright 2026 The bitro Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Dataset-to-model glue shared by the CLI and the end-to-end tests: loading,
// bag assembly, feature compression, target transforms, training, transfer
// and evaluation.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bitro/cluster/kmeans.hpp"
#include "bitro/eval/metrics.hpp"
#include "bitro/eval/protocol.hpp"
#include "bitro/ingest/dataset.hpp"
#include "bitro/ingest/genes.hpp"
#include "bitro/ingest/pca.hpp"
#include "bitro/mil/model.hpp"
#include "bitro/train/checkpoint.hpp"
#include "bitro/train/fit.hpp"
#include "json.hpp"

namespace bitro::pipeline {

inline constexpr std::size_t kDefaultClusters = 8;
inline constexpr std::size_t kDefaultMaxBulkCells = 4096;
inline constexpr std::size_t kDefaultFitCells = 20000;
inline constexpr double kDefaultValFraction = 0.125;

struct Sample {
    ingest::SampleEntry entry;
    ingest::CellTable cells;
    ingest::ExpressionFrame expr;  // columns follow Dataset::genes
};

struct Dataset {
    ingest::DatasetDescriptor desc;
    std::vector<std::string> genes;
    std::vector<Sample> samples;
};

/// Loads every sample. Gene order: `genes` if given, else the manifest's gene
/// list, else the genes of the first sample. DatasetError if a sample lacks
/// one of them or the feature widths differ.
Dataset load_dataset(const std::filesystem::path& manifest,
                     const std::optional<std::vector<std::string>>& genes = std::nullopt);

/// One supervision unit: a spot or a whole bulk slide.
struct Unit {
    std::size_t sample = 0;
    ingest::Bag bag;
    std::vector<double> values;  // file space, aligned with Dataset::genes
    double x = 0.0;              // spot centre x (0 for bulk)
};

std::vector<Unit> make_units(const Dataset& data, std::size_t max_bulk_cells, std::uint64_t seed);

struct PrepOptions {
    bool normalize = true;
    std::size_t clusters = kDefaultClusters;
    std::size_t max_bulk_cells = kDefaultMaxBulkCells;
    std::size_t fit_cells = kDefaultFitCells;  // cap on cells used to fit PCA and k-means
    bool pca_per_sample = false;
    std::uint64_t seed = 0;
};

/// Fitted feature and target transforms.
struct Preprocessor {
    PrepOptions opt;
    std::size_t feature_width = 0;
    std::size_t d_model = 0;
    ingest::ValueSpace file_space = ingest::ValueSpace::raw_counts;
    std::optional<ingest::PcaModel> pca;  // shared basis; absent when F == D or per-sample
    std::optional<ingest::NormStats> norm;
    Tensor centroids;  // phenotype centroids in model-input space

    /// File-space values to the training space (log1p, then z-score).
    std::vector<double> to_training(std::span<const double> values) const;
    /// Training-space values back to log1p.
    std::vector<double> to_log1p(std::span<const double> values) const;
    /// File-space values to log1p.
    std::vector<double> file_to_log1p(std::span<const double> values) const;
    /// Model-input features of every cell of a sample.
    Tensor project(const ingest::CellTable& cells) const;
};

/// Fits PCA and phenotypes on the cells of `train_units`, and the target
/// statistics on their values.
Preprocessor fit_preprocessor(const Dataset& data, const std::vector<Unit>& units,
                              std::span<const std::size_t> train_units, const PrepOptions& opt, std::size_t d_model);

/// Re-fits only the target statistics, keeping the feature transforms.
Preprocessor refit_targets(const Preprocessor& base, const Dataset& data, const std::vector<Unit>& units,
                           std::span<const std::size_t> train_units);

void store_preprocessor(const Preprocessor& prep, train::Checkpoint& ckpt);
Preprocessor load_preprocessor(const train::Checkpoint& ckpt);

/// Model-ready bags for the chosen units. Targets are attached when the
/// units carry values; labels come from the phenotype centroids.
std::vector<mil::BagInput> build_inputs(const Dataset& data, const std::vector<Unit>& units,
                                        std::span<const std::size_t> which, const Preprocessor& prep,
                                        const mil::ModelConfig& cfg);

/// Seeded split of a unit pool into (train, val); val holds
/// max(1, round(fraction * n)) units. ContractError when n < 2.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_validation(std::span<const std::size_t> pool,
                                                                             double fraction, std::uint64_t seed);

nlohmann::json train_config_to_json(const train::TrainConfig& cfg);
train::TrainConfig train_config_from_json(const nlohmann::json& j);

struct TrainOptions {
    mil::ModelConfig model;
    train::TrainConfig train;
    PrepOptions prep;
    bool softplus = true;  // only honoured when targets stay in log1p
    double val_fraction = kDefaultValFraction;
};

struct TrainedModel {
    train::Checkpoint ckpt;
    train::FitResult fit;
    std::vector<std::size_t> train_units;
    std::vector<std::size_t> val_units;
};

/// Trains from scratch on `pool`, holding out a validation share of it.
TrainedModel train_model(const Dataset& data, const std::vector<Unit>& units, std::span<const std::size_t> pool,
                         const TrainOptions& opt, const train::EpochHook& hook = {});

enum class Direction { st2bulk, bulk2st };
std::string to_string(Direction d);
Direction parse_direction(const std::string& s);

struct FinetuneOptions {
    bool lora = true;  // false fine-tunes every weight
    std::size_t rank = train::kDefaultLoraRank;
    double alpha = train::kDefaultLoraAlpha;
    std::vector<std::string> targets = train::default_lora_targets();
    train::TrainConfig train;
    double val_fraction = kDefaultValFraction;
    std::optional<Direction> direction;
};

struct FinetunedModel {
    train::Checkpoint adapter;  // kind "lora": base tensors frozen plus adapters
    train::Checkpoint merged;   // kind "model"
    train::FitResult fit;
    std::vector<std::size_t> train_units;
    std::vector<std::size_t> val_units;
};

/// Re-heads the base to the target genes, attaches adapters and trains them
/// on `pool`. TransferError when the direction does not match the tasks.
FinetunedModel finetune_model(const train::Checkpoint& base, const Dataset& target, const std::vector<Unit>& units,
                              std::span<const std::size_t> pool, const FinetuneOptions& opt,
                              const train::EpochHook& hook = {});

/// Adaptation recorded in a checkpoint (empty for plain models).
train::Adaptation adaptation_of(const train::Checkpoint& ckpt);

struct UnitPrediction {
    std::string unit_id;
    std::vector<double> log1p;         // predicted expression, log1p space
    Tensor attention;                  // G x N over `cell_ids`
    std::vector<std::int64_t> cell_ids;
    Tensor coords;                     // N x 2
};

/// Predictions for the chosen units. The dataset's genes must equal the
/// checkpoint's.
std::vector<UnitPrediction> predict_units(const train::Checkpoint& ckpt, const Dataset& data,
                                          const std::vector<Unit>& units, std::span<const std::size_t> which,
                                          std::size_t threads);

/// Metrics in log1p space for the chosen units.
eval::EvalReport evaluate_units(const train::Checkpoint& ckpt, const Dataset& data, const std::vector<Unit>& units,
                                std::span<const std::size_t> which, std::size_t threads,
                                const std::string& fold = "all");

struct ProtocolRun {
    std::vector<eval::Fold> folds;
    std::vector<eval::EvalReport> reports;
    std::vector<train::FitResult> fits;
};

/// Trains a fresh model per fold and evaluates it on the held-out units.
ProtocolRun run_protocol(const Dataset& data, const std::vector<Unit>& units, eval::Protocol protocol,
                         const TrainOptions& opt);

/// Per-cell expression in count space: expm1 of the prediction (clamped at
/// 0) spread by the attention weights. N x G.
Tensor deconvolve_counts(const UnitPrediction& p);

}  // namespace bitro::pipeline
