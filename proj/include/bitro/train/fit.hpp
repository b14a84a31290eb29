// Copyright 2026 The bitro Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "bitro/mil/model.hpp"
#include "bitro/train/lora.hpp"

namespace bitro::train {

inline constexpr std::size_t kDefaultPatience = 6;
inline constexpr std::size_t kMaxEpochs = 100;
inline constexpr double kDefaultLambda = 0.3;

enum class Task { spot, bulk };

struct TrainConfig {
    double lr = 1e-4;
    std::size_t epochs = kMaxEpochs;
    std::size_t patience = kDefaultPatience;
    double clip = 1.0;
    double lambda = kDefaultLambda;
    double dropout = 0.0;
    std::uint64_t seed = 0;
    /// Bags per optimiser step; 0 picks 32 for spot tasks and 1 for bulk.
    std::size_t batch_size = 0;
    Task task = Task::spot;
    /// Worker threads for validation; 0 means hardware concurrency.
    std::size_t threads = 1;

    /// Throws ConfigError when a value is outside the supported ranges.
    void validate() const;
    std::size_t effective_batch() const { return batch_size ? batch_size : (task == Task::spot ? 32 : 1); }
};

/// (1/M) sum_m ||pred_m - target_m||^2 + lambda * cluster_loss(y_cell, labels).
/// With lambda == 0 the regulariser is not evaluated and the result is the
/// squared-error term exactly. `y_cell` may be invalid when lambda == 0.
ad::Var total_loss(ad::Var pred, const Tensor& target, ad::Var y_cell, std::span<const std::size_t> labels,
                   double lambda);

/// Squared-error term alone, the validation criterion.
ad::Var gene_loss(ad::Var pred, const Tensor& target);

/// Patience rule on validation loss: an epoch improves only if strictly below
/// the best so far; training stops once `patience` epochs pass without one.
class EarlyStopper {
public:
    explicit EarlyStopper(std::size_t patience = kDefaultPatience) : patience_(patience) {}

    /// Records an epoch's loss (epochs count from 1); true if it is a new best.
    bool observe(double val_loss);
    bool should_stop() const { return since_best_ >= patience_; }
    std::size_t best_epoch() const { return best_epoch_; }
    double best_loss() const { return best_; }
    std::size_t epochs_seen() const { return seen_; }

private:
    std::size_t patience_;
    std::size_t seen_ = 0;
    std::size_t best_epoch_ = 0;
    std::size_t since_best_ = 0;
    double best_ = std::numeric_limits<double>::infinity();
};

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double seconds = 0.0;
};

struct FitResult {
    ParamTree params;  // weights of the best validation epoch (still adapted)
    std::vector<EpochRecord> history;
    std::size_t best_epoch = 0;
    double best_val = std::numeric_limits<double>::infinity();
};

/// Optional per-epoch observer, called after validation with the current
/// (not best) parameters.
using EpochHook = std::function<void(const EpochRecord&, const ParamTree&)>;

/// Adam with global-norm clipping over shuffled batches; validation after
/// every epoch; early stopping. Bags must be prepared and carry targets.
/// Throws TrainError naming the epoch and step on a non-finite loss.
FitResult fit(ParamTree params, const mil::ModelConfig& model, const Adaptation& adapt,
              const std::vector<mil::BagInput>& train_bags, const std::vector<mil::BagInput>& val_bags,
              const TrainConfig& cfg, const EpochHook& hook = {});

/// Mean squared-error term over bags, evaluated in parallel.
double evaluate_loss(const ParamTree& params, const mil::ModelConfig& model, const Adaptation& adapt,
                     const std::vector<mil::BagInput>& bags, std::size_t threads);

/// Predictions for every bag with adaptation applied, in parallel.
std::vector<mil::BagPrediction> predict_all(const ParamTree& params, const mil::ModelConfig& model,
                                            const Adaptation& adapt, const std::vector<mil::BagInput>& bags,
                                            std::size_t threads);

/// Worker count from a request (0 = hardware) capped by BITRO_THREADS.
std::size_t resolve_threads(std::size_t requested);

}  // namespace bitro::train
