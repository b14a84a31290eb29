// Copyright 2026 The bitro Authors
// SPDX-License-Identifier: Apache-2.0

#include "bitro/train/fit.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <string>
#include <thread>

#include "bitro/cluster/kmeans.hpp"
#include "bitro/error.hpp"
#include "bitro/mil/pool.hpp"
#include "bitro/rng.hpp"

namespace bitro::train {

using ad::Var;

void TrainConfig::validate() const {
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be positive");
    if (epochs > kMaxEpochs) throw ConfigError("epochs may not exceed " + std::to_string(kMaxEpochs));
    if (patience == 0) throw ConfigError("patience must be at least 1");
    if (lambda < 0.0 || !std::isfinite(lambda)) throw ConfigError("lambda must be >= 0");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
    if (clip < 0.0) throw ConfigError("clip must be >= 0");
}

Var gene_loss(Var pred, const Tensor& target) {
    if (pred.shape() != target.shape())
        throw DimensionError("prediction " + shape_str(pred.shape()) + " and target " + shape_str(target.shape()) +
                             " differ");
    Var diff = ad::sub(pred, pred.tape().constant(target));
    return ad::scale(ad::sum(ad::square(diff)), 1.0 / static_cast<double>(pred.rows()));
}

Var total_loss(Var pred, const Tensor& target, Var y_cell, std::span<const std::size_t> labels, double lambda) {
    if (lambda < 0.0) throw ConfigError("lambda must be >= 0");
    Var mse = gene_loss(pred, target);
    if (lambda == 0.0) return mse;
    if (!y_cell.valid()) throw ContractError("cluster regulariser needs cell predictions");
    return ad::add(mse, ad::scale(cluster::cluster_loss(y_cell, labels), lambda));
}

bool EarlyStopper::observe(double val_loss) {
    ++seen_;
    if (val_loss < best_) {
        best_ = val_loss;
        best_epoch_ = seen_;
        since_best_ = 0;
        return true;
    }
    ++since_best_;
    return false;
}

std::size_t resolve_threads(std::size_t requested) {
    std::size_t n = requested ? requested : std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("BITRO_THREADS")) {
        char* end = nullptr;
        const long cap = std::strtol(env, &end, 10);
        if (end == env || *end != '\0' || cap < 1)
            throw ConfigError(std::string("BITRO_THREADS must be a positive integer, got '") + env + "'");
        n = std::min(n, static_cast<std::size_t>(cap));
    }
    return std::max<std::size_t>(1, n);
}

namespace {

template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
    threads = std::min(threads, n);
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::atomic<bool> failed{false};
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t)
        pool.emplace_back([&] {
            for (std::size_t i; !failed && (i = next++) < n;) {
                try {
                    fn(i);
                } catch (...) {
                    if (!failed.exchange(true)) failure = std::current_exception();
                }
            }
        });
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
}

Tensor stack_targets(const std::vector<const mil::BagInput*>& bags, std::size_t genes) {
    Tensor t(Shape{bags.size(), genes});
    for (std::size_t r = 0; r < bags.size(); ++r) {
        const auto& y = *bags[r]->target;
        if (y.size() != genes)
            throw DimensionError("bag '" + bags[r]->unit_id + "' has " + std::to_string(y.size()) +
                                 " targets, model has " + std::to_string(genes) + " genes");
        std::copy(y.begin(), y.end(), t.row_span(r).begin());
    }
    return t;
}

}  // namespace

std::vector<mil::BagPrediction> predict_all(const ParamTree& params, const mil::ModelConfig& model,
                                            const Adaptation& adapt, const std::vector<mil::BagInput>& bags,
                                            std::size_t threads) {
    const ParamTree merged = adapt.empty() ? ParamTree{} : merge(params, adapt);
    const ParamTree& use = adapt.empty() ? params : merged;
    std::vector<mil::BagPrediction> out(bags.size());
    parallel_for(bags.size(), resolve_threads(threads),
                 [&](std::size_t i) { out[i] = mil::predict_bag(use, model, bags[i]); });
    return out;
}

double evaluate_loss(const ParamTree& params, const mil::ModelConfig& model, const Adaptation& adapt,
                     const std::vector<mil::BagInput>& bags, std::size_t threads) {
    if (bags.empty()) throw ContractError("no bags to evaluate");
    const auto preds = predict_all(params, model, adapt, bags, threads);
    double total = 0.0;
    for (std::size_t i = 0; i < bags.size(); ++i) {
        if (!bags[i].target) throw ContractError("bag '" + bags[i].unit_id + "' has no target");
        const auto& y = *bags[i].target;
        double s = 0.0;
        for (std::size_t g = 0; g < y.size(); ++g) s += (preds[i].y[g] - y[g]) * (preds[i].y[g] - y[g]);
        total += s;
    }
    return total / static_cast<double>(bags.size());
}

FitResult fit(ParamTree params, const mil::ModelConfig& model, const Adaptation& adapt,
              const std::vector<mil::BagInput>& train_bags, const std::vector<mil::BagInput>& val_bags,
              const TrainConfig& cfg, const EpochHook& hook) {
    cfg.validate();
    if (train_bags.empty()) throw DatasetError("no training bags");
    if (val_bags.empty()) throw DatasetError("no validation bags");
    for (const auto* set : {&train_bags, &val_bags})
        for (const auto& b : *set)
            if (!b.target) throw ContractError("bag '" + b.unit_id + "' has no target");
    if (cfg.lambda > 0.0)
        for (const auto& b : train_bags)
            if (b.labels.size() != b.size())
                throw ContractError("bag '" + b.unit_id + "' lacks phenotype labels needed for lambda > 0");

    AdamState adam;
    adam.config.lr = cfg.lr;
    adam.config.clip_norm = cfg.clip;
    Rng shuffle_rng(mix_seed(cfg.seed, fnv1a("shuffle")));
    Rng dropout_rng(mix_seed(cfg.seed, fnv1a("dropout")));
    const std::size_t batch = cfg.effective_batch();

    FitResult result;
    result.params = params;
    EarlyStopper stopper(cfg.patience);
    std::vector<std::size_t> order(train_bags.size());
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        shuffle_rng.shuffle(order);
        double loss_sum = 0.0;
        std::size_t steps = 0;
        for (std::size_t b0 = 0; b0 < order.size(); b0 += batch) {
            ++steps;
            ad::Tape tape;
            Bound bound = bind_model(params, tape, adapt);
            std::vector<Var> preds, cells;
            std::vector<std::size_t> labels;
            std::vector<const mil::BagInput*> members;
            mil::ForwardOptions fo{cfg.dropout, &dropout_rng};
            for (std::size_t j = b0; j < std::min(order.size(), b0 + batch); ++j) {
                const auto& bag = train_bags[order[j]];
                members.push_back(&bag);
                auto f = mil::forward_bag(bound, model, bag, fo);
                preds.push_back(f.pred);
                if (cfg.lambda > 0.0) {
                    cells.push_back(mil::deconvolve(f.attention, f.pred));
                    labels.insert(labels.end(), bag.labels.begin(), bag.labels.end());
                }
            }
            Var pred = preds.size() == 1 ? preds[0] : ad::concat_rows(preds);
            Var y_cell = cells.empty() ? Var{} : (cells.size() == 1 ? cells[0] : ad::concat_rows(cells));
            Var loss = total_loss(pred, stack_targets(members, model.genes), y_cell, labels, cfg.lambda);
            const double lv = loss.value().item();
            if (!std::isfinite(lv))
                throw TrainError("non-finite loss at epoch " + std::to_string(epoch) + " step " +
                                 std::to_string(steps));
            tape.backward(loss);
            adam_step(params, bound.grads(params), adam);
            loss_sum += lv;
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(steps);
        rec.val_loss = evaluate_loss(params, model, adapt, val_bags, cfg.threads);
        if (!std::isfinite(rec.val_loss))
            throw TrainError("non-finite validation loss after epoch " + std::to_string(epoch));
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.history.push_back(rec);
        if (stopper.observe(rec.val_loss)) {
            result.params = params;
            result.best_epoch = epoch;
            result.best_val = rec.val_loss;
        }
        if (hook) hook(rec, params);
        if (stopper.should_stop()) break;
    }
    return result;
}

}  // namespace bitro::train
