// Copyright 2026 The bitro Authors
// SPDX-License-Identifier: Apache-2.0

#include "bitro/eval/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bitro/error.hpp"
#include "bitro/rng.hpp"

namespace bitro::eval {

std::string to_string(Protocol p) {
    switch (p) {
        case Protocol::loo: return "loo";
        case Protocol::split_4_1: return "split_4_1";
        case Protocol::spatial_5fold: return "spatial_5fold";
    }
    return "?";
}

Protocol parse_protocol(const std::string& s) {
    if (s == "loo") return Protocol::loo;
    if (s == "split_4_1") return Protocol::split_4_1;
    if (s == "spatial_5fold") return Protocol::spatial_5fold;
    throw ConfigError("unknown protocol '" + s + "' (expected loo, split_4_1 or spatial_5fold)");
}

std::vector<Fold> sample_folds(Protocol p, std::span<const std::size_t> sample_of_unit, std::size_t n_samples,
                               std::uint64_t seed) {
    if (p == Protocol::spatial_5fold) throw ContractError("spatial folds need coordinates");
    if (n_samples < 2)
        throw ProtocolError(to_string(p) + " needs at least 2 samples, got " + std::to_string(n_samples));
    std::vector<std::vector<bool>> held;
    std::vector<std::string> names;
    if (p == Protocol::loo) {
        for (std::size_t s = 0; s < n_samples; ++s) {
            held.emplace_back(n_samples, false);
            held.back()[s] = true;
            names.push_back("loo" + std::to_string(s));
        }
    } else {
        std::vector<std::size_t> order(n_samples);
        std::iota(order.begin(), order.end(), 0);
        Rng rng(mix_seed(seed, fnv1a("split_4_1")));
        rng.shuffle(order);
        const auto n_test = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(n_samples / 5.0)));
        held.emplace_back(n_samples, false);
        for (std::size_t i = 0; i < n_test; ++i) held.back()[order[i]] = true;
        names.push_back("split");
    }
    std::vector<Fold> folds;
    for (std::size_t f = 0; f < held.size(); ++f) {
        Fold fold{names[f], {}, {}};
        for (std::size_t u = 0; u < sample_of_unit.size(); ++u) {
            if (sample_of_unit[u] >= n_samples) throw ContractError("unit sample index out of range");
            (held[f][sample_of_unit[u]] ? fold.test : fold.train).push_back(u);
        }
        folds.push_back(std::move(fold));
    }
    return folds;
}

double quantile(std::vector<double> values, double q) {
    if (values.empty()) throw ContractError("quantile of an empty set");
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::vector<double> strip_boundaries(std::span<const double> cell_x, std::size_t n) {
    if (n < 2) throw ConfigError("need at least 2 strips");
    std::vector<double> xs(cell_x.begin(), cell_x.end());
    std::vector<double> out;
    for (std::size_t k = 1; k < n; ++k) out.push_back(quantile(xs, static_cast<double>(k) / static_cast<double>(n)));
    return out;
}

std::size_t strip_of(double x, std::span<const double> boundaries) {
    return static_cast<std::size_t>(std::upper_bound(boundaries.begin(), boundaries.end(), x) - boundaries.begin());
}

std::vector<Fold> spatial_folds(std::span<const std::size_t> sample_of_unit, std::span<const double> unit_x,
                                const std::vector<std::vector<double>>& cell_x, std::size_t n) {
    if (sample_of_unit.size() != unit_x.size()) throw DimensionError("spatial_folds: unit arrays differ in length");
    std::vector<std::vector<double>> bounds;
    for (const auto& xs : cell_x) bounds.push_back(xs.empty() ? std::vector<double>{} : strip_boundaries(xs, n));
    std::vector<Fold> folds(n);
    for (std::size_t k = 0; k < n; ++k) folds[k].name = "strip" + std::to_string(k);
    for (std::size_t u = 0; u < unit_x.size(); ++u) {
        const std::size_t s = sample_of_unit[u];
        if (s >= bounds.size() || bounds[s].empty()) throw ContractError("unit sample has no cells");
        const std::size_t k = strip_of(unit_x[u], bounds[s]);
        for (std::size_t f = 0; f < n; ++f) (f == k ? folds[f].test : folds[f].train).push_back(u);
    }
    for (const auto& f : folds)
        if (f.test.empty() || f.train.empty())
            throw ProtocolError("spatial strip " + f.name + " leaves an empty train or test set");
    return folds;
}

}  // namespace bitro::eval
