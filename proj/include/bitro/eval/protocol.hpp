// Copyright 2026 The bitro Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace bitro::eval {

enum class Protocol { loo, split_4_1, spatial_5fold };

std::string to_string(Protocol p);
Protocol parse_protocol(const std::string& s);

inline constexpr std::size_t kSpatialFolds = 5;

/// Held-out and training unit indices of one fold, over a flat unit list.
struct Fold {
    std::string name;
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// Sample-level folds. `sample_of_unit[u]` is the sample index of unit u.
/// loo: one fold per sample. split_4_1: one seeded fold holding out
/// round(n/5) samples, at least one. ProtocolError with fewer than 2 samples.
std::vector<Fold> sample_folds(Protocol p, std::span<const std::size_t> sample_of_unit, std::size_t n_samples,
                               std::uint64_t seed);

/// Interior strip boundaries at the x-quantiles 1/n ... (n-1)/n of `cell_x`.
std::vector<double> strip_boundaries(std::span<const double> cell_x, std::size_t n = kSpatialFolds);

/// Strip index of x: the number of boundaries <= x.
std::size_t strip_of(double x, std::span<const double> boundaries);

/// Spatial folds: fold k holds out every unit whose x lies in strip k of its
/// own sample. `cell_x[s]` holds the cell x-coordinates of sample s.
std::vector<Fold> spatial_folds(std::span<const std::size_t> sample_of_unit, std::span<const double> unit_x,
                                const std::vector<std::vector<double>>& cell_x, std::size_t n = kSpatialFolds);

/// Linear-interpolated quantile, q in [0, 1].
double quantile(std::vector<double> values, double q);

}  // namespace bitro::eval
