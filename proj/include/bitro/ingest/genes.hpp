// Copyright 2026 The bitro Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bitro/ingest/dataset.hpp"

namespace bitro::ingest {

inline constexpr std::size_t kDefaultHvgBins = 20;
inline constexpr double kZscoreEps = 1e-8;

std::vector<std::string> default_excluded_prefixes();

struct GeneDispersion {
    std::string gene;
    double mean = 0.0;
    double dispersion = 0.0;  // variance / mean, 0 when the mean is 0
    double z = 0.0;
    std::size_t bin = 0;
    bool flagged = false;  // bin had zero dispersion spread, z forced to 0
};

/// Per-gene dispersion z-scores within equal-occupancy mean-expression bins.
/// Genes are ranked by (mean, name) and bin b holds ranks
/// [b*G/n_bins, (b+1)*G/n_bins). Population statistics throughout.
/// Requires log1p values.
std::vector<GeneDispersion> dispersion_scores(const ExpressionFrame& expr, std::size_t n_bins = kDefaultHvgBins);

struct HvgSelection {
    std::vector<std::string> candidates;   // sorted by name
    std::map<std::string, double> best_z;  // max z over samples, candidates only
    std::size_t flagged_bins = 0;
};

/// Per sample, the top_k genes by z (ties by name) after dropping excluded
/// prefixes; the union over samples is the candidate set.
HvgSelection select_hvgs(const std::vector<ExpressionFrame>& per_sample, std::size_t n_bins, std::size_t top_k,
                         const std::vector<std::string>& excluded_prefixes = default_excluded_prefixes());

/// Candidates that are both among the top K by pooled mean and among the top
/// K by pooled SD (ranked within the candidates, ties by name). If `cap` is
/// set and the intersection is larger, the cap genes with the highest best_z
/// are kept. Result sorted by name. DatasetError on an empty intersection.
std::vector<std::string> final_gene_set(const std::vector<std::string>& candidates,
                                        const std::vector<ExpressionFrame>& frames, std::size_t k,
                                        std::optional<std::size_t> cap = std::nullopt,
                                        const std::map<std::string, double>& best_z = {});

struct NormStats {
    std::vector<std::string> genes;
    std::vector<double> mu;
    std::vector<double> sigma;
    double eps = kZscoreEps;
};

/// log1p of raw counts; frames already in log1p are returned unchanged.
ExpressionFrame to_log1p(const ExpressionFrame& expr);

/// Per-gene mean and population SD of log1p values.
NormStats fit_norm_stats(const std::vector<ExpressionFrame>& frames);

/// log1p if raw, then (y - mu) / (sigma + eps). Stats are fitted on `expr`
/// when absent. ContractError if `expr` is already z-scored.
std::pair<ExpressionFrame, NormStats> normalize_expression(const ExpressionFrame& expr,
                                                           const std::optional<NormStats>& stats);

/// Back to log1p space: y * (sigma + eps) + mu.
Tensor denormalize(const Tensor& values, const NormStats& stats);
std::vector<double> denormalize_row(std::span<const double> row, const NormStats& stats);

/// norm_stats.tsv: header "gene\tmu\tsigma".
void write_norm_stats(const std::filesystem::path& path, const NormStats& stats);
NormStats read_norm_stats(const std::filesystem::path& path);

}  // namespace bitro::ingest
