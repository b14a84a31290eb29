// Copyright 2026 The bitro Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "bitro/numerics/tensor.hpp"
#include "json.hpp"

namespace bitro::eval {

inline constexpr double kJsEps = 1e-12;

/// Pearson correlation across genes of one unit. NaN if either side is
/// constant; MetricError if fewer than two genes.
double pcc_overall(std::span<const double> y, std::span<const double> y_hat);

/// Column-wise Pearson correlation across units; NaN for constant columns.
std::vector<double> pcc_gene(const Tensor& y, const Tensor& y_hat);

/// Jensen-Shannon divergence (natural log) after clamping negatives to 0,
/// adding kJsEps and renormalising. MetricError on an all-zero input.
double js_divergence(std::span<const double> p, std::span<const double> q);

struct Stat {
    double mean = 0.0;
    double sd = 0.0;  // sample SD, 0 when fewer than two values
    std::size_t count = 0;
    std::size_t skipped = 0;  // NaN entries left out
};

Stat summarize(std::span<const double> values);

struct EvalReport {
    std::string fold;
    std::vector<std::string> unit_ids;
    std::vector<std::string> genes;
    std::vector<double> per_unit_pcc;
    std::vector<double> per_unit_js;
    std::vector<double> per_gene_pcc;

    Stat unit_pcc() const { return summarize(per_unit_pcc); }
    Stat unit_js() const { return summarize(per_unit_js); }
    Stat gene_pcc() const { return summarize(per_gene_pcc); }
};

/// Metrics of M units by G genes; rows of truth and prediction are aligned.
EvalReport evaluate(const Tensor& truth, const Tensor& prediction, std::vector<std::string> unit_ids,
                    std::vector<std::string> genes, std::string fold = "all");

/// Pooled statistics over all folds plus the spread of fold means.
nlohmann::json summary_json(const std::vector<EvalReport>& folds);

void write_eval_report(const std::filesystem::path& path, const std::vector<EvalReport>& folds);

}  // namespace bitro::eval
