// Copyright 2026 The bitro Authors
// SPDX-License-Identifier: Apache-2.0

#include "bitro/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "bitro/error.hpp"
#include "bitro/ingest/tsv.hpp"

namespace bitro::eval {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double pearson(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = x.size();
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx <= 0.0 || syy <= 0.0) return kNaN;
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> simplex(std::span<const double> p) {
    std::vector<double> out(p.size());
    double clamped = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (std::isnan(p[i])) throw MetricError("NaN in a distribution");
        out[i] = std::max(p[i], 0.0);
        clamped += out[i];
    }
    if (!(clamped > 0.0)) throw MetricError("distribution is all zero after clamping");
    double total = 0.0;
    for (double& v : out) total += (v += kJsEps);
    for (double& v : out) v /= total;
    return out;
}

std::string fmt(double v) { return std::isnan(v) ? "nan" : ingest::format_double(v); }

nlohmann::json stat_json(const Stat& s) {
    return {{"mean", s.count ? nlohmann::json(s.mean) : nlohmann::json(nullptr)},
            {"sd", s.sd},
            {"count", s.count},
            {"skipped", s.skipped}};
}

}  // namespace

double pcc_overall(std::span<const double> y, std::span<const double> y_hat) {
    if (y.size() != y_hat.size()) throw DimensionError("pcc_overall: length mismatch");
    if (y.size() < 2) throw MetricError("pcc_overall needs at least 2 genes");
    return pearson(y, y_hat);
}

std::vector<double> pcc_gene(const Tensor& y, const Tensor& y_hat) {
    if (y.shape() != y_hat.shape() || y.rank() != 2) throw DimensionError("pcc_gene: shape mismatch");
    const std::size_t m = y.rows(), g = y.cols();
    std::vector<double> out(g, kNaN);
    if (m < 2) return out;
    std::vector<double> a(m), b(m);
    for (std::size_t j = 0; j < g; ++j) {
        for (std::size_t i = 0; i < m; ++i) {
            a[i] = y(i, j);
            b[i] = y_hat(i, j);
        }
        out[j] = pearson(a, b);
    }
    return out;
}

double js_divergence(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) throw DimensionError("js_divergence: length mismatch");
    if (p.empty()) throw MetricError("js_divergence of empty vectors");
    const auto a = simplex(p), b = simplex(q);
    double js = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double m = 0.5 * (a[i] + b[i]);
        js += 0.5 * a[i] * std::log(a[i] / m) + 0.5 * b[i] * std::log(b[i] / m);
    }
    return std::clamp(js, 0.0, std::log(2.0));
}

Stat summarize(std::span<const double> values) {
    Stat s;
    for (double v : values) {
        if (std::isnan(v)) {
            ++s.skipped;
            continue;
        }
        s.mean += v;
        ++s.count;
    }
    if (s.count == 0) return s;
    s.mean /= static_cast<double>(s.count);
    if (s.count < 2) return s;
    double ss = 0.0;
    for (double v : values)
        if (!std::isnan(v)) ss += (v - s.mean) * (v - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(s.count - 1));
    return s;
}

EvalReport evaluate(const Tensor& truth, const Tensor& prediction, std::vector<std::string> unit_ids,
                    std::vector<std::string> genes, std::string fold) {
    if (truth.shape() != prediction.shape() || truth.rank() != 2)
        throw DimensionError("evaluate: truth and prediction shapes differ");
    if (unit_ids.size() != truth.rows() || genes.size() != truth.cols())
        throw DimensionError("evaluate: labels do not match the matrix");
    EvalReport r;
    r.fold = std::move(fold);
    r.unit_ids = std::move(unit_ids);
    r.genes = std::move(genes);
    for (std::size_t i = 0; i < truth.rows(); ++i) {
        r.per_unit_pcc.push_back(pcc_overall(truth.row_span(i), prediction.row_span(i)));
        r.per_unit_js.push_back(js_divergence(truth.row_span(i), prediction.row_span(i)));
    }
    r.per_gene_pcc = pcc_gene(truth, prediction);
    return r;
}

nlohmann::json summary_json(const std::vector<EvalReport>& folds) {
    std::vector<double> up, uj, gp, fold_up, fold_gp;
    nlohmann::json per_fold = nlohmann::json::array();
    for (const auto& f : folds) {
        up.insert(up.end(), f.per_unit_pcc.begin(), f.per_unit_pcc.end());
        uj.insert(uj.end(), f.per_unit_js.begin(), f.per_unit_js.end());
        gp.insert(gp.end(), f.per_gene_pcc.begin(), f.per_gene_pcc.end());
        const Stat a = f.unit_pcc(), b = f.gene_pcc();
        fold_up.push_back(a.count ? a.mean : kNaN);
        fold_gp.push_back(b.count ? b.mean : kNaN);
        per_fold.push_back({{"fold", f.fold},
                            {"units", f.unit_ids.size()},
                            {"pcc_overall", stat_json(a)},
                            {"pcc_gene", stat_json(b)},
                            {"js", stat_json(f.unit_js())}});
    }
    return {{"pcc_overall", stat_json(summarize(up))},
            {"pcc_gene", stat_json(summarize(gp))},
            {"js", stat_json(summarize(uj))},
            {"fold_pcc_overall", stat_json(summarize(fold_up))},
            {"fold_pcc_gene", stat_json(summarize(fold_gp))},
            {"folds", per_fold}};
}

void write_eval_report(const std::filesystem::path& path, const std::vector<EvalReport>& folds) {
    std::ostringstream s;
    s << "fold\tkind\tid\tpcc\tjs\n";
    for (const auto& f : folds) {
        for (std::size_t i = 0; i < f.unit_ids.size(); ++i)
            s << f.fold << "\tunit\t" << f.unit_ids[i] << '\t' << fmt(f.per_unit_pcc[i]) << '\t'
              << fmt(f.per_unit_js[i]) << '\n';
        for (std::size_t j = 0; j < f.genes.size(); ++j)
            s << f.fold << "\tgene\t" << f.genes[j] << '\t' << fmt(f.per_gene_pcc[j]) << "\t\n";
    }
    ingest::write_text(path, s.str());
}

}  // namespace bitro::eval
