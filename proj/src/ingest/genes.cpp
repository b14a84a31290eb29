// Copyright 2026 The bitro Authors
// SPDX-License-Identifier: Apache-2.0

#include "bitro/ingest/genes.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "bitro/error.hpp"
#include "bitro/ingest/tsv.hpp"

namespace bitro::ingest {

std::vector<std::string> default_excluded_prefixes() { return {"MT-", "RPS", "RPL"}; }

namespace {

void column_moments(const std::vector<const Tensor*>& parts, std::size_t g, std::vector<double>& mean,
                    std::vector<double>& var) {
    mean.assign(g, 0.0);
    var.assign(g, 0.0);
    std::size_t m = 0;
    const Tensor* first = nullptr;
    for (const Tensor* t : parts) {
        m += t->rows();
        if (!first && t->rows() > 0) first = t;
    }
    if (m == 0) throw DatasetError("no expression units");
    // Shift by the first row so a constant column has an exact mean.
    std::vector<double> shift(g), acc(g, 0.0);
    for (std::size_t j = 0; j < g; ++j) shift[j] = (*first)(0, j);
    for (const Tensor* t : parts)
        for (std::size_t r = 0; r < t->rows(); ++r)
            for (std::size_t j = 0; j < g; ++j) acc[j] += (*t)(r, j) - shift[j];
    for (std::size_t j = 0; j < g; ++j) mean[j] = shift[j] + acc[j] / static_cast<double>(m);
    for (const Tensor* t : parts)
        for (std::size_t r = 0; r < t->rows(); ++r)
            for (std::size_t j = 0; j < g; ++j) var[j] += ((*t)(r, j) - mean[j]) * ((*t)(r, j) - mean[j]);
    for (double& v : var) v /= static_cast<double>(m);
}

bool excluded(const std::string& gene, const std::vector<std::string>& prefixes) {
    return std::any_of(prefixes.begin(), prefixes.end(),
                       [&](const std::string& p) { return gene.rfind(p, 0) == 0; });
}

// Indices of the top k entries by score descending, ties by name ascending.
std::vector<std::size_t> top_k(const std::vector<double>& score, const std::vector<std::string>& names,
                               std::size_t k) {
    std::vector<std::size_t> idx(score.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (score[a] != score[b]) return score[a] > score[b];
        return names[a] < names[b];
    });
    idx.resize(std::min(k, idx.size()));
    return idx;
}

}  // namespace

std::vector<GeneDispersion> dispersion_scores(const ExpressionFrame& expr, std::size_t n_bins) {
    if (n_bins == 0) throw ConfigError("n_bins must be >= 1");
    if (expr.space != ValueSpace::log1p) throw ContractError("dispersion scores need log1p expression");
    const std::size_t g = expr.genes.size();
    std::vector<double> mean, var;
    column_moments({&expr.values}, g, mean, var);
    std::vector<GeneDispersion> out(g);
    for (std::size_t j = 0; j < g; ++j) {
        out[j].gene = expr.genes[j];
        out[j].mean = mean[j];
        out[j].dispersion = mean[j] > 0.0 ? var[j] / mean[j] : 0.0;
    }
    std::vector<std::size_t> rank(g);
    std::iota(rank.begin(), rank.end(), 0);
    std::sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t b) {
        if (mean[a] != mean[b]) return mean[a] < mean[b];
        return expr.genes[a] < expr.genes[b];
    });
    const std::size_t bins = std::min(n_bins, g);
    for (std::size_t r = 0; r < g; ++r) out[rank[r]].bin = r * bins / g;
    for (std::size_t b = 0; b < bins; ++b) {
        std::vector<std::size_t> members;
        for (std::size_t j = 0; j < g; ++j)
            if (out[j].bin == b) members.push_back(j);
        double mu = 0.0, sd = 0.0;
        for (std::size_t j : members) mu += out[j].dispersion;
        mu /= static_cast<double>(members.size());
        for (std::size_t j : members) sd += (out[j].dispersion - mu) * (out[j].dispersion - mu);
        sd = std::sqrt(sd / static_cast<double>(members.size()));
        for (std::size_t j : members) {
            if (sd > 1e-12 * std::max(1.0, std::fabs(mu))) {
                out[j].z = (out[j].dispersion - mu) / sd;
            } else {
                out[j].z = 0.0;
                out[j].flagged = true;
            }
        }
    }
    return out;
}

HvgSelection select_hvgs(const std::vector<ExpressionFrame>& per_sample, std::size_t n_bins, std::size_t top,
                         const std::vector<std::string>& prefixes) {
    if (per_sample.empty()) throw DatasetError("no samples for HVG selection");
    HvgSelection sel;
    std::set<std::string> pool;
    for (const auto& frame : per_sample) {
        const auto scores = dispersion_scores(frame, n_bins);
        std::set<std::size_t> flagged_bins;
        std::vector<double> z;
        std::vector<std::string> names;
        for (const auto& s : scores) {
            if (s.flagged) flagged_bins.insert(s.bin);
            if (excluded(s.gene, prefixes)) continue;
            z.push_back(s.z);
            names.push_back(s.gene);
        }
        sel.flagged_bins += flagged_bins.size();
        for (std::size_t i : top_k(z, names, top)) {
            pool.insert(names[i]);
            auto [it, fresh] = sel.best_z.emplace(names[i], z[i]);
            if (!fresh) it->second = std::max(it->second, z[i]);
        }
    }
    sel.candidates.assign(pool.begin(), pool.end());
    return sel;
}

std::vector<std::string> final_gene_set(const std::vector<std::string>& candidates,
                                        const std::vector<ExpressionFrame>& frames, std::size_t k,
                                        std::optional<std::size_t> cap, const std::map<std::string, double>& best_z) {
    if (candidates.empty()) throw DatasetError("no candidate genes");
    if (k == 0) throw ConfigError("K must be positive");
    std::vector<Tensor> cols;
    std::vector<const Tensor*> parts;
    for (const auto& f : frames) cols.push_back(to_log1p(f).select_genes(candidates).values);
    for (const auto& c : cols) parts.push_back(&c);
    std::vector<double> mean, var;
    column_moments(parts, candidates.size(), mean, var);
    std::vector<double> sd(var.size());
    for (std::size_t j = 0; j < var.size(); ++j) sd[j] = std::sqrt(var[j]);
    const auto by_mean = top_k(mean, candidates, k), by_sd = top_k(sd, candidates, k);
    const std::set<std::size_t> sd_set(by_sd.begin(), by_sd.end());
    std::vector<std::string> out;
    for (std::size_t i : by_mean)
        if (sd_set.count(i)) out.push_back(candidates[i]);
    if (out.empty())
        throw DatasetError("top-" + std::to_string(k) +
                           " by mean and by SD do not intersect; try a larger K");
    if (cap && out.size() > *cap) {
        std::vector<double> z;
        for (const auto& g : out) {
            auto it = best_z.find(g);
            z.push_back(it == best_z.end() ? -INFINITY : it->second);
        }
        std::vector<std::string> kept;
        for (std::size_t i : top_k(z, out, *cap)) kept.push_back(out[i]);
        out = std::move(kept);
    }
    std::sort(out.begin(), out.end());
    return out;
}

ExpressionFrame to_log1p(const ExpressionFrame& expr) {
    if (expr.space == ValueSpace::log1p) return expr;
    if (expr.space == ValueSpace::zscore) throw ContractError("expression is already z-scored");
    ExpressionFrame out = expr;
    for (double& v : out.values.data()) {
        if (v < 0.0) throw DatasetError("negative count in raw expression");
        v = std::log1p(v);
    }
    out.space = ValueSpace::log1p;
    return out;
}

NormStats fit_norm_stats(const std::vector<ExpressionFrame>& frames) {
    if (frames.empty()) throw DatasetError("no expression to fit normalisation on");
    NormStats s;
    s.genes = frames[0].genes;
    std::vector<ExpressionFrame> logs;
    for (const auto& f : frames) {
        if (f.genes != s.genes) throw DatasetError("expression tables disagree on gene order");
        logs.push_back(to_log1p(f));
    }
    std::vector<const Tensor*> parts;
    for (const auto& l : logs) parts.push_back(&l.values);
    std::vector<double> var;
    column_moments(parts, s.genes.size(), s.mu, var);
    s.sigma.resize(var.size());
    for (std::size_t j = 0; j < var.size(); ++j) s.sigma[j] = std::sqrt(var[j]);
    return s;
}

std::pair<ExpressionFrame, NormStats> normalize_expression(const ExpressionFrame& expr,
                                                           const std::optional<NormStats>& stats) {
    if (expr.space == ValueSpace::zscore) throw ContractError("expression is already z-scored");
    ExpressionFrame out = to_log1p(expr);
    NormStats s = stats ? *stats : fit_norm_stats({out});
    if (s.genes != out.genes) throw DatasetError("normalisation stats were fitted on a different gene list");
    for (std::size_t r = 0; r < out.units(); ++r)
        for (std::size_t j = 0; j < s.genes.size(); ++j)
            out.values(r, j) = (out.values(r, j) - s.mu[j]) / (s.sigma[j] + s.eps);
    out.space = ValueSpace::zscore;
    return {std::move(out), std::move(s)};
}

std::vector<double> denormalize_row(std::span<const double> row, const NormStats& s) {
    if (row.size() != s.mu.size()) throw DimensionError("row width does not match normalisation stats");
    std::vector<double> out(row.size());
    for (std::size_t j = 0; j < row.size(); ++j) out[j] = row[j] * (s.sigma[j] + s.eps) + s.mu[j];
    return out;
}

Tensor denormalize(const Tensor& values, const NormStats& s) {
    Tensor out(values.shape());
    for (std::size_t r = 0; r < values.rows(); ++r) {
        const auto row = denormalize_row(values.row_span(r), s);
        std::copy(row.begin(), row.end(), out.row_span(r).begin());
    }
    return out;
}

void write_norm_stats(const std::filesystem::path& path, const NormStats& s) {
    std::string out = "gene\tmu\tsigma\n";
    for (std::size_t j = 0; j < s.genes.size(); ++j)
        out += s.genes[j] + '\t' + format_double(s.mu[j]) + '\t' + format_double(s.sigma[j]) + '\n';
    write_text(path, out);
}

NormStats read_norm_stats(const std::filesystem::path& path) {
    const auto lines = read_lines(path);
    if (lines.empty() || lines[0] != "gene\tmu\tsigma")
        throw ParseError(path.string() + ": header must be gene, mu, sigma");
    NormStats s;
    for (std::size_t r = 1; r < lines.size(); ++r) {
        const std::string lw = path.string() + ":" + std::to_string(r + 1);
        const auto cols = split_tabs(lines[r]);
        if (cols.size() != 3) throw ParseError(lw + ": expected 3 columns");
        s.genes.emplace_back(cols[0]);
        s.mu.push_back(parse_double(cols[1], lw));
        const double sg = parse_double(cols[2], lw);
        if (sg < 0.0) throw ParseError(lw + ": sigma must be >= 0");
        s.sigma.push_back(sg);
    }
    return s;
}

}  // namespace bitro::ingest
