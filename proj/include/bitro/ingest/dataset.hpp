// Copyright 2026 The bitro Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bitro/numerics/tensor.hpp"

namespace bitro::ingest {

enum class TaskKind { bulk, spot };
enum class ValueSpace { raw_counts, log1p, zscore };

std::string to_string(TaskKind t);
std::string to_string(ValueSpace v);
TaskKind parse_task(const std::string& s);
ValueSpace parse_space(const std::string& s);

inline constexpr double kDefaultPatchPx = 224.0;

struct SampleEntry {
    std::string id;
    std::filesystem::path cells;
    std::filesystem::path expr;
};

/// manifest.json:
///   {"task": "bulk"|"spot", "genes": path, "patch_px": number,
///    "values": "raw_counts"|"log1p" (optional, default raw_counts),
///    "samples": [{"id", "cells", "expr"}]}
/// Relative paths resolve against the manifest's directory.
struct DatasetDescriptor {
    std::filesystem::path root;
    TaskKind task = TaskKind::spot;
    std::optional<std::filesystem::path> genes;
    double patch_px = kDefaultPatchPx;
    ValueSpace values = ValueSpace::raw_counts;
    std::vector<SampleEntry> samples;
};

/// Throws ParseError naming the offending field, IoError for missing files.
DatasetDescriptor load_manifest(const std::filesystem::path& path);
/// Writes paths relative to the manifest's directory when possible.
void write_manifest(const std::filesystem::path& path, const DatasetDescriptor& d);

struct CellTable {
    std::string sample_id;
    std::vector<std::int64_t> cell_ids;
    Tensor coords;    // N x 2
    Tensor features;  // N x F

    std::size_t size() const { return cell_ids.size(); }
};

/// cells.tsv: header "cell_id\tx\ty\tf0...", one row per cell.
CellTable read_cells(const std::filesystem::path& path, const std::string& sample_id);
void write_cells(const std::filesystem::path& path, const CellTable& cells);

struct ExpressionFrame {
    std::vector<std::string> unit_ids;
    std::optional<Tensor> coords;  // M x 2 for spots, absent for bulk
    Tensor values;                 // M x G
    std::vector<std::string> genes;
    ValueSpace space = ValueSpace::raw_counts;

    std::size_t units() const { return unit_ids.size(); }
    /// Columns reordered/restricted to `genes`; DatasetError if one is missing.
    ExpressionFrame select_genes(const std::vector<std::string>& genes) const;
    ExpressionFrame select_units(const std::vector<std::size_t>& rows) const;
};

/// expr.tsv: header "unit_id\tx\ty\tg_<name>..."; x and y empty for bulk.
ExpressionFrame read_expr(const std::filesystem::path& path, ValueSpace space);
void write_expr(const std::filesystem::path& path, const ExpressionFrame& frame);

/// One gene name per line; blank lines and '#' comments ignored.
std::vector<std::string> read_gene_list(const std::filesystem::path& path);
void write_gene_list(const std::filesystem::path& path, const std::vector<std::string>& genes);

struct Bag {
    std::string unit_id;
    std::vector<std::size_t> members;  // rows of the CellTable
    std::vector<std::size_t> patch;    // per member patch id (bulk); empty for spots
    std::optional<std::vector<double>> target;
};

struct SpotAssignment {
    std::vector<Bag> bags;
    std::vector<std::size_t> unit_rows;  // row in the frame of each kept bag
    std::size_t dropped = 0;             // spots without cells
};

/// Cell i joins spot s iff |x_i - x_s| <= patch/2 and |y_i - y_s| <= patch/2.
/// Targets are the frame's rows. DatasetError if no spot receives a cell.
SpotAssignment assign_cells_to_spots(const CellTable& cells, const ExpressionFrame& spots, double patch_px);

/// All cells of the slide as one bag; a seeded uniform subsample of max_cells
/// when larger. Patch ids index the patch_px grid (row-major).
Bag grid_bulk_bag(const CellTable& cells, const std::string& unit_id, double patch_px, std::size_t max_cells,
                  std::uint64_t seed);

/// Deterministic stand-in for image features: row i is N(0,1) noise keyed by
/// (seed, sample_id, cell_id).
Tensor stub_features(const std::string& sample_id, const std::vector<std::int64_t>& cell_ids, std::uint64_t seed,
                     std::size_t width);

}  // namespace bitro::ingest
