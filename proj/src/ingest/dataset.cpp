// Copyright 2026 The bitro Authors
// SPDX-License-Identifier: Apache-2.0

#include "bitro/ingest/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <unordered_set>

#include "json.hpp"

#include "bitro/error.hpp"
#include "bitro/ingest/tsv.hpp"
#include "bitro/rng.hpp"

namespace bitro::ingest {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(TaskKind t) { return t == TaskKind::bulk ? "bulk" : "spot"; }

std::string to_string(ValueSpace v) {
    switch (v) {
        case ValueSpace::raw_counts: return "raw_counts";
        case ValueSpace::log1p: return "log1p";
        case ValueSpace::zscore: return "zscore";
    }
    return "unknown";
}

TaskKind parse_task(const std::string& s) {
    if (s == "bulk") return TaskKind::bulk;
    if (s == "spot") return TaskKind::spot;
    throw ParseError("task must be 'bulk' or 'spot', got '" + s + "'");
}

ValueSpace parse_space(const std::string& s) {
    if (s == "raw_counts" || s == "tpm") return ValueSpace::raw_counts;
    if (s == "log1p") return ValueSpace::log1p;
    throw ParseError("values must be 'raw_counts', 'tpm' or 'log1p', got '" + s + "'");
}

namespace {

const json& field(const json& obj, const char* name, const std::string& where) {
    if (!obj.is_object() || !obj.contains(name)) throw ParseError(where + ": missing field '" + name + "'");
    return obj.at(name);
}

std::string string_field(const json& obj, const char* name, const std::string& where) {
    const json& v = field(obj, name, where);
    if (!v.is_string()) throw ParseError(where + ": field '" + name + "' must be a string");
    return v.get<std::string>();
}

fs::path existing(const fs::path& root, const std::string& rel, const std::string& where) {
    fs::path p = fs::path(rel).is_absolute() ? fs::path(rel) : root / rel;
    if (!fs::exists(p)) throw IoError(where + ": file not found: " + p.string());
    return p;
}

std::string relative_to(const fs::path& p, const fs::path& root) {
    std::error_code ec;
    fs::path rel = fs::relative(p, root, ec);
    return (ec || rel.empty()) ? p.generic_string() : rel.generic_string();
}

}  // namespace

DatasetDescriptor load_manifest(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot read manifest " + path.string());
    json j;
    try {
        j = json::parse(f);
    } catch (const json::exception& e) {
        throw ParseError(path.string() + ": invalid JSON: " + e.what());
    }
    const std::string where = path.string();
    DatasetDescriptor d;
    d.root = path.has_parent_path() ? path.parent_path() : fs::path(".");
    d.task = parse_task(string_field(j, "task", where));
    if (j.contains("genes") && !j["genes"].is_null())
        d.genes = existing(d.root, string_field(j, "genes", where), where + " field 'genes'");
    if (j.contains("patch_px")) {
        if (!j["patch_px"].is_number()) throw ParseError(where + ": field 'patch_px' must be a number");
        d.patch_px = j["patch_px"].get<double>();
        if (!(d.patch_px > 0.0)) throw ParseError(where + ": field 'patch_px' must be positive");
    } else if (d.task == TaskKind::spot) {
        throw ParseError(where + ": missing field 'patch_px'");
    }
    if (j.contains("values")) d.values = parse_space(string_field(j, "values", where));
    const json& samples = field(j, "samples", where);
    if (!samples.is_array() || samples.empty()) throw ParseError(where + ": field 'samples' must be a non-empty array");
    std::set<std::string> ids;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const std::string sw = where + " samples[" + std::to_string(i) + "]";
        SampleEntry s;
        s.id = string_field(samples[i], "id", sw);
        if (!ids.insert(s.id).second) throw ParseError(sw + ": duplicate sample id '" + s.id + "'");
        s.cells = existing(d.root, string_field(samples[i], "cells", sw), sw + " field 'cells'");
        s.expr = existing(d.root, string_field(samples[i], "expr", sw), sw + " field 'expr'");
        d.samples.push_back(std::move(s));
    }
    return d;
}

void write_manifest(const fs::path& path, const DatasetDescriptor& d) {
    const fs::path root = path.has_parent_path() ? path.parent_path() : fs::path(".");
    json j;
    j["task"] = to_string(d.task);
    if (d.genes) j["genes"] = relative_to(*d.genes, root);
    j["patch_px"] = d.patch_px;
    j["values"] = to_string(d.values);
    j["samples"] = json::array();
    for (const auto& s : d.samples)
        j["samples"].push_back({{"id", s.id}, {"cells", relative_to(s.cells, root)}, {"expr", relative_to(s.expr, root)}});
    write_text(path, j.dump(2) + "\n");
}

CellTable read_cells(const fs::path& path, const std::string& sample_id) {
    const auto lines = read_lines(path);
    const std::string where = path.string();
    if (lines.empty()) throw ParseError(where + ": empty file");
    const auto header = split_tabs(lines[0]);
    if (header.size() < 4 || header[0] != "cell_id" || header[1] != "x" || header[2] != "y")
        throw ParseError(where + ": header must start with cell_id, x, y and list at least one feature");
    const std::size_t f = header.size() - 3;
    const std::size_t n = lines.size() - 1;
    CellTable t;
    t.sample_id = sample_id;
    t.cell_ids.reserve(n);
    t.coords = Tensor(Shape{n, 2});
    t.features = Tensor(Shape{n, f});
    std::unordered_set<std::int64_t> seen;
    for (std::size_t r = 0; r < n; ++r) {
        const std::string lw = where + ":" + std::to_string(r + 2);
        const auto cols = split_tabs(lines[r + 1]);
        if (cols.size() != header.size())
            throw ParseError(lw + ": expected " + std::to_string(header.size()) + " columns, got " +
                             std::to_string(cols.size()));
        const auto id = parse_int(cols[0], lw);
        if (!seen.insert(id).second) throw ParseError(lw + ": duplicate cell_id " + std::to_string(id));
        t.cell_ids.push_back(id);
        for (std::size_t c = 0; c < 2; ++c) {
            const double v = parse_double(cols[1 + c], lw);
            if (!std::isfinite(v) || v < 0.0) throw ParseError(lw + ": coordinates must be finite and non-negative");
            t.coords(r, c) = v;
        }
        for (std::size_t c = 0; c < f; ++c) t.features(r, c) = parse_double(cols[3 + c], lw);
    }
    return t;
}

void write_cells(const fs::path& path, const CellTable& t) {
    std::string out = "cell_id\tx\ty";
    for (std::size_t c = 0; c < t.features.cols(); ++c) out += "\tf" + std::to_string(c);
    out += '\n';
    for (std::size_t r = 0; r < t.size(); ++r) {
        out += std::to_string(t.cell_ids[r]);
        out += '\t' + format_double(t.coords(r, 0)) + '\t' + format_double(t.coords(r, 1));
        for (double v : t.features.row_span(r)) out += '\t' + format_double(v);
        out += '\n';
    }
    write_text(path, out);
}

ExpressionFrame ExpressionFrame::select_genes(const std::vector<std::string>& wanted) const {
    std::map<std::string, std::size_t> col;
    for (std::size_t g = 0; g < genes.size(); ++g) col.emplace(genes[g], g);
    ExpressionFrame out;
    out.unit_ids = unit_ids;
    out.coords = coords;
    out.space = space;
    out.genes = wanted;
    out.values = Tensor(Shape{units(), wanted.size()});
    for (std::size_t j = 0; j < wanted.size(); ++j) {
        auto it = col.find(wanted[j]);
        if (it == col.end()) throw DatasetError("gene '" + wanted[j] + "' is missing from the expression table");
        for (std::size_t r = 0; r < units(); ++r) out.values(r, j) = values(r, it->second);
    }
    return out;
}

ExpressionFrame ExpressionFrame::select_units(const std::vector<std::size_t>& rows) const {
    ExpressionFrame out;
    out.genes = genes;
    out.space = space;
    out.values = Tensor(Shape{rows.size(), genes.size()});
    if (coords) out.coords = Tensor(Shape{rows.size(), 2});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.unit_ids.push_back(unit_ids.at(rows[i]));
        std::copy_n(values.row_span(rows[i]).begin(), genes.size(), out.values.row_span(i).begin());
        if (coords) {
            (*out.coords)(i, 0) = (*coords)(rows[i], 0);
            (*out.coords)(i, 1) = (*coords)(rows[i], 1);
        }
    }
    return out;
}

ExpressionFrame read_expr(const fs::path& path, ValueSpace space) {
    const auto lines = read_lines(path);
    const std::string where = path.string();
    if (lines.size() < 2) throw ParseError(where + ": needs a header and at least one unit");
    const auto header = split_tabs(lines[0]);
    if (header.size() < 4 || header[0] != "unit_id" || header[1] != "x" || header[2] != "y")
        throw ParseError(where + ": header must start with unit_id, x, y and list at least one gene");
    ExpressionFrame fr;
    fr.space = space;
    std::set<std::string> names;
    for (std::size_t c = 3; c < header.size(); ++c) {
        std::string_view h = header[c];
        if (h.substr(0, 2) != "g_" || h.size() == 2)
            throw ParseError(where + ": gene column '" + std::string(h) + "' must look like g_<name>");
        std::string name(h.substr(2));
        if (!names.insert(name).second) throw ParseError(where + ": duplicate gene '" + name + "'");
        fr.genes.push_back(std::move(name));
    }
    const std::size_t m = lines.size() - 1, g = fr.genes.size();
    fr.values = Tensor(Shape{m, g});
    Tensor coords(Shape{m, 2});
    std::size_t with_coords = 0;
    std::set<std::string> ids;
    for (std::size_t r = 0; r < m; ++r) {
        const std::string lw = where + ":" + std::to_string(r + 2);
        const auto cols = split_tabs(lines[r + 1]);
        if (cols.size() != header.size())
            throw ParseError(lw + ": expected " + std::to_string(header.size()) + " columns, got " +
                             std::to_string(cols.size()));
        std::string id(cols[0]);
        if (id.empty()) throw ParseError(lw + ": empty unit_id");
        if (!ids.insert(id).second) throw ParseError(lw + ": duplicate unit_id '" + id + "'");
        fr.unit_ids.push_back(std::move(id));
        const bool has_x = !cols[1].empty(), has_y = !cols[2].empty();
        if (has_x != has_y) throw ParseError(lw + ": x and y must both be present or both empty");
        if (has_x) {
            ++with_coords;
            coords(r, 0) = parse_double(cols[1], lw);
            coords(r, 1) = parse_double(cols[2], lw);
        }
        for (std::size_t c = 0; c < g; ++c) {
            const double v = parse_double(cols[3 + c], lw);
            if (!std::isfinite(v)) throw ParseError(lw + ": non-finite expression value");
            if (space == ValueSpace::raw_counts && v < 0.0) throw ParseError(lw + ": negative count");
            fr.values(r, c) = v;
        }
    }
    if (with_coords != 0 && with_coords != m) throw ParseError(where + ": some units have coordinates and some not");
    if (with_coords == m) fr.coords = std::move(coords);
    return fr;
}

void write_expr(const fs::path& path, const ExpressionFrame& fr) {
    std::string out = "unit_id\tx\ty";
    for (const auto& g : fr.genes) out += "\tg_" + g;
    out += '\n';
    for (std::size_t r = 0; r < fr.units(); ++r) {
        out += fr.unit_ids[r];
        if (fr.coords)
            out += '\t' + format_double((*fr.coords)(r, 0)) + '\t' + format_double((*fr.coords)(r, 1));
        else
            out += "\t\t";
        for (double v : fr.values.row_span(r)) out += '\t' + format_double(v);
        out += '\n';
    }
    write_text(path, out);
}

std::vector<std::string> read_gene_list(const fs::path& path) {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (auto& line : read_lines(path)) {
        const auto b = line.find_first_not_of(" \t"), e = line.find_last_not_of(" \t");
        if (b == std::string::npos || line[b] == '#') continue;
        std::string g = line.substr(b, e - b + 1);
        if (!seen.insert(g).second) throw ParseError(path.string() + ": duplicate gene '" + g + "'");
        out.push_back(std::move(g));
    }
    if (out.empty()) throw ParseError(path.string() + ": gene list is empty");
    return out;
}

void write_gene_list(const fs::path& path, const std::vector<std::string>& genes) {
    std::string out;
    for (const auto& g : genes) out += g + '\n';
    write_text(path, out);
}

SpotAssignment assign_cells_to_spots(const CellTable& cells, const ExpressionFrame& spots, double patch_px) {
    if (!(patch_px > 0.0)) throw ConfigError("patch size must be positive");
    if (!spots.coords) throw DatasetError("spot table has no coordinates");
    const double half = patch_px / 2.0;
    const Tensor& sc = *spots.coords;
    SpotAssignment out;
    // Bucket cells on a patch-sized grid so each spot scans only nearby cells.
    std::map<std::pair<long long, long long>, std::vector<std::size_t>> grid;
    auto key = [&](double x, double y) {
        return std::pair<long long, long long>{static_cast<long long>(std::floor(x / patch_px)),
                                               static_cast<long long>(std::floor(y / patch_px))};
    };
    for (std::size_t i = 0; i < cells.size(); ++i) grid[key(cells.coords(i, 0), cells.coords(i, 1))].push_back(i);
    for (std::size_t s = 0; s < spots.units(); ++s) {
        const double x = sc(s, 0), y = sc(s, 1);
        const auto [gx, gy] = key(x, y);
        Bag bag;
        bag.unit_id = spots.unit_ids[s];
        for (long long dx = -1; dx <= 1; ++dx)
            for (long long dy = -1; dy <= 1; ++dy) {
                auto it = grid.find({gx + dx, gy + dy});
                if (it == grid.end()) continue;
                for (std::size_t i : it->second)
                    if (std::fabs(cells.coords(i, 0) - x) <= half && std::fabs(cells.coords(i, 1) - y) <= half)
                        bag.members.push_back(i);
            }
        if (bag.members.empty()) {
            ++out.dropped;
            continue;
        }
        std::sort(bag.members.begin(), bag.members.end());
        bag.target = std::vector<double>(spots.values.row_span(s).begin(), spots.values.row_span(s).end());
        out.bags.push_back(std::move(bag));
        out.unit_rows.push_back(s);
    }
    if (out.bags.empty()) throw DatasetError("no spot of sample '" + cells.sample_id + "' contains any cell");
    return out;
}

Bag grid_bulk_bag(const CellTable& cells, const std::string& unit_id, double patch_px, std::size_t max_cells,
                  std::uint64_t seed) {
    if (max_cells == 0) throw ConfigError("max_cells must be positive");
    if (!(patch_px > 0.0)) throw ConfigError("patch size must be positive");
    if (cells.size() == 0) throw DatasetError("slide '" + cells.sample_id + "' has no cells");
    Bag bag;
    bag.unit_id = unit_id;
    bag.members.resize(cells.size());
    std::iota(bag.members.begin(), bag.members.end(), 0);
    if (cells.size() > max_cells) {
        Rng rng(mix_seed(seed, fnv1a(cells.sample_id)));
        rng.shuffle(bag.members);
        bag.members.resize(max_cells);
        std::sort(bag.members.begin(), bag.members.end());
    }
    double x0 = cells.coords(0, 0), y0 = cells.coords(0, 1), x1 = x0;
    for (std::size_t i = 1; i < cells.size(); ++i) {
        x0 = std::min(x0, cells.coords(i, 0));
        x1 = std::max(x1, cells.coords(i, 0));
        y0 = std::min(y0, cells.coords(i, 1));
    }
    const auto cols = static_cast<std::size_t>(std::floor((x1 - x0) / patch_px)) + 1;
    for (std::size_t i : bag.members) {
        const auto px = static_cast<std::size_t>(std::floor((cells.coords(i, 0) - x0) / patch_px));
        const auto py = static_cast<std::size_t>(std::floor((cells.coords(i, 1) - y0) / patch_px));
        bag.patch.push_back(py * cols + px);
    }
    return bag;
}

Tensor stub_features(const std::string& sample_id, const std::vector<std::int64_t>& cell_ids, std::uint64_t seed,
                     std::size_t width) {
    Tensor t(Shape{cell_ids.size(), width});
    const std::uint64_t base = mix_seed(seed, fnv1a(sample_id));
    for (std::size_t r = 0; r < cell_ids.size(); ++r) {
        Rng rng(mix_seed(base, static_cast<std::uint64_t>(cell_ids[r])));
        for (double& v : t.row_span(r)) v = rng.normal();
    }
    return t;
}

}  // namespace bitro::ingest
