// Copyright 2026 The bitro Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "bitro/error.hpp"
#include "bitro/ingest/tsv.hpp"
#include "bitro/synth/world.hpp"
#include "doctest.h"

using namespace bitro;
using namespace bitro::synth;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

// unit_id -> summed truth row, parsed straight from the file
std::map<std::string, std::vector<double>> truth_sums(const fs::path& p, bool by_sample) {
    std::map<std::string, std::vector<double>> out;
    const auto lines = ingest::read_lines(p);
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        const auto f = ingest::split_tabs(lines[i]);
        auto& row = out[std::string(by_sample ? f[0] : f[2])];
        row.resize(f.size() - 4, 0.0);
        for (std::size_t j = 4; j < f.size(); ++j) row[j - 4] += ingest::parse_double(f[j], "truth");
    }
    return out;
}

}  // namespace

TEST_CASE("world is reproducible and non-negative") {
    WorldConfig cfg;
    cfg.seed = 3;
    auto a = make_world(cfg), b = make_world(cfg);
    CHECK(a.profiles == b.profiles);
    CHECK(a.type_means == b.type_means);
    for (double v : a.profiles.data()) CHECK(v >= 0.0);
    CHECK(a.genes.size() == 32);
    CHECK(a.genes[3] == "G03");
    cfg.seed = 4;
    CHECK(make_world(cfg).profiles != a.profiles);
}

TEST_CASE("one noiseless cell per spot reproduces its profile") {
    WorldConfig cfg;
    cfg.noise = 0.0;
    auto w = make_world(cfg);
    auto s = sample_world(w, "x", 9, 1, ingest::TaskKind::spot);
    for (std::size_t i = 0; i < 9; ++i)
        for (std::size_t j = 0; j < cfg.genes; ++j) CHECK(s.expr.values(i, j) == w.profiles(s.types[i], j));
}

TEST_CASE("generated files are byte-identical per seed and match truth sums") {
    WorldConfig cfg;
    cfg.seed = 5;
    cfg.noise = 0.0;
    auto w = make_world(cfg);
    const auto dir = fs::temp_directory_path() / "bitro_synth";
    fs::remove_all(dir);
    Layout layout{2, 16, 5};
    auto d1 = generate(w, dir / "a", layout, ingest::TaskKind::spot);
    auto d2 = generate(w, dir / "b", layout, ingest::TaskKind::spot);
    for (const char* f : {"manifest.json", "s0_cells.tsv", "s1_expr.tsv", "truth_cells.tsv"})
        CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));

    const auto sums = truth_sums(dir / "a" / "truth_cells.tsv", false);
    auto desc = ingest::load_manifest(dir / "a" / "manifest.json");
    REQUIRE(desc.samples.size() == 2);
    for (const auto& smp : desc.samples) {
        auto cells = ingest::read_cells(smp.cells, smp.id);
        auto expr = ingest::read_expr(smp.expr, desc.values);
        auto assign = ingest::assign_cells_to_spots(cells, expr, desc.patch_px);
        CHECK(assign.dropped == 0);
        for (const auto& bag : assign.bags) CHECK(bag.members.size() == 5);
        for (std::size_t u = 0; u < expr.units(); ++u) {
            const auto& t = sums.at(expr.unit_ids[u]);
            for (std::size_t j = 0; j < expr.genes.size(); ++j) CHECK(std::fabs(t[j] - expr.values(u, j)) < 1e-9);
        }
    }
    fs::remove_all(dir);
}

TEST_CASE("paired tasks share genes and have disjoint samples") {
    WorldConfig cfg;
    cfg.noise = 0.0;
    auto w = make_world(cfg);
    const auto dir = fs::temp_directory_path() / "bitro_paired";
    fs::remove_all(dir);
    auto p = paired_tasks(w, dir, Layout{2, 9, 3}, Layout{3, 9, 3});
    CHECK(p.st.task == ingest::TaskKind::spot);
    CHECK(p.bulk.task == ingest::TaskKind::bulk);
    for (const auto& a : p.st.samples)
        for (const auto& b : p.bulk.samples) CHECK(a.id != b.id);
    const auto sums = truth_sums(dir / "bulk" / "truth_cells.tsv", true);
    for (const auto& smp : p.bulk.samples) {
        auto expr = ingest::read_expr(smp.expr, ingest::ValueSpace::raw_counts);
        auto st_expr = ingest::read_expr(p.st.samples[0].expr, ingest::ValueSpace::raw_counts);
        CHECK(expr.genes == st_expr.genes);
        REQUIRE(expr.units() == 1);
        CHECK_FALSE(expr.coords.has_value());
        for (std::size_t j = 0; j < expr.genes.size(); ++j)
            CHECK(std::fabs(sums.at(smp.id)[j] - expr.values(0, j)) < 1e-9);
    }
    fs::remove_all(dir);
}

TEST_CASE("expression noise is non-negative and scaled") {
    WorldConfig cfg;
    cfg.noise = 0.5;
    auto w = make_world(cfg);
    auto s = sample_world(w, "n", 64, 24, ingest::TaskKind::spot);
    for (double v : s.expr.values.data()) CHECK(v >= 0.0);
    CHECK_THROWS_AS(sample_world(w, "n", 0, 1, ingest::TaskKind::spot), ConfigError);
}
