// Copyright 2026 The bitro Authors
// SPDX-License-Identifier: Apache-2.0

#include "bitro/synth/world.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "bitro/error.hpp"
#include "bitro/ingest/tsv.hpp"
#include "bitro/rng.hpp"

namespace bitro::synth {

namespace {

constexpr double kCellSpread = 100.0;
constexpr double kClumpRange = 70.0;
constexpr double kClumpSd = 15.0;

std::string gene_name(std::size_t j, std::size_t g) {
    const std::size_t width = std::to_string(g - 1).size();
    std::string s = std::to_string(j);
    return "G" + std::string(width - s.size(), '0') + s;
}

void write_truth(const std::filesystem::path& path, const std::vector<SynthSample>& samples,
                 const std::vector<std::string>& genes) {
    std::ostringstream s;
    s << "sample_id\tcell_id\tunit_id\ttype";
    for (const auto& g : genes) s << "\tg_" << g;
    s << '\n';
    for (const auto& smp : samples)
        for (std::size_t i = 0; i < smp.cells.size(); ++i) {
            s << smp.cells.sample_id << '\t' << smp.cells.cell_ids[i] << '\t'
              << smp.expr.unit_ids[smp.expr.units() == 1 ? 0 : smp.spot[i]] << '\t' << smp.types[i];
            for (double v : smp.truth.row_span(i)) s << '\t' << ingest::format_double(v);
            s << '\n';
        }
    ingest::write_text(path, s.str());
}

}  // namespace

void WorldConfig::validate() const {
    if (features == 0 || genes < 2 || types == 0) throw ConfigError("world needs features, >= 2 genes and types");
    if (noise < 0.0 || feature_noise < 0.0) throw ConfigError("noise scales must be non-negative");
    if (!(patch_px > 2 * kCellSpread)) throw ConfigError("patch_px must exceed 200 so spots do not overlap");
}

PlantedWorld make_world(const WorldConfig& cfg) {
    cfg.validate();
    PlantedWorld w;
    w.cfg = cfg;
    Rng rng(mix_seed(cfg.seed, fnv1a("world")));
    w.type_means = Tensor(Shape{cfg.types, cfg.features});
    for (double& v : w.type_means.data()) v = rng.normal();
    w.profiles = Tensor(Shape{cfg.types, cfg.genes});
    for (double& v : w.profiles.data()) {
        v = 2.0 * std::exp(rng.normal());
        if (rng.uniform() < 0.5) v *= 0.1;  // type-specific markers
    }
    for (std::size_t j = 0; j < cfg.genes; ++j) w.genes.push_back(gene_name(j, cfg.genes));
    return w;
}

SynthSample sample_world(const PlantedWorld& world, const std::string& sample_id, std::size_t spots,
                         std::size_t cells_per_spot, ingest::TaskKind task) {
    if (spots == 0 || cells_per_spot == 0) throw ConfigError("spots and cells per spot must be >= 1");
    const auto& cfg = world.cfg;
    Rng rng(mix_seed(cfg.seed, fnv1a("sample:" + sample_id)));
    const std::size_t k = cfg.types, f = cfg.features, g = cfg.genes;
    const auto side = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(spots))));
    const double extent = cfg.patch_px * static_cast<double>(side);
    std::vector<std::pair<double, double>> centres(k);
    for (auto& c : centres) c = {rng.uniform(0, extent), rng.uniform(0, extent)};
    const double scale = extent / 3.0;

    SynthSample out;
    out.cells.sample_id = sample_id;
    const std::size_t n = spots * cells_per_spot;
    out.cells.coords = Tensor(Shape{n, 2});
    out.cells.features = Tensor(Shape{n, f});
    out.truth = Tensor(Shape{n, g});
    Tensor spot_xy(Shape{spots, 2});
    Tensor spot_sum(Shape{spots, g});
    std::vector<double> weight(k);
    for (std::size_t s = 0; s < spots; ++s) {
        spot_xy(s, 0) = cfg.patch_px * (0.5 + static_cast<double>(s % side));
        spot_xy(s, 1) = cfg.patch_px * (0.5 + static_cast<double>(s / side));
        // Composition from the smooth type field at the spot centre; each
        // type's cells gather in a clump of their own inside the spot.
        double total = 0.0;
        for (std::size_t t = 0; t < k; ++t) {
            const double dx = spot_xy(s, 0) - centres[t].first, dy = spot_xy(s, 1) - centres[t].second;
            total += weight[t] = std::exp(-std::sqrt(dx * dx + dy * dy) / scale);
        }
        std::vector<std::pair<double, double>> clump(k);
        for (auto& c : clump)
            c = {rng.uniform(-kClumpRange, kClumpRange), rng.uniform(-kClumpRange, kClumpRange)};
        for (std::size_t c = 0; c < cells_per_spot; ++c) {
            const std::size_t i = s * cells_per_spot + c;
            double u = rng.uniform() * total;
            std::size_t type = 0;
            while (type + 1 < k && u >= weight[type]) u -= weight[type++];
            const double jx = std::clamp(clump[type].first + kClumpSd * rng.normal(), -kCellSpread, kCellSpread);
            const double jy = std::clamp(clump[type].second + kClumpSd * rng.normal(), -kCellSpread, kCellSpread);
            out.cells.cell_ids.push_back(static_cast<std::int64_t>(i));
            out.cells.coords(i, 0) = spot_xy(s, 0) + jx;
            out.cells.coords(i, 1) = spot_xy(s, 1) + jy;
            for (std::size_t d = 0; d < f; ++d)
                out.cells.features(i, d) = world.type_means(type, d) + cfg.feature_noise * rng.normal();
            for (std::size_t j = 0; j < g; ++j) {
                out.truth(i, j) = world.profiles(type, j);
                spot_sum(s, j) += world.profiles(type, j);
            }
            out.types.push_back(type);
            out.spot.push_back(s);
        }
    }
    auto noisy = [&](double mean) {
        return cfg.noise > 0.0 ? std::max(0.0, mean + cfg.noise * std::sqrt(mean) * rng.normal()) : mean;
    };
    out.expr.genes = world.genes;
    if (task == ingest::TaskKind::spot) {
        out.expr.coords = spot_xy;
        out.expr.values = Tensor(Shape{spots, g});
        for (std::size_t s = 0; s < spots; ++s) {
            out.expr.unit_ids.push_back(sample_id + "_spot" + std::to_string(s));
            for (std::size_t j = 0; j < g; ++j) out.expr.values(s, j) = noisy(spot_sum(s, j));
        }
    } else {
        out.expr.unit_ids = {sample_id};
        out.expr.values = Tensor(Shape{1, g});
        for (std::size_t j = 0; j < g; ++j) {
            double total = 0.0;
            for (std::size_t s = 0; s < spots; ++s) total += spot_sum(s, j);
            out.expr.values(0, j) = noisy(total);
        }
    }
    return out;
}

ingest::DatasetDescriptor generate(const PlantedWorld& world, const std::filesystem::path& dir, const Layout& layout,
                                   ingest::TaskKind task, const std::string& prefix) {
    if (layout.samples == 0) throw ConfigError("need at least one sample");
    ingest::DatasetDescriptor desc;
    desc.root = dir;
    desc.task = task;
    desc.patch_px = world.cfg.patch_px;
    desc.values = ingest::ValueSpace::raw_counts;
    std::vector<SynthSample> samples;
    for (std::size_t s = 0; s < layout.samples; ++s) {
        const std::string id = prefix + std::to_string(s);
        samples.push_back(sample_world(world, id, layout.spots, layout.cells_per_spot, task));
        const ingest::SampleEntry e{id, dir / (id + "_cells.tsv"), dir / (id + "_expr.tsv")};
        ingest::write_cells(e.cells, samples.back().cells);
        ingest::write_expr(e.expr, samples.back().expr);
        desc.samples.push_back(e);
    }
    write_truth(dir / "truth_cells.tsv", samples, world.genes);
    ingest::write_manifest(dir / "manifest.json", desc);
    return desc;
}

PairedTasks paired_tasks(const PlantedWorld& world, const std::filesystem::path& dir, const Layout& st,
                         const Layout& bulk) {
    return {generate(world, dir / "st", st, ingest::TaskKind::spot, "st"),
            generate(world, dir / "bulk", bulk, ingest::TaskKind::bulk, "bulk")};
}

}  // namespace bitro::synth
