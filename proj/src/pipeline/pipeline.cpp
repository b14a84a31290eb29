// Copyright 2026 The bitro Authors
// SPDX-License-Identifier: Apache-2.0

#include "bitro/pipeline/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "bitro/error.hpp"
#include "bitro/mil/pool.hpp"
#include "bitro/rng.hpp"

namespace bitro::pipeline {

namespace {

using nlohmann::json;

// Seeded subsample of row indices, kept in ascending order.
std::vector<std::size_t> subsample(std::size_t n, std::size_t cap, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    if (n <= cap) return idx;
    Rng rng(seed);
    rng.shuffle(idx);
    idx.resize(cap);
    std::sort(idx.begin(), idx.end());
    return idx;
}

Tensor gather(const Tensor& m, std::span<const std::size_t> rows) {
    Tensor out(Shape{rows.size(), m.cols()});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto src = m.row_span(rows[i]);
        std::copy(src.begin(), src.end(), out.row_span(i).begin());
    }
    return out;
}

// Cells referenced by the units, as (sample, row) pairs in a fixed order.
std::map<std::size_t, std::vector<std::size_t>> member_rows(const std::vector<Unit>& units,
                                                            std::span<const std::size_t> which) {
    std::map<std::size_t, std::set<std::size_t>> rows;
    for (std::size_t u : which) {
        if (u >= units.size()) throw ContractError("unit index out of range");
        rows[units[u].sample].insert(units[u].bag.members.begin(), units[u].bag.members.end());
    }
    std::map<std::size_t, std::vector<std::size_t>> out;
    for (auto& [s, r] : rows) out[s] = std::vector<std::size_t>(r.begin(), r.end());
    return out;
}

ingest::ExpressionFrame unit_frame(const Dataset& data, const std::vector<Unit>& units,
                                   std::span<const std::size_t> which) {
    ingest::ExpressionFrame f;
    f.genes = data.genes;
    f.space = data.desc.values;
    f.values = Tensor(Shape{which.size(), data.genes.size()});
    for (std::size_t i = 0; i < which.size(); ++i) {
        const auto& u = units[which[i]];
        f.unit_ids.push_back(u.bag.unit_id);
        std::copy(u.values.begin(), u.values.end(), f.values.row_span(i).begin());
    }
    return f;
}

Tensor vector_tensor(const std::vector<double>& v) { return Tensor(Shape{v.size()}, v); }

std::vector<double> tensor_vector(const Tensor& t) { return t.values(); }

train::Task task_of(ingest::TaskKind k) { return k == ingest::TaskKind::bulk ? train::Task::bulk : train::Task::spot; }

}  // namespace

Dataset load_dataset(const std::filesystem::path& manifest, const std::optional<std::vector<std::string>>& genes) {
    Dataset data;
    data.desc = ingest::load_manifest(manifest);
    if (data.desc.samples.empty()) throw DatasetError(manifest.string() + ": manifest lists no samples");
    if (genes)
        data.genes = *genes;
    else if (data.desc.genes)
        data.genes = ingest::read_gene_list(*data.desc.genes);
    std::size_t width = 0;
    for (const auto& e : data.desc.samples) {
        Sample s;
        s.entry = e;
        s.cells = ingest::read_cells(e.cells, e.id);
        auto expr = ingest::read_expr(e.expr, data.desc.values);
        if (data.genes.empty()) data.genes = expr.genes;
        s.expr = expr.select_genes(data.genes);
        if (data.samples.empty())
            width = s.cells.features.cols();
        else if (s.cells.features.cols() != width)
            throw DatasetError("sample " + e.id + " has feature width " + std::to_string(s.cells.features.cols()) +
                               ", expected " + std::to_string(width));
        data.samples.push_back(std::move(s));
    }
    if (data.genes.empty()) throw DatasetError("no genes selected");
    return data;
}

std::vector<Unit> make_units(const Dataset& data, std::size_t max_bulk_cells, std::uint64_t seed) {
    std::vector<Unit> units;
    for (std::size_t s = 0; s < data.samples.size(); ++s) {
        const auto& smp = data.samples[s];
        if (data.desc.task == ingest::TaskKind::spot) {
            if (!smp.expr.coords) throw DatasetError("spot sample " + smp.entry.id + " has no spot coordinates");
            const auto a = ingest::assign_cells_to_spots(smp.cells, smp.expr, data.desc.patch_px);
            for (std::size_t b = 0; b < a.bags.size(); ++b) {
                Unit u;
                u.sample = s;
                u.bag = a.bags[b];
                u.bag.target.reset();
                const auto row = smp.expr.values.row_span(a.unit_rows[b]);
                u.values.assign(row.begin(), row.end());
                u.x = (*smp.expr.coords)(a.unit_rows[b], 0);
                units.push_back(std::move(u));
            }
        } else {
            if (smp.expr.units() != 1)
                throw DatasetError("bulk sample " + smp.entry.id + " must have exactly one expression row");
            Unit u;
            u.sample = s;
            u.bag = ingest::grid_bulk_bag(smp.cells, smp.expr.unit_ids[0], data.desc.patch_px, max_bulk_cells,
                                          mix_seed(seed, fnv1a("bulk:" + smp.entry.id)));
            const auto row = smp.expr.values.row_span(0);
            u.values.assign(row.begin(), row.end());
            units.push_back(std::move(u));
        }
    }
    return units;
}

std::vector<double> Preprocessor::file_to_log1p(std::span<const double> values) const {
    std::vector<double> out(values.begin(), values.end());
    if (file_space == ingest::ValueSpace::raw_counts)
        for (double& v : out) v = std::log1p(v);
    return out;
}

std::vector<double> Preprocessor::to_training(std::span<const double> values) const {
    auto out = file_to_log1p(values);
    if (norm) {
        if (out.size() != norm->mu.size()) throw DimensionError("target width does not match normalisation stats");
        for (std::size_t j = 0; j < out.size(); ++j) out[j] = (out[j] - norm->mu[j]) / (norm->sigma[j] + norm->eps);
    }
    return out;
}

std::vector<double> Preprocessor::to_log1p(std::span<const double> values) const {
    if (norm) return ingest::denormalize_row(values, *norm);
    return std::vector<double>(values.begin(), values.end());
}

Tensor Preprocessor::project(const ingest::CellTable& cells) const {
    if (cells.features.cols() != feature_width)
        throw DimensionError("cells of " + cells.sample_id + " have feature width " +
                             std::to_string(cells.features.cols()) + ", model expects " +
                             std::to_string(feature_width));
    if (pca) return ingest::apply_pca(*pca, cells.features);
    if (feature_width == d_model) return cells.features;
    const auto rows = subsample(cells.size(), opt.fit_cells, mix_seed(opt.seed, fnv1a("pca:" + cells.sample_id)));
    return ingest::apply_pca(ingest::fit_pca(gather(cells.features, rows), d_model), cells.features);
}

Preprocessor fit_preprocessor(const Dataset& data, const std::vector<Unit>& units,
                              std::span<const std::size_t> train_units, const PrepOptions& opt, std::size_t d_model) {
    if (train_units.empty()) throw ContractError("no training units");
    Preprocessor p;
    p.opt = opt;
    p.d_model = d_model;
    p.file_space = data.desc.values;
    p.feature_width = data.samples.front().cells.features.cols();
    if (p.feature_width < d_model)
        throw ConfigError("feature width " + std::to_string(p.feature_width) + " is below the model width " +
                          std::to_string(d_model) + "; pass --d-model " + std::to_string(p.feature_width));
    const auto rows = member_rows(units, train_units);
    auto pooled = [&](auto&& per_sample) {
        std::vector<Tensor> parts;
        std::size_t total = 0;
        for (const auto& [s, r] : rows) {
            parts.push_back(per_sample(s, r));
            total += parts.back().rows();
        }
        Tensor out(Shape{total, parts.front().cols()});
        std::size_t at = 0;
        for (const auto& t : parts)
            for (std::size_t i = 0; i < t.rows(); ++i, ++at)
                std::copy(t.row_span(i).begin(), t.row_span(i).end(), out.row_span(at).begin());
        return out;
    };
    if (p.feature_width > d_model && !opt.pca_per_sample) {
        const Tensor raw = pooled([&](std::size_t s, const std::vector<std::size_t>& r) {
            return gather(data.samples[s].cells.features, r);
        });
        const auto pick = subsample(raw.rows(), opt.fit_cells, mix_seed(opt.seed, fnv1a("pca")));
        p.pca = ingest::fit_pca(gather(raw, pick), d_model);
    }
    const Tensor h = pooled([&](std::size_t s, const std::vector<std::size_t>& r) {
        return gather(p.project(data.samples[s].cells), r);
    });
    const auto pick = subsample(h.rows(), opt.fit_cells, mix_seed(opt.seed, fnv1a("phenotypes")));
    cluster::KMeansOptions km;
    km.k = opt.clusters;
    km.seed = mix_seed(opt.seed, fnv1a("kmeans"));
    p.centroids = cluster::kmeans_fit(gather(h, pick), km).centroids;
    if (opt.normalize) p.norm = ingest::fit_norm_stats({unit_frame(data, units, train_units)});
    return p;
}

Preprocessor refit_targets(const Preprocessor& base, const Dataset& data, const std::vector<Unit>& units,
                           std::span<const std::size_t> train_units) {
    Preprocessor p = base;
    p.file_space = data.desc.values;
    p.norm.reset();
    if (p.opt.normalize) p.norm = ingest::fit_norm_stats({unit_frame(data, units, train_units)});
    return p;
}

void store_preprocessor(const Preprocessor& prep, train::Checkpoint& ckpt) {
    json j = {{"normalize", prep.opt.normalize},
              {"clusters", prep.opt.clusters},
              {"max_bulk_cells", prep.opt.max_bulk_cells},
              {"fit_cells", prep.opt.fit_cells},
              {"pca_per_sample", prep.opt.pca_per_sample},
              {"seed", prep.opt.seed},
              {"feature_width", prep.feature_width},
              {"d_model", prep.d_model},
              {"file_space", ingest::to_string(prep.file_space)}};
    ckpt.extras["cluster.centroids"] = prep.centroids;
    if (prep.pca) {
        ckpt.extras["pca.mean"] = prep.pca->mean;
        ckpt.extras["pca.components"] = prep.pca->components;
        ckpt.extras["pca.explained_variance"] = prep.pca->explained_variance;
        j["pca_total_variance"] = prep.pca->total_variance;
    }
    if (prep.norm) {
        ckpt.extras["norm.mu"] = vector_tensor(prep.norm->mu);
        ckpt.extras["norm.sigma"] = vector_tensor(prep.norm->sigma);
        j["norm_eps"] = prep.norm->eps;
    }
    ckpt.meta["prep"] = j;
}

Preprocessor load_preprocessor(const train::Checkpoint& ckpt) {
    if (!ckpt.meta.contains("prep")) throw ParseError("checkpoint has no preprocessing record");
    const json& j = ckpt.meta.at("prep");
    auto extra = [&](const std::string& name) -> const Tensor& {
        const auto it = ckpt.extras.find(name);
        if (it == ckpt.extras.end()) throw ParseError("checkpoint is missing " + name);
        return it->second;
    };
    try {
        Preprocessor p;
        p.opt.normalize = j.at("normalize").get<bool>();
        p.opt.clusters = j.at("clusters").get<std::size_t>();
        p.opt.max_bulk_cells = j.at("max_bulk_cells").get<std::size_t>();
        p.opt.fit_cells = j.at("fit_cells").get<std::size_t>();
        p.opt.pca_per_sample = j.at("pca_per_sample").get<bool>();
        p.opt.seed = j.at("seed").get<std::uint64_t>();
        p.feature_width = j.at("feature_width").get<std::size_t>();
        p.d_model = j.at("d_model").get<std::size_t>();
        p.file_space = ingest::parse_space(j.at("file_space").get<std::string>());
        p.centroids = extra("cluster.centroids");
        if (ckpt.extras.count("pca.components")) {
            ingest::PcaModel m;
            m.mean = extra("pca.mean");
            m.components = extra("pca.components");
            m.explained_variance = extra("pca.explained_variance");
            m.total_variance = j.at("pca_total_variance").get<double>();
            p.pca = m;
        }
        if (p.opt.normalize) {
            ingest::NormStats s;
            s.genes = ckpt.genes;
            s.mu = tensor_vector(extra("norm.mu"));
            s.sigma = tensor_vector(extra("norm.sigma"));
            s.eps = j.at("norm_eps").get<double>();
            if (s.mu.size() != s.genes.size() || s.sigma.size() != s.genes.size())
                throw ParseError("normalisation stats do not match the gene list");
            p.norm = s;
        }
        return p;
    } catch (const json::exception& e) {
        throw ParseError(std::string("bad preprocessing record: ") + e.what());
    }
}

std::vector<mil::BagInput> build_inputs(const Dataset& data, const std::vector<Unit>& units,
                                        std::span<const std::size_t> which, const Preprocessor& prep,
                                        const mil::ModelConfig& cfg) {
    std::map<std::size_t, Tensor> projected;
    std::map<std::size_t, encoder::Extent> extents;
    std::vector<mil::BagInput> out;
    out.reserve(which.size());
    for (std::size_t u : which) {
        if (u >= units.size()) throw ContractError("unit index out of range");
        const Unit& unit = units[u];
        const Sample& smp = data.samples[unit.sample];
        if (!projected.count(unit.sample)) {
            projected[unit.sample] = prep.project(smp.cells);
            extents[unit.sample] = encoder::Extent::of(smp.cells.coords);
        }
        mil::BagInput b;
        b.unit_id = unit.bag.unit_id;
        b.features = gather(projected[unit.sample], unit.bag.members);
        b.coords = gather(smp.cells.coords, unit.bag.members);
        b.patch = unit.bag.patch;
        for (std::size_t m : unit.bag.members) b.cell_ids.push_back(smp.cells.cell_ids[m]);
        b.labels = cluster::assign(prep.centroids, b.features);
        b.extent = extents[unit.sample];
        if (!unit.values.empty()) b.target = prep.to_training(unit.values);
        mil::prepare_bag(b, cfg.knn);
        out.push_back(std::move(b));
    }
    return out;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_validation(std::span<const std::size_t> pool,
                                                                             double fraction, std::uint64_t seed) {
    if (pool.size() < 2) throw ContractError("need at least 2 units to hold out validation");
    if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("validation fraction must be in (0, 1)");
    std::vector<std::size_t> order(pool.begin(), pool.end());
    Rng rng(mix_seed(seed, fnv1a("validation")));
    rng.shuffle(order);
    auto n_val = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(pool.size())));
    n_val = std::clamp<std::size_t>(n_val, 1, pool.size() - 1);
    std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::vector<std::size_t> tr(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
    std::sort(val.begin(), val.end());
    std::sort(tr.begin(), tr.end());
    return {tr, val};
}

json train_config_to_json(const train::TrainConfig& c) {
    return {{"lr", c.lr},       {"epochs", c.epochs},   {"patience", c.patience},
            {"clip", c.clip},   {"lambda", c.lambda},   {"dropout", c.dropout},
            {"seed", c.seed},   {"batch_size", c.batch_size},
            {"task", c.task == train::Task::bulk ? "bulk" : "spot"}};
}

train::TrainConfig train_config_from_json(const json& j) {
    try {
        train::TrainConfig c;
        c.lr = j.at("lr").get<double>();
        c.epochs = j.at("epochs").get<std::size_t>();
        c.patience = j.at("patience").get<std::size_t>();
        c.clip = j.at("clip").get<double>();
        c.lambda = j.at("lambda").get<double>();
        c.dropout = j.at("dropout").get<double>();
        c.seed = j.at("seed").get<std::uint64_t>();
        c.batch_size = j.at("batch_size").get<std::size_t>();
        c.task = j.at("task").get<std::string>() == "bulk" ? train::Task::bulk : train::Task::spot;
        return c;
    } catch (const json::exception& e) {
        throw ParseError(std::string("bad training record: ") + e.what());
    }
}

TrainedModel train_model(const Dataset& data, const std::vector<Unit>& units, std::span<const std::size_t> pool,
                         const TrainOptions& opt, const train::EpochHook& hook) {
    TrainedModel out;
    std::tie(out.train_units, out.val_units) = split_validation(pool, opt.val_fraction, opt.train.seed);
    const Preprocessor prep = fit_preprocessor(data, units, out.train_units, opt.prep, opt.model.d_model);
    mil::ModelConfig cfg = opt.model;
    cfg.genes = data.genes.size();
    cfg.use_softplus = opt.softplus && !prep.norm;
    cfg.validate();
    train::TrainConfig tcfg = opt.train;
    tcfg.task = task_of(data.desc.task);
    tcfg.validate();
    const auto tr = build_inputs(data, units, out.train_units, prep, cfg);
    const auto va = build_inputs(data, units, out.val_units, prep, cfg);
    out.fit = train::fit(mil::init_params(cfg, tcfg.seed), cfg, {}, tr, va, tcfg, hook);
    out.ckpt.kind = "model";
    out.ckpt.config = cfg;
    out.ckpt.genes = data.genes;
    out.ckpt.params = out.fit.params;
    store_preprocessor(prep, out.ckpt);
    out.ckpt.meta["train"] = train_config_to_json(tcfg);
    out.ckpt.meta["task"] = ingest::to_string(data.desc.task);
    out.ckpt.meta["patch_px"] = data.desc.patch_px;
    out.ckpt.meta["best_epoch"] = out.fit.best_epoch;
    return out;
}

std::string to_string(Direction d) { return d == Direction::st2bulk ? "st2bulk" : "bulk2st"; }

Direction parse_direction(const std::string& s) {
    if (s == "st2bulk") return Direction::st2bulk;
    if (s == "bulk2st") return Direction::bulk2st;
    throw ConfigError("unknown direction '" + s + "' (expected st2bulk or bulk2st)");
}

train::Adaptation adaptation_of(const train::Checkpoint& ckpt) {
    train::Adaptation a;
    if (ckpt.kind == "lora") a.lora = ckpt.lora;
    if (ckpt.meta.contains("fresh_rows")) a.fresh_rows = ckpt.meta.at("fresh_rows").get<std::vector<std::size_t>>();
    return a;
}

FinetunedModel finetune_model(const train::Checkpoint& base, const Dataset& target, const std::vector<Unit>& units,
                              std::span<const std::size_t> pool, const FinetuneOptions& opt,
                              const train::EpochHook& hook) {
    const std::string base_task = base.meta.value("task", std::string("spot"));
    const std::string target_task = ingest::to_string(target.desc.task);
    if (opt.direction) {
        const bool ok = *opt.direction == Direction::st2bulk ? (base_task == "spot" && target_task == "bulk")
                                                              : (base_task == "bulk" && target_task == "spot");
        if (!ok)
            throw TransferError("direction " + to_string(*opt.direction) + " does not match base task " + base_task +
                                " and target task " + target_task);
    }
    FinetunedModel out;
    std::tie(out.train_units, out.val_units) = split_validation(pool, opt.val_fraction, opt.train.seed);
    const Preprocessor prep = refit_targets(load_preprocessor(base), target, units, out.train_units);

    const ParamTree plain = train::merge(base.params, adaptation_of(base));
    auto re = train::rehead(plain, base.genes, target.genes, mix_seed(opt.train.seed, fnv1a("rehead")));
    train::Adaptation adapt;
    adapt.fresh_rows = re.fresh_rows;
    if (opt.lora)
        adapt.lora = train::attach_lora(re.params, opt.targets, opt.rank, opt.alpha,
                                        mix_seed(opt.train.seed, fnv1a("lora")));

    mil::ModelConfig cfg = base.config;
    cfg.genes = target.genes.size();
    cfg.validate();
    train::TrainConfig tcfg = opt.train;
    tcfg.task = task_of(target.desc.task);
    tcfg.validate();
    const auto tr = build_inputs(target, units, out.train_units, prep, cfg);
    const auto va = build_inputs(target, units, out.val_units, prep, cfg);
    out.fit = train::fit(re.params, cfg, adapt, tr, va, tcfg, hook);

    train::Checkpoint common;
    common.config = cfg;
    common.genes = target.genes;
    store_preprocessor(prep, common);
    common.meta["train"] = train_config_to_json(tcfg);
    common.meta["task"] = target_task;
    common.meta["patch_px"] = target.desc.patch_px;
    common.meta["best_epoch"] = out.fit.best_epoch;
    common.meta["transfer"] = {{"from_task", base_task},
                               {"shared_genes", re.shared},
                               {"lora", opt.lora},
                               {"direction", opt.direction ? to_string(*opt.direction) : "none"}};
    out.merged = common;
    out.merged.kind = "model";
    out.merged.params = train::merge(out.fit.params, adapt);
    out.adapter = common;
    out.adapter.kind = opt.lora ? "lora" : "model";
    out.adapter.params = opt.lora ? out.fit.params : out.merged.params;
    out.adapter.lora = adapt.lora;
    if (opt.lora) out.adapter.meta["fresh_rows"] = adapt.fresh_rows;
    return out;
}

std::vector<UnitPrediction> predict_units(const train::Checkpoint& ckpt, const Dataset& data,
                                          const std::vector<Unit>& units, std::span<const std::size_t> which,
                                          std::size_t threads) {
    if (data.genes != ckpt.genes) throw DatasetError("dataset genes differ from the model's gene list");
    const Preprocessor prep = load_preprocessor(ckpt);
    const auto inputs = build_inputs(data, units, which, prep, ckpt.config);
    const auto preds = train::predict_all(ckpt.params, ckpt.config, adaptation_of(ckpt), inputs, threads);
    std::vector<UnitPrediction> out;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        UnitPrediction p;
        p.unit_id = inputs[i].unit_id;
        p.log1p = prep.to_log1p(preds[i].y);
        p.attention = preds[i].attention;
        p.cell_ids = inputs[i].cell_ids;
        p.coords = inputs[i].coords;
        out.push_back(std::move(p));
    }
    return out;
}

eval::EvalReport evaluate_units(const train::Checkpoint& ckpt, const Dataset& data, const std::vector<Unit>& units,
                                std::span<const std::size_t> which, std::size_t threads, const std::string& fold) {
    const auto preds = predict_units(ckpt, data, units, which, threads);
    const Preprocessor prep = load_preprocessor(ckpt);
    const std::size_t g = data.genes.size();
    Tensor truth(Shape{which.size(), g}), pred(Shape{which.size(), g});
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < which.size(); ++i) {
        const auto t = prep.file_to_log1p(units[which[i]].values);
        std::copy(t.begin(), t.end(), truth.row_span(i).begin());
        std::copy(preds[i].log1p.begin(), preds[i].log1p.end(), pred.row_span(i).begin());
        ids.push_back(preds[i].unit_id);
    }
    return eval::evaluate(truth, pred, ids, data.genes, fold);
}

ProtocolRun run_protocol(const Dataset& data, const std::vector<Unit>& units, eval::Protocol protocol,
                         const TrainOptions& opt) {
    ProtocolRun run;
    std::vector<std::size_t> sample_of(units.size());
    for (std::size_t u = 0; u < units.size(); ++u) sample_of[u] = units[u].sample;
    if (protocol == eval::Protocol::spatial_5fold) {
        if (data.desc.task != ingest::TaskKind::spot)
            throw ProtocolError("spatial_5fold needs spot coordinates; bulk data has none");
        std::vector<double> ux(units.size());
        for (std::size_t u = 0; u < units.size(); ++u) ux[u] = units[u].x;
        std::vector<std::vector<double>> cx;
        for (const auto& s : data.samples) {
            cx.emplace_back();
            for (std::size_t i = 0; i < s.cells.size(); ++i) cx.back().push_back(s.cells.coords(i, 0));
        }
        run.folds = eval::spatial_folds(sample_of, ux, cx);
    } else {
        run.folds = eval::sample_folds(protocol, sample_of, data.samples.size(), opt.train.seed);
    }
    for (const auto& fold : run.folds) {
        if (fold.test.empty()) throw ProtocolError("fold " + fold.name + " has no held-out units");
        auto model = train_model(data, units, fold.train, opt);
        run.reports.push_back(evaluate_units(model.ckpt, data, units, fold.test, opt.train.threads, fold.name));
        run.fits.push_back(std::move(model.fit));
    }
    return run;
}

Tensor deconvolve_counts(const UnitPrediction& p) {
    std::vector<double> counts(p.log1p.size());
    for (std::size_t g = 0; g < counts.size(); ++g) counts[g] = std::max(0.0, std::expm1(p.log1p[g]));
    return mil::deconvolve(p.attention, counts);
}

}  // namespace bitro::pipeline
