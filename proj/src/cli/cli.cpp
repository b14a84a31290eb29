// Copyright 2026 The bitro Authors
// SPDX-License-Identifier: Apache-2.0

#include "bitro/cli/cli.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "bitro/error.hpp"
#include "bitro/ingest/genes.hpp"
#include "bitro/ingest/tsv.hpp"
#include "bitro/pipeline/pipeline.hpp"
#include "bitro/rng.hpp"
#include "bitro/stain/stain.hpp"
#include "bitro/synth/world.hpp"

#ifndef BITRO_VERSION
#define BITRO_VERSION "0.1.0"
#endif

namespace bitro::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

struct Context {
    fs::path workdir = ".";
    std::vector<std::string> args;
    std::ostream* out = nullptr;
    Clock::time_point start = Clock::now();
    json outputs = json::array();
    json timings = json::object();

    fs::path resolve(const std::string& p) const {
        const fs::path path(p);
        return path.is_absolute() ? path : workdir / path;
    }
    void produced(const fs::path& p) { outputs.push_back(p.string()); }
};

std::string hex64(std::uint64_t v) {
    std::ostringstream s;
    s << std::hex << std::setw(16) << std::setfill('0') << v;
    return s.str();
}

void write_json(const fs::path& path, const json& j) { ingest::write_text(path, j.dump(2) + "\n"); }

/// run.json: the one record every command leaves behind.
void write_run_record(Context& ctx, const fs::path& dir, const std::string& command, std::uint64_t seed,
                      const json& config) {
    std::string line;
    for (std::size_t i = 0; i < ctx.args.size(); ++i) line += (i ? " " : "") + ctx.args[i];
    const double total = std::chrono::duration<double>(Clock::now() - ctx.start).count();
    ctx.timings["total_seconds"] = total;
    json rec = {{"command", command},
                {"command_line", line},
                {"config", config},
                {"config_hash", hex64(fnv1a(config.dump()))},
                {"seed", seed},
                {"version", version()},
                {"timings", ctx.timings},
                {"outputs", ctx.outputs}};
    write_json(dir / "run.json", rec);
}

// ---- shared flag groups ---------------------------------------------------

struct TrainFlags {
    double lr = 1e-4;
    std::size_t epochs = train::kMaxEpochs;
    std::size_t patience = train::kDefaultPatience;
    double clip = 1.0;
    double lambda = train::kDefaultLambda;
    double dropout = 0.0;
    std::uint64_t seed = 0;
    std::size_t batch_size = 0;
    std::size_t threads = 0;
    double val_fraction = pipeline::kDefaultValFraction;

    void add(CLI::App& app) {
        app.add_option("--lr", lr, "Adam learning rate {1e-3, 5e-4, 1e-4, 1e-5}")->capture_default_str();
        app.add_option("--epochs", epochs, "epoch cap (<= 100)")->capture_default_str();
        app.add_option("--patience", patience, "early-stopping patience in epochs")->capture_default_str();
        app.add_option("--clip", clip, "global gradient-norm clip")->capture_default_str();
        app.add_option("--lambda", lambda, "cluster-consistency weight; 0 disables it")->capture_default_str();
        app.add_option("--dropout", dropout, "dropout rate {0, 0.1, 0.2}")->capture_default_str();
        app.add_option("--seed", seed, "random seed")->capture_default_str();
        app.add_option("--batch-size", batch_size, "bags per step; 0 = 32 for spot, 1 for bulk")
            ->capture_default_str();
        app.add_option("--threads", threads, "worker threads; 0 = all cores, capped by BITRO_THREADS")
            ->capture_default_str();
        app.add_option("--val-fraction", val_fraction, "share of training units held out for validation")
            ->capture_default_str();
    }
    train::TrainConfig config() const {
        train::TrainConfig c;
        c.lr = lr;
        c.epochs = epochs;
        c.patience = patience;
        c.clip = clip;
        c.lambda = lambda;
        c.dropout = dropout;
        c.seed = seed;
        c.batch_size = batch_size;
        c.threads = threads;
        return c;
    }
};

struct ModelFlags {
    mil::ModelConfig model;
    pipeline::PrepOptions prep;
    bool no_normalize = false;
    bool no_softplus = false;

    void add(CLI::App& app) {
        app.add_option("--d-model", model.d_model, "model width D")->capture_default_str();
        app.add_option("--gat-layers", model.gat_layers, "GAT layers")->capture_default_str();
        app.add_option("--gat-heads", model.gat_heads, "GAT heads")->capture_default_str();
        app.add_option("--trf-layers", model.trf_layers, "transformer layers")->capture_default_str();
        app.add_option("--trf-heads", model.trf_heads, "transformer heads")->capture_default_str();
        app.add_option("--knn", model.knn, "spatial graph neighbours k")->capture_default_str();
        app.add_option("--n-pos", model.n_pos, "positional bins per axis")->capture_default_str();
        app.add_option("--window", model.window, "transformer attention window in tokens")->capture_default_str();
        app.add_option("--clusters", prep.clusters, "k-means phenotype clusters K")->capture_default_str();
        app.add_option("--max-cells", prep.max_bulk_cells, "cell cap per bulk slide")->capture_default_str();
        app.add_option("--fit-cells", prep.fit_cells, "cell cap for fitting PCA and k-means")
            ->capture_default_str();
        app.add_flag("--pca-per-sample", prep.pca_per_sample, "fit PCA per sample instead of a shared basis");
        app.add_flag("--no-normalize", no_normalize, "train on log1p targets without gene-wise z-scoring");
        app.add_flag("--no-softplus", no_softplus, "drop the softplus on the readout (log1p targets only)");
    }
};

json summary_of(const mil::ModelConfig& m, const pipeline::PrepOptions& p, const train::TrainConfig& t,
                bool softplus_requested) {
    json j = pipeline::train_config_to_json(t);
    j["model"] = train::config_to_json(m);
    j["prep"] = {{"normalize", p.normalize}, {"clusters", p.clusters},         {"max_bulk_cells", p.max_bulk_cells},
                 {"fit_cells", p.fit_cells}, {"pca_per_sample", p.pca_per_sample}};
    j["softplus_requested"] = softplus_requested;
    return j;
}

void write_history(const fs::path& path, const std::vector<train::EpochRecord>& history, std::size_t best) {
    std::ostringstream s;
    s << "epoch\ttrain_loss\tval_loss\tbest\n";
    for (const auto& r : history)
        s << r.epoch << '\t' << ingest::format_double(r.train_loss) << '\t' << ingest::format_double(r.val_loss)
          << '\t' << (r.epoch == best ? 1 : 0) << '\n';
    ingest::write_text(path, s.str());
}

void write_phenotypes(const fs::path& path, const pipeline::Dataset& data, const pipeline::Preprocessor& prep) {
    std::ostringstream s;
    s << "sample_id\tcell_id\tlabel\n";
    for (const auto& smp : data.samples) {
        const auto labels = cluster::assign(prep.centroids, prep.project(smp.cells));
        for (std::size_t i = 0; i < smp.cells.size(); ++i)
            s << smp.entry.id << '\t' << smp.cells.cell_ids[i] << '\t' << labels[i] << '\n';
    }
    ingest::write_text(path, s.str());
}

train::EpochHook progress(Context& ctx) {
    return [&ctx](const train::EpochRecord& r, const ParamTree&) {
        *ctx.out << "epoch " << r.epoch << " train " << ingest::format_double(r.train_loss) << " val "
                 << ingest::format_double(r.val_loss) << '\n';
        ctx.timings["epoch_seconds"].push_back(r.seconds);
    };
}

std::vector<std::size_t> all_units(std::size_t n) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    return idx;
}

std::optional<std::vector<std::string>> gene_override(const Context& ctx, const std::string& genes) {
    if (genes.empty()) return std::nullopt;
    return ingest::read_gene_list(ctx.resolve(genes));
}

// ---- commands --------------------------------------------------------------

int cmd_prep_stain(Context& ctx, const std::string& ref, const std::string& make_ref, const std::string& in,
                   const std::string& out, const stain::FitOptions& fo) {
    if (ref.empty()) throw UsageError("prep-stain needs --ref");
    if (!make_ref.empty()) {
        const auto image = stain::read_ppm(ctx.resolve(make_ref));
        const auto reference = stain::make_reference(image, fo);
        const fs::path path = ctx.resolve(ref);
        stain::write_reference(path, reference);
        ctx.produced(path);
        *ctx.out << "wrote reference " << path.string() << '\n';
    }
    if (in.empty() && out.empty()) {
        if (make_ref.empty()) throw UsageError("prep-stain needs --in and --out, or --make-ref");
        write_run_record(ctx, ctx.resolve(ref).parent_path(), "prep-stain", 0,
                         {{"lambda", fo.lambda}, {"iterations", fo.iterations}, {"threshold", fo.threshold}});
        return 0;
    }
    if (in.empty() || out.empty()) throw UsageError("prep-stain needs both --in and --out");
    const auto reference = stain::read_reference(ctx.resolve(ref));
    const fs::path in_dir = ctx.resolve(in), out_dir = ctx.resolve(out);
    if (!fs::is_directory(in_dir)) throw IoError("input directory not found: " + in_dir.string());
    std::vector<fs::path> tiles;
    for (const auto& e : fs::directory_iterator(in_dir))
        if (e.is_regular_file() && e.path().extension() == ".ppm") tiles.push_back(e.path());
    std::sort(tiles.begin(), tiles.end());
    if (tiles.empty()) throw DatasetError("no .ppm tiles in " + in_dir.string());
    for (const auto& t : tiles) {
        const auto normalized = stain::normalize_to_reference(stain::read_ppm(t), reference, fo);
        const fs::path dest = out_dir / t.filename();
        stain::write_ppm(dest, normalized);
        ctx.produced(dest);
    }
    *ctx.out << "normalised " << tiles.size() << " tiles\n";
    write_run_record(ctx, out_dir, "prep-stain", 0,
                     {{"lambda", fo.lambda}, {"iterations", fo.iterations}, {"threshold", fo.threshold}});
    return 0;
}

struct GeneFlags {
    std::size_t bins = ingest::kDefaultHvgBins;
    std::size_t top_k = 2000;
    std::size_t k = 1000;
    std::size_t cap = 0;
};

int cmd_prep_genes(Context& ctx, const std::string& manifest, const std::string& out, const GeneFlags& gf) {
    const auto desc = ingest::load_manifest(ctx.resolve(manifest));
    std::vector<ingest::ExpressionFrame> frames;
    for (const auto& s : desc.samples) frames.push_back(ingest::to_log1p(ingest::read_expr(s.expr, desc.values)));
    const auto sel = ingest::select_hvgs(frames, gf.bins, gf.top_k);
    const auto genes = ingest::final_gene_set(sel.candidates, frames, gf.k,
                                             gf.cap ? std::optional<std::size_t>(gf.cap) : std::nullopt, sel.best_z);
    const fs::path dir = ctx.resolve(out);
    ingest::write_gene_list(dir / "genes.txt", genes);
    ctx.produced(dir / "genes.txt");
    std::ostringstream s;
    s << "gene\tbest_z\tselected\n";
    for (const auto& g : sel.candidates)
        s << g << '\t' << ingest::format_double(sel.best_z.at(g)) << '\t'
          << (std::binary_search(genes.begin(), genes.end(), g) ? 1 : 0) << '\n';
    ingest::write_text(dir / "hvg.tsv", s.str());
    ctx.produced(dir / "hvg.tsv");
    *ctx.out << "selected " << genes.size() << " of " << sel.candidates.size() << " candidate genes\n";
    write_run_record(ctx, dir, "prep-genes", 0,
                     {{"bins", gf.bins}, {"top_k", gf.top_k}, {"k", gf.k}, {"cap", gf.cap}});
    return 0;
}

int cmd_train(Context& ctx, const std::string& manifest, const std::string& task, const std::string& genes,
              const std::string& out, ModelFlags mf, const TrainFlags& tf) {
    const auto data = pipeline::load_dataset(ctx.resolve(manifest), gene_override(ctx, genes));
    if (!task.empty() && ingest::parse_task(task) != data.desc.task)
        throw ConfigError("--task " + task + " does not match the manifest task " + ingest::to_string(data.desc.task));
    pipeline::TrainOptions opt;
    opt.model = mf.model;
    opt.prep = mf.prep;
    opt.prep.normalize = !mf.no_normalize;
    opt.prep.seed = tf.seed;
    opt.softplus = !mf.no_softplus;
    opt.train = tf.config();
    opt.val_fraction = tf.val_fraction;
    const auto units = pipeline::make_units(data, opt.prep.max_bulk_cells, tf.seed);
    const auto pool = all_units(units.size());
    auto model = pipeline::train_model(data, units, pool, opt, progress(ctx));

    const fs::path dir = ctx.resolve(out);
    train::write_checkpoint(dir / "model.bitro", model.ckpt);
    ctx.produced(dir / "model.bitro");
    write_history(dir / "history.tsv", model.fit.history, model.fit.best_epoch);
    ctx.produced(dir / "history.tsv");
    const auto prep = pipeline::load_preprocessor(model.ckpt);
    if (prep.norm) {
        ingest::write_norm_stats(dir / "norm_stats.tsv", *prep.norm);
        ctx.produced(dir / "norm_stats.tsv");
    }
    write_phenotypes(dir / "phenotypes.tsv", data, prep);
    ctx.produced(dir / "phenotypes.tsv");
    const json cfg = summary_of(model.ckpt.config, opt.prep, opt.train, opt.softplus);
    json summary = cfg;
    summary["best_epoch"] = model.fit.best_epoch;
    summary["best_val_loss"] = model.fit.best_val;
    summary["epochs_run"] = model.fit.history.size();
    summary["train_units"] = model.train_units.size();
    summary["val_units"] = model.val_units.size();
    write_json(dir / "summary.json", summary);
    ctx.produced(dir / "summary.json");
    *ctx.out << "best epoch " << model.fit.best_epoch << " val " << ingest::format_double(model.fit.best_val) << '\n';
    write_run_record(ctx, dir, "train", tf.seed, cfg);
    return 0;
}

int cmd_finetune(Context& ctx, const std::string& base_path, const std::string& manifest, const std::string& genes,
                 const std::string& out, const std::string& direction, bool no_lora, std::size_t rank, double alpha,
                 const TrainFlags& tf) {
    const auto base = train::read_checkpoint(ctx.resolve(base_path));
    const auto data = pipeline::load_dataset(ctx.resolve(manifest), gene_override(ctx, genes));
    const auto prep = pipeline::load_preprocessor(base);
    pipeline::FinetuneOptions opt;
    opt.lora = !no_lora;
    opt.rank = rank;
    opt.alpha = alpha;
    opt.train = tf.config();
    opt.val_fraction = tf.val_fraction;
    if (!direction.empty()) opt.direction = pipeline::parse_direction(direction);
    const auto units = pipeline::make_units(data, prep.opt.max_bulk_cells, tf.seed);
    auto tuned = pipeline::finetune_model(base, data, units, all_units(units.size()), opt, progress(ctx));

    const fs::path dir = ctx.resolve(out);
    if (opt.lora) {
        train::write_checkpoint(dir / "adapter.bitro", tuned.adapter);
        ctx.produced(dir / "adapter.bitro");
    }
    train::write_checkpoint(dir / "model.bitro", tuned.merged);
    ctx.produced(dir / "model.bitro");
    write_history(dir / "history.tsv", tuned.fit.history, tuned.fit.best_epoch);
    ctx.produced(dir / "history.tsv");
    json cfg = pipeline::train_config_to_json(opt.train);
    cfg["lora"] = {{"enabled", opt.lora}, {"rank", opt.rank}, {"alpha", opt.alpha}, {"targets", opt.targets}};
    cfg["direction"] = direction.empty() ? "none" : direction;
    cfg["base"] = fs::path(base_path).filename().string();
    json summary = cfg;
    summary["best_epoch"] = tuned.fit.best_epoch;
    summary["best_val_loss"] = tuned.fit.best_val;
    summary["epochs_run"] = tuned.fit.history.size();
    summary["transfer"] = tuned.merged.meta["transfer"];
    write_json(dir / "summary.json", summary);
    ctx.produced(dir / "summary.json");
    *ctx.out << "best epoch " << tuned.fit.best_epoch << " val " << ingest::format_double(tuned.fit.best_val) << '\n';
    write_run_record(ctx, dir, "finetune", tf.seed, cfg);
    return 0;
}

int cmd_eval(Context& ctx, const std::string& model_path, const std::string& manifest, const std::string& protocol,
             const std::string& out, std::uint64_t seed, std::size_t threads) {
    const auto ckpt = train::read_checkpoint(ctx.resolve(model_path));
    const auto data = pipeline::load_dataset(ctx.resolve(manifest), ckpt.genes);
    const auto prep = pipeline::load_preprocessor(ckpt);
    const auto units = pipeline::make_units(data, prep.opt.max_bulk_cells, seed);
    std::vector<eval::EvalReport> reports;
    json meta = {{"protocol", protocol}, {"space", "log1p"}, {"seed", seed}, {"units", units.size()},
                 {"samples", data.samples.size()}, {"genes", data.genes.size()}};
    if (protocol == "none") {
        reports.push_back(pipeline::evaluate_units(ckpt, data, units, all_units(units.size()), threads));
    } else {
        if (ckpt.kind != "model") throw ConfigError("protocol runs retrain from scratch; pass a plain model");
        pipeline::TrainOptions opt;
        opt.model = ckpt.config;
        opt.prep = prep.opt;
        opt.prep.seed = seed;
        opt.softplus = ckpt.config.use_softplus || prep.opt.normalize;
        opt.train = ckpt.meta.contains("train") ? pipeline::train_config_from_json(ckpt.meta.at("train"))
                                                : train::TrainConfig{};
        opt.train.seed = seed;
        opt.train.threads = threads;
        const auto run = pipeline::run_protocol(data, units, eval::parse_protocol(protocol), opt);
        reports = run.reports;
        meta["folds"] = run.folds.size();
        meta["train"] = pipeline::train_config_to_json(opt.train);
    }
    const fs::path dir = ctx.resolve(out);
    eval::write_eval_report(dir / "eval_report.tsv", reports);
    ctx.produced(dir / "eval_report.tsv");
    json summary = eval::summary_json(reports);
    summary["protocol"] = meta;
    write_json(dir / "summary.json", summary);
    ctx.produced(dir / "summary.json");
    const auto st = summary["pcc_overall"];
    *ctx.out << "pcc_overall " << st["mean"].dump() << " pcc_gene " << summary["pcc_gene"]["mean"].dump() << " js "
             << summary["js"]["mean"].dump() << '\n';
    write_run_record(ctx, dir, "eval", seed, meta);
    return 0;
}

int cmd_deconvolve(Context& ctx, const std::string& model_path, const std::string& manifest, const std::string& out,
                   std::uint64_t seed, std::size_t threads) {
    const auto ckpt = train::read_checkpoint(ctx.resolve(model_path));
    const auto data = pipeline::load_dataset(ctx.resolve(manifest), ckpt.genes);
    const auto prep = pipeline::load_preprocessor(ckpt);
    const auto units = pipeline::make_units(data, prep.opt.max_bulk_cells, seed);
    const auto preds = pipeline::predict_units(ckpt, data, units, all_units(units.size()), threads);
    const fs::path dir = ctx.resolve(out);
    std::vector<std::ostringstream> per_sample(data.samples.size());
    for (auto& s : per_sample) {
        s << "cell_id\tx\ty";
        for (const auto& g : data.genes) s << "\tg_" << g;
        s << '\n';
    }
    std::ostringstream units_out;
    units_out << "unit_id";
    for (const auto& g : data.genes) units_out << "\tg_" << g;
    units_out << '\n';
    for (std::size_t u = 0; u < preds.size(); ++u) {
        const auto& p = preds[u];
        const Tensor cells = pipeline::deconvolve_counts(p);
        auto& s = per_sample[units[u].sample];
        for (std::size_t i = 0; i < p.cell_ids.size(); ++i) {
            s << p.cell_ids[i] << '\t' << ingest::format_double(p.coords(i, 0)) << '\t'
              << ingest::format_double(p.coords(i, 1));
            for (double v : cells.row_span(i)) s << '\t' << ingest::format_double(v);
            s << '\n';
        }
        units_out << p.unit_id;
        for (double v : p.log1p) units_out << '\t' << ingest::format_double(std::max(0.0, std::expm1(v)));
        units_out << '\n';
    }
    for (std::size_t s = 0; s < data.samples.size(); ++s) {
        const fs::path p = dir / data.samples[s].entry.id / "cells_expr.tsv";
        ingest::write_text(p, per_sample[s].str());
        ctx.produced(p);
    }
    ingest::write_text(dir / "units_expr.tsv", units_out.str());
    ctx.produced(dir / "units_expr.tsv");
    *ctx.out << "deconvolved " << preds.size() << " units\n";
    write_run_record(ctx, dir, "deconvolve", seed, {{"model", fs::path(model_path).filename().string()}});
    return 0;
}

struct SynthFlags {
    synth::WorldConfig world;
    synth::Layout layout;
    std::size_t bulk_samples = 16;
    std::size_t bulk_spots = 16;
    std::string task = "spot";
};

int cmd_synth(Context& ctx, const std::string& out, const SynthFlags& sf) {
    const auto world = synth::make_world(sf.world);
    const fs::path dir = ctx.resolve(out);
    if (sf.task == "paired") {
        const synth::Layout bulk{sf.bulk_samples, sf.bulk_spots, sf.layout.cells_per_spot};
        synth::paired_tasks(world, dir, sf.layout, bulk);
        ctx.produced(dir / "st" / "manifest.json");
        ctx.produced(dir / "bulk" / "manifest.json");
    } else {
        synth::generate(world, dir, sf.layout, ingest::parse_task(sf.task));
        ctx.produced(dir / "manifest.json");
    }
    *ctx.out << "wrote synthetic " << sf.task << " data to " << dir.string() << '\n';
    write_run_record(ctx, dir, "synth", sf.world.seed,
                     {{"task", sf.task},
                      {"features", sf.world.features},
                      {"genes", sf.world.genes},
                      {"types", sf.world.types},
                      {"noise", sf.world.noise},
                      {"feature_noise", sf.world.feature_noise},
                      {"samples", sf.layout.samples},
                      {"spots", sf.layout.spots},
                      {"cells_per_spot", sf.layout.cells_per_spot},
                      {"bulk_samples", sf.bulk_samples},
                      {"bulk_spots", sf.bulk_spots}});
    return 0;
}

std::string one_line(std::string s) {
    for (char& c : s)
        if (c == '\n' || c == '\r') c = ' ';
    while (!s.empty() && s.back() == ' ') s.pop_back();
    return s;
}

}  // namespace

std::string version() { return BITRO_VERSION; }

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    Context ctx;
    ctx.args = args;
    ctx.out = &out;
    CLI::App app{"bitro: bidirectional transfer for gene expression from histology", "bitro"};
    app.require_subcommand(1);
    app.set_version_flag("--version", version());
    std::string workdir = ".";
    app.add_option("--workdir", workdir, "base directory for relative paths")->capture_default_str();

    // prep-stain
    auto* ps = app.add_subcommand("prep-stain", "stain-normalise .ppm tiles against a reference basis");
    std::string ps_ref, ps_make, ps_in, ps_out;
    stain::FitOptions fo;
    ps->add_option("--ref", ps_ref, "reference basis.tsv (read, or written with --make-ref)")->required();
    ps->add_option("--make-ref", ps_make, "reference .ppm image to derive basis.tsv from");
    ps->add_option("--in", ps_in, "directory of input .ppm tiles");
    ps->add_option("--out", ps_out, "directory for normalised tiles");
    ps->add_option("--sparsity", fo.lambda, "L1 weight on stain densities")->capture_default_str();
    ps->add_option("--iters", fo.iterations, "multiplicative-update iterations")->capture_default_str();
    ps->add_option("--threshold", fo.threshold, "tissue optical-density threshold")->capture_default_str();

    // prep-genes
    auto* pg = app.add_subcommand("prep-genes", "select highly variable, highly expressed genes");
    std::string pg_manifest, pg_out;
    GeneFlags gf;
    pg->add_option("--manifest", pg_manifest, "dataset manifest.json")->required();
    pg->add_option("--out", pg_out, "output directory")->required();
    pg->add_option("--bins", gf.bins, "equal-occupancy mean bins")->capture_default_str();
    pg->add_option("--top-k", gf.top_k, "HVGs kept per sample before pooling")->capture_default_str();
    pg->add_option("-k,--k", gf.k, "top-K by mean and by SD to intersect")->capture_default_str();
    pg->add_option("--cap", gf.cap, "keep at most this many genes by z-score; 0 = no cap")->capture_default_str();

    // train
    auto* tr = app.add_subcommand("train", "train a model from scratch");
    std::string tr_manifest, tr_task, tr_genes, tr_out;
    ModelFlags tr_mf;
    TrainFlags tr_tf;
    tr->add_option("--manifest", tr_manifest, "dataset manifest.json")->required();
    tr->add_option("--task", tr_task, "expected task (spot|bulk)");
    tr->add_option("--genes", tr_genes, "gene list overriding the manifest");
    tr->add_option("--out", tr_out, "output directory")->required();
    tr_mf.add(*tr);
    tr_tf.add(*tr);

    // finetune
    auto* ft = app.add_subcommand("finetune", "transfer a trained model to another task with LoRA");
    std::string ft_base, ft_manifest, ft_genes, ft_out, ft_dir;
    bool ft_no_lora = false;
    std::size_t ft_rank = train::kDefaultLoraRank;
    double ft_alpha = train::kDefaultLoraAlpha;
    TrainFlags ft_tf;
    ft->add_option("--base", ft_base, "base model.bitro")->required();
    ft->add_option("--manifest", ft_manifest, "target dataset manifest.json")->required();
    ft->add_option("--genes", ft_genes, "target gene list overriding the manifest");
    ft->add_option("--out", ft_out, "output directory")->required();
    ft->add_option("--direction", ft_dir, "st2bulk or bulk2st; checked against the tasks");
    ft->add_option("--lora-rank", ft_rank, "adapter rank r")->capture_default_str();
    ft->add_option("--lora-alpha", ft_alpha, "adapter scale alpha")->capture_default_str();
    ft->add_flag("--no-lora", ft_no_lora, "fine-tune every weight instead of adapters");
    ft_tf.add(*ft);

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate a model or run a validation protocol");
    std::string ev_model, ev_manifest, ev_protocol = "none", ev_out;
    std::uint64_t ev_seed = 0;
    std::size_t ev_threads = 0;
    ev->add_option("--model", ev_model, "model.bitro")->required();
    ev->add_option("--manifest", ev_manifest, "dataset manifest.json")->required();
    ev->add_option("--protocol", ev_protocol, "none, loo, split_4_1 or spatial_5fold")->capture_default_str();
    ev->add_option("--out", ev_out, "output directory")->required();
    ev->add_option("--seed", ev_seed, "seed for protocol splits and retraining")->capture_default_str();
    ev->add_option("--threads", ev_threads, "worker threads; 0 = all cores, capped by BITRO_THREADS")
        ->capture_default_str();

    // deconvolve
    auto* dc = app.add_subcommand("deconvolve", "per-cell expression from bag predictions");
    std::string dc_model, dc_manifest, dc_out;
    std::uint64_t dc_seed = 0;
    std::size_t dc_threads = 0;
    dc->add_option("--model", dc_model, "model.bitro")->required();
    dc->add_option("--manifest", dc_manifest, "dataset manifest.json")->required();
    dc->add_option("--out", dc_out, "output directory")->required();
    dc->add_option("--seed", dc_seed, "seed for bulk subsampling")->capture_default_str();
    dc->add_option("--threads", dc_threads, "worker threads; 0 = all cores, capped by BITRO_THREADS")
        ->capture_default_str();

    // synth
    auto* sy = app.add_subcommand("synth", "generate a synthetic dataset with planted truth");
    std::string sy_out;
    SynthFlags sf;
    sy->add_option("--out", sy_out, "output directory")->required();
    sy->add_option("--task", sf.task, "spot, bulk or paired")->capture_default_str();
    sy->add_option("--seed", sf.world.seed, "world seed")->capture_default_str();
    sy->add_option("--samples", sf.layout.samples, "samples")->capture_default_str();
    sy->add_option("--spots", sf.layout.spots, "spots per sample")->capture_default_str();
    sy->add_option("--cells", sf.layout.cells_per_spot, "cells per spot")->capture_default_str();
    sy->add_option("--features", sf.world.features, "feature width")->capture_default_str();
    sy->add_option("--genes", sf.world.genes, "genes")->capture_default_str();
    sy->add_option("--types", sf.world.types, "planted cell types")->capture_default_str();
    sy->add_option("--noise", sf.world.noise, "expression noise scale")->capture_default_str();
    sy->add_option("--feature-noise", sf.world.feature_noise, "feature noise SD")->capture_default_str();
    sy->add_option("--bulk-samples", sf.bulk_samples, "bulk samples for --task paired")->capture_default_str();
    sy->add_option("--bulk-spots", sf.bulk_spots, "spots summed per bulk sample")->capture_default_str();

    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        try {
            app.parse(static_cast<int>(argv.size()), argv.data());
        } catch (const CLI::CallForHelp&) {
            out << app.help();
            return 0;
        } catch (const CLI::CallForAllHelp&) {
            out << app.help("", CLI::AppFormatMode::All);
            return 0;
        } catch (const CLI::CallForVersion&) {
            out << version() << '\n';
            return 0;
        } catch (const CLI::ParseError& e) {
            throw UsageError(e.what());
        }
        ctx.workdir = workdir;
        if (*ps) return cmd_prep_stain(ctx, ps_ref, ps_make, ps_in, ps_out, fo);
        if (*pg) return cmd_prep_genes(ctx, pg_manifest, pg_out, gf);
        if (*tr) return cmd_train(ctx, tr_manifest, tr_task, tr_genes, tr_out, tr_mf, tr_tf);
        if (*ft)
            return cmd_finetune(ctx, ft_base, ft_manifest, ft_genes, ft_out, ft_dir, ft_no_lora, ft_rank, ft_alpha,
                                ft_tf);
        if (*ev) return cmd_eval(ctx, ev_model, ev_manifest, ev_protocol, ev_out, ev_seed, ev_threads);
        if (*dc) return cmd_deconvolve(ctx, dc_model, dc_manifest, dc_out, dc_seed, dc_threads);
        if (*sy) return cmd_synth(ctx, sy_out, sf);
        throw UsageError("no command given");
    } catch (const Error& e) {
        err << "error: " << e.kind() << ": " << one_line(e.what()) << '\n';
        return e.kind() == "usage" ? 2 : 1;
    } catch (const std::exception& e) {
        err << "error: internal: " << one_line(e.what()) << '\n';
        return 1;
    }
}

}  // namespace bitro::cli
