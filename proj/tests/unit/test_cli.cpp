// Copyright 2026 The bitro Authors
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <fstream>
#include <sstream>

#include "bitro/cli/cli.hpp"
#include "doctest.h"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
    int code;
    std::string out, err;
};

Result bitro_run(std::vector<std::string> args) {
    args.insert(args.begin(), "bitro");
    std::ostringstream out, err;
    const int code = bitro::cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("bitro_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

const std::vector<std::string> kSmallSynth = {"--samples", "3", "--spots", "12", "--cells", "6"};
const std::vector<std::string> kShortTrain = {"--d-model", "16", "--epochs", "3",     "--lr",
                                              "1e-3",      "--batch-size", "8", "--seed", "5"};

std::vector<std::string> cat(std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

// Every regular file under dir except run.json, keyed by relative path.
std::map<std::string, std::string> artifacts(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file() && e.path().filename() != "run.json")
            out[fs::relative(e.path(), dir).string()] = slurp(e.path());
    return out;
}

bool single_error_line(const Result& r) {
    return r.code != 0 && r.err.rfind("error: ", 0) == 0 && r.err.find('\n') == r.err.size() - 1;
}

}  // namespace

TEST_CASE("errors are one machine-parsable line with a nonzero exit") {
    const auto dir = scratch("errors");
    auto r = bitro_run({"train", "--bogus"});
    CHECK(single_error_line(r));
    CHECK(r.err.rfind("error: usage: ", 0) == 0);

    r = bitro_run({"--workdir", dir.string(), "eval", "--model", "missing.bitro", "--manifest", "m.json", "--out",
                   "x"});
    CHECK(single_error_line(r));
    CHECK(r.err.rfind("error: io: ", 0) == 0);

    std::ofstream(dir / "bad.json") << "{\"task\": \"spot\"";
    r = bitro_run({"--workdir", dir.string(), "prep-genes", "--manifest", "bad.json", "--out", "g"});
    CHECK(single_error_line(r));
    CHECK(r.err.rfind("error: parse: ", 0) == 0);

    r = bitro_run({});
    CHECK(single_error_line(r));
}

TEST_CASE("help lists every flag with its default") {
    const auto r = bitro_run({"train", "--help"});
    CHECK(r.code == 0);
    for (const char* flag : {"--lr", "--epochs", "--patience", "--clip", "--lambda", "--dropout", "--seed",
                             "--batch-size", "--d-model", "--gat-layers", "--trf-layers", "--knn", "--clusters",
                             "--no-normalize", "--no-softplus", "--pca-per-sample", "--genes"})
        CHECK_MESSAGE(r.out.find(flag) != std::string::npos, flag);
    CHECK(r.out.find("[0.0001]") != std::string::npos);
    CHECK(r.out.find("[0.3]") != std::string::npos);
    for (const char* cmd : {"prep-stain", "prep-genes", "finetune", "eval", "deconvolve", "synth"})
        CHECK(bitro_run({cmd, "--help"}).code == 0);
    CHECK(bitro_run({"--version"}).out == bitro::cli::version() + "\n");
}

TEST_CASE("reruns with the same seed produce byte-identical artifacts") {
    const auto dir = scratch("determinism");
    const std::string wd = dir.string();
    REQUIRE(bitro_run(cat({"--workdir", wd, "synth", "--out", "data", "--seed", "3"}, kSmallSynth)).code == 0);
    for (const char* run : {"a", "b"}) {
        const std::string base = std::string(run);
        REQUIRE(bitro_run(cat({"--workdir", wd, "train", "--manifest", "data/manifest.json", "--out", base + "/train"},
                              kShortTrain))
                    .code == 0);
        REQUIRE(bitro_run({"--workdir", wd, "eval", "--model", base + "/train/model.bitro", "--manifest",
                           "data/manifest.json", "--out", base + "/eval"})
                    .code == 0);
        REQUIRE(bitro_run({"--workdir", wd, "deconvolve", "--model", base + "/train/model.bitro", "--manifest",
                           "data/manifest.json", "--out", base + "/dc"})
                    .code == 0);
        REQUIRE(bitro_run({"--workdir", wd, "prep-genes", "--manifest", "data/manifest.json", "--out", base + "/genes",
                           "-k", "20"})
                    .code == 0);
        REQUIRE(bitro_run(cat({"--workdir", wd, "synth", "--out", base + "/synth", "--seed", "3"}, kSmallSynth))
                    .code == 0);
    }
    const auto a = artifacts(dir / "a"), b = artifacts(dir / "b");
    CHECK(a.size() >= 10);
    REQUIRE(a.size() == b.size());
    for (const auto& [name, bytes] : a) CHECK_MESSAGE(b.at(name) == bytes, name);
    // the synth copy matches the first dataset too
    CHECK(slurp(dir / "a/synth/s1_expr.tsv") == slurp(dir / "data/s1_expr.tsv"));
}

TEST_CASE("every command leaves a run record") {
    const auto dir = scratch("record");
    const std::string wd = dir.string();
    REQUIRE(bitro_run(cat({"--workdir", wd, "synth", "--out", "data"}, kSmallSynth)).code == 0);
    REQUIRE(bitro_run(cat({"--workdir", wd, "train", "--manifest", "data/manifest.json", "--out", "m"}, kShortTrain))
                .code == 0);
    for (const char* sub : {"data", "m"}) {
        const auto rec = json::parse(slurp(dir / sub / "run.json"));
        for (const char* key : {"command", "command_line", "config_hash", "seed", "version", "timings", "outputs"})
            CHECK_MESSAGE(rec.contains(key), key);
        CHECK(rec["config_hash"].get<std::string>().size() == 16);
    }
    const auto rec = json::parse(slurp(dir / "m/run.json"));
    CHECK(rec["seed"] == 5);
    CHECK(rec["version"] == bitro::cli::version());
    for (const auto& p : rec["outputs"]) CHECK(fs::exists(p.get<std::string>()));
}

TEST_CASE("ablation flags land in summary.json and the checkpoint") {
    const auto dir = scratch("ablation");
    const std::string wd = dir.string();
    REQUIRE(bitro_run(cat({"--workdir", wd, "synth", "--out", "data"}, kSmallSynth)).code == 0);
    REQUIRE(bitro_run(cat(cat({"--workdir", wd, "train", "--manifest", "data/manifest.json", "--out", "plain"},
                              kShortTrain),
                          {"--lambda", "0", "--no-normalize", "--no-softplus"}))
                .code == 0);
    const auto s = json::parse(slurp(dir / "plain/summary.json"));
    CHECK(s["lambda"] == 0.0);
    CHECK(s["prep"]["normalize"] == false);
    CHECK(s["model"]["use_softplus"] == false);
    CHECK_FALSE(fs::exists(dir / "plain/norm_stats.tsv"));

    REQUIRE(bitro_run(cat(cat({"--workdir", wd, "train", "--manifest", "data/manifest.json", "--out", "soft"},
                              kShortTrain),
                          {"--no-normalize"}))
                .code == 0);
    CHECK(json::parse(slurp(dir / "soft/summary.json"))["model"]["use_softplus"] == true);
}

TEST_CASE("finetune checks the transfer direction and writes both checkpoints") {
    const auto dir = scratch("finetune");
    const std::string wd = dir.string();
    REQUIRE(bitro_run({"--workdir", wd, "synth", "--task", "paired", "--out", "pair", "--samples", "3", "--spots",
                       "12", "--cells", "6", "--bulk-samples", "6", "--bulk-spots", "4"})
                .code == 0);
    REQUIRE(bitro_run(cat({"--workdir", wd, "train", "--manifest", "pair/st/manifest.json", "--out", "st"},
                          kShortTrain))
                .code == 0);
    const std::vector<std::string> ft = {"--workdir", wd, "finetune", "--base", "st/model.bitro", "--manifest",
                                         "pair/bulk/manifest.json", "--epochs", "2", "--lora-rank", "4"};
    auto bad = bitro_run(cat(ft, {"--out", "bad", "--direction", "bulk2st"}));
    CHECK(single_error_line(bad));
    CHECK(bad.err.rfind("error: transfer: ", 0) == 0);

    REQUIRE(bitro_run(cat(ft, {"--out", "ok", "--direction", "st2bulk"})).code == 0);
    CHECK(fs::exists(dir / "ok/adapter.bitro"));
    CHECK(fs::exists(dir / "ok/model.bitro"));
    const auto r = bitro_run({"--workdir", wd, "eval", "--model", "ok/model.bitro", "--manifest",
                              "pair/bulk/manifest.json", "--out", "ev"});
    CHECK(r.code == 0);
    CHECK(fs::exists(dir / "ev/eval_report.tsv"));
}
