// Copyright 2026 The bitro Authors
// SPDX-License-Identifier: Apache-2.0

#include "bitro/train/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "bitro/error.hpp"

namespace bitro::train {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

json config_to_json(const mil::ModelConfig& c) {
    return {{"d_model", c.d_model},       {"genes", c.genes},         {"gat_layers", c.gat_layers},
            {"gat_heads", c.gat_heads},   {"trf_layers", c.trf_layers}, {"trf_heads", c.trf_heads},
            {"ff_mult", c.ff_mult},       {"n_pos", c.n_pos},         {"knn", c.knn},
            {"window", c.window},         {"leaky_slope", c.leaky_slope}, {"ln_eps", c.ln_eps},
            {"use_softplus", c.use_softplus}};
}

mil::ModelConfig config_from_json(const json& j) {
    mil::ModelConfig c;
    try {
        c.d_model = j.at("d_model").get<std::size_t>();
        c.genes = j.at("genes").get<std::size_t>();
        c.gat_layers = j.at("gat_layers").get<std::size_t>();
        c.gat_heads = j.at("gat_heads").get<std::size_t>();
        c.trf_layers = j.at("trf_layers").get<std::size_t>();
        c.trf_heads = j.at("trf_heads").get<std::size_t>();
        c.ff_mult = j.at("ff_mult").get<std::size_t>();
        c.n_pos = j.at("n_pos").get<std::size_t>();
        c.knn = j.at("knn").get<std::size_t>();
        c.window = j.at("window").get<std::size_t>();
        c.leaky_slope = j.at("leaky_slope").get<double>();
        c.ln_eps = j.at("ln_eps").get<double>();
        c.use_softplus = j.at("use_softplus").get<bool>();
    } catch (const json::exception& e) {
        throw ParseError(std::string("checkpoint architecture: ") + e.what());
    }
    c.validate();
    return c;
}

namespace {

template <typename T>
void put(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

void put_tensor(std::string& out, const std::string& name, const Tensor& t) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) put<std::uint64_t>(out, e);
    for (double v : t.data()) put<double>(out, v);
}

class Reader {
public:
    Reader(const std::string& bytes, std::string origin) : b_(bytes), origin_(std::move(origin)) {}
    bool done() const { return pos_ == b_.size(); }
    template <typename T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, b_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s = b_.substr(pos_, n);
        pos_ += n;
        return s;
    }

private:
    void need(std::size_t n) const {
        if (b_.size() - pos_ < n)
            throw ParseError(origin_ + ": truncated checkpoint at byte " + std::to_string(pos_));
    }
    const std::string& b_;
    std::string origin_;
    std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const Checkpoint& ck) {
    json h;
    h["format"] = kCheckpointMagic;
    h["kind"] = ck.kind;
    h["architecture"] = config_to_json(ck.config);
    h["genes"] = ck.genes;
    json params = json::array(), frozen = json::array();
    for (const auto& [name, e] : ck.params.entries()) {
        params.push_back(name);
        if (!e.trainable) frozen.push_back(name);
    }
    h["params"] = params;
    h["frozen"] = frozen;
    if (ck.lora)
        h["lora"] = {{"rank", ck.lora->rank}, {"alpha", ck.lora->alpha}, {"targets", ck.lora->targets}};
    h["meta"] = ck.meta;
    const std::string header = h.dump();

    std::string out(kCheckpointMagic);
    put<std::uint64_t>(out, header.size());
    out += header;
    for (const auto& [name, e] : ck.params.entries()) put_tensor(out, name, e.value);
    for (const auto& [name, t] : ck.extras) {
        if (ck.params.contains(name)) throw ContractError("checkpoint tensor '" + name + "' stored twice");
        put_tensor(out, name, t);
    }
    if (ck.lora)
        put_tensor(out, "lora.meta",
                   Tensor(Shape{2}, std::vector<double>{static_cast<double>(ck.lora->rank), ck.lora->alpha}));
    return out;
}

Checkpoint decode_checkpoint(const std::string& bytes, const std::string& origin) {
    Reader r(bytes, origin);
    if (r.bytes(sizeof(kCheckpointMagic) - 1) != kCheckpointMagic)
        throw ParseError(origin + ": not a checkpoint (bad magic)");
    const auto hlen = r.get<std::uint64_t>();
    json h;
    try {
        h = json::parse(r.bytes(hlen));
    } catch (const json::exception& e) {
        throw ParseError(origin + ": checkpoint header: " + e.what());
    }
    Checkpoint ck;
    std::set<std::string> param_names, frozen;
    try {
        ck.kind = h.at("kind").get<std::string>();
        ck.config = config_from_json(h.at("architecture"));
        ck.genes = h.at("genes").get<std::vector<std::string>>();
        for (const auto& n : h.at("params")) param_names.insert(n.get<std::string>());
        for (const auto& n : h.at("frozen")) frozen.insert(n.get<std::string>());
        if (h.contains("lora")) {
            LoraAdapter a;
            a.rank = h["lora"].at("rank").get<std::size_t>();
            a.alpha = h["lora"].at("alpha").get<double>();
            a.targets = h["lora"].at("targets").get<std::vector<std::string>>();
            ck.lora = a;
        }
        ck.meta = h.value("meta", json::object());
    } catch (const json::exception& e) {
        throw ParseError(origin + ": checkpoint header: " + e.what());
    }
    while (!r.done()) {
        const std::string name = r.bytes(r.get<std::uint32_t>());
        const auto rank = r.get<std::uint32_t>();
        Shape shape(rank);
        for (auto& e : shape) e = r.get<std::uint64_t>();
        std::vector<double> data(shape_product(shape));
        for (double& v : data) v = r.get<double>();
        Tensor t(std::move(shape), std::move(data));
        if (name == "lora.meta") continue;
        if (param_names.count(name))
            ck.params.set(name, std::move(t), frozen.count(name) == 0);
        else
            ck.extras.emplace(name, std::move(t));
    }
    if (ck.params.size() != param_names.size()) throw ParseError(origin + ": checkpoint is missing tensors");
    if (ck.genes.size() != ck.config.genes)
        throw ParseError(origin + ": header lists " + std::to_string(ck.genes.size()) + " genes, architecture " +
                         std::to_string(ck.config.genes));
    return ck;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
    const std::string bytes = encode_checkpoint(ck);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path.string());
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("failed writing " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot read " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return decode_checkpoint(ss.str(), path.string());
}

}  // namespace bitro::train
