// Copyright 2026 The bitro Authors
// SPDX-License-Identifier: Apache-2.0

#include "bitro/train/lora.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "bitro/error.hpp"
#include "bitro/mil/model.hpp"
#include "bitro/numerics/ops.hpp"
#include "bitro/rng.hpp"
#include "bitro/simd/kernels.hpp"

namespace bitro::train {

std::vector<std::string> default_lora_targets() {
    return {"trf.*.q", "trf.*.k", "trf.*.v", "trf.*.o", "trf.*.ffn_in", "trf.*.ffn_out", "mil.q_gene", "mil.w1"};
}

namespace {

std::vector<std::string> split_dots(const std::string& s) {
    std::vector<std::string> out;
    std::size_t b = 0;
    for (std::size_t e; (e = s.find('.', b)) != std::string::npos; b = e + 1) out.push_back(s.substr(b, e - b));
    out.push_back(s.substr(b));
    return out;
}

bool matches(const std::string& pattern, const std::string& name) {
    const auto p = split_dots(pattern), n = split_dots(name);
    if (p.size() != n.size()) return false;
    for (std::size_t i = 0; i < p.size(); ++i)
        if (p[i] != "*" && p[i] != n[i]) return false;
    return true;
}

bool is_aux(const std::string& name) { return name.rfind("lora.", 0) == 0 || name == kFreshRowsName; }

// s * up * down, computed the same way for the on-the-fly and merged paths.
Tensor delta_of(const Tensor& up, const Tensor& down, double s) {
    Tensor d(Shape{up.rows(), down.cols()});
    simd::gemm_nn(simd::active(), up.rows(), up.cols(), down.cols(), up.data().data(), down.data().data(),
                  d.data().data());
    for (double& v : d.data()) v *= s;
    return d;
}

std::vector<std::size_t> fresh_map(std::size_t genes, const std::vector<std::size_t>& fresh_rows) {
    std::vector<std::size_t> map(genes, 0);
    for (std::size_t r = 0; r < fresh_rows.size(); ++r) map.at(fresh_rows[r]) = r + 1;
    return map;
}

}  // namespace

std::vector<std::string> resolve_targets(const ParamTree& params, const std::vector<std::string>& patterns) {
    std::vector<std::string> out;
    for (const auto& pat : patterns) {
        bool any = false;
        for (const auto& [name, entry] : params.entries()) {
            if (is_aux(name) || !matches(pat, name)) continue;
            if (entry.value.rank() != 2)
                throw ConfigError("LoRA target '" + name + "' is not a matrix (shape " +
                                  shape_str(entry.value.shape()) + ")");
            if (std::find(out.begin(), out.end(), name) == out.end()) out.push_back(name);
            any = true;
        }
        if (!any) throw ConfigError("LoRA target '" + pat + "' matches no parameter");
    }
    return out;
}

LoraAdapter attach_lora(ParamTree& params, const std::vector<std::string>& patterns, std::size_t rank,
                        double alpha, std::uint64_t seed) {
    if (rank == 0) throw ConfigError("LoRA rank must be positive");
    LoraAdapter ad;
    ad.rank = rank;
    ad.alpha = alpha;
    ad.targets = resolve_targets(params, patterns);
    for (const auto& name : params.names())
        if (name != kFreshRowsName) params.set_trainable(name, false);
    for (const auto& t : ad.targets) {
        const Tensor& w = params.at(t);
        Rng rng(mix_seed(seed, fnv1a(t)));
        Tensor down(Shape{rank, w.cols()});
        const double sd = 1.0 / std::sqrt(static_cast<double>(w.cols()));
        for (double& v : down.data()) v = rng.normal(0.0, sd);
        params.set(LoraAdapter::up_name(t), Tensor(Shape{w.rows(), rank}, 0.0));
        params.set(LoraAdapter::down_name(t), std::move(down));
    }
    return ad;
}

Bound bind_model(const ParamTree& params, ad::Tape& tape, const Adaptation& adapt) {
    Bound b(params, tape);
    if (adapt.lora) {
        const double s = adapt.lora->scale();
        for (const auto& t : adapt.lora->targets) {
            ad::Var up = b[LoraAdapter::up_name(t)], down = b[LoraAdapter::down_name(t)];
            ad::Var delta = ad::scale(ad::matmul(up, down), s);
            b.rebind(t, ad::add(b[t], delta));
        }
    }
    if (!adapt.fresh_rows.empty()) {
        ad::Var q = b["mil.q_gene"];
        ad::Var fresh = b[kFreshRowsName];
        ad::Var padded = ad::concat_rows({tape.constant(Tensor(Shape{1, q.cols()}, 0.0)), fresh});
        const auto map = fresh_map(q.rows(), adapt.fresh_rows);
        b.rebind("mil.q_gene", ad::add(q, ad::gather_rows(padded, map)));
    }
    return b;
}

ParamTree merge(const ParamTree& params, const Adaptation& adapt) {
    ParamTree out;
    for (const auto& [name, e] : params.entries())
        if (!is_aux(name)) out.set(name, e.value, true);
    if (adapt.lora) {
        for (const auto& t : adapt.lora->targets) {
            Tensor w = params.at(t);
            const Tensor d = delta_of(params.at(LoraAdapter::up_name(t)), params.at(LoraAdapter::down_name(t)),
                                      adapt.lora->scale());
            for (std::size_t i = 0; i < w.size(); ++i) w[i] = w[i] + d[i];
            out.set(t, std::move(w));
        }
    }
    if (!adapt.fresh_rows.empty()) {
        Tensor q = out.at("mil.q_gene");
        const Tensor& fresh = params.at(kFreshRowsName);
        for (std::size_t r = 0; r < adapt.fresh_rows.size(); ++r)
            for (std::size_t c = 0; c < q.cols(); ++c) q(adapt.fresh_rows[r], c) += fresh(r, c);
        out.set("mil.q_gene", std::move(q));
    }
    return out;
}

Reheaded rehead(const ParamTree& base, const std::vector<std::string>& base_genes,
                const std::vector<std::string>& target_genes, std::uint64_t seed) {
    const Tensor& q = base.at("mil.q_gene");
    if (q.rows() != base_genes.size())
        throw ContractError("mil.q_gene has " + std::to_string(q.rows()) + " rows for " +
                            std::to_string(base_genes.size()) + " genes");
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < base_genes.size(); ++i) index.emplace(base_genes[i], i);
    Reheaded out;
    out.params = base;
    Tensor nq(Shape{target_genes.size(), q.cols()}, 0.0);
    for (std::size_t g = 0; g < target_genes.size(); ++g) {
        auto it = index.find(target_genes[g]);
        if (it == index.end()) {
            out.fresh_rows.push_back(g);
            continue;
        }
        ++out.shared;
        std::copy_n(q.row_span(it->second).begin(), q.cols(), nq.row_span(g).begin());
    }
    if (out.shared == 0) throw TransferError("pretrained and target gene sets do not intersect");
    out.params.set("mil.q_gene", std::move(nq), base.trainable("mil.q_gene"));
    if (!out.fresh_rows.empty())
        out.params.set(kFreshRowsName, mil::init_gene_queries(out.fresh_rows.size(), q.cols(),
                                                               mix_seed(seed, fnv1a(kFreshRowsName))));
    return out;
}

}  // namespace bitro::train
