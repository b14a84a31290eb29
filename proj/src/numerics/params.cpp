// Copyright 2026 The bitro Authors
// SPDX-License-Identifier: Apache-2.0

#include "bitro/numerics/params.hpp"

#include <cmath>

#include "bitro/error.hpp"

namespace bitro {

void ParamTree::set(const std::string& name, Tensor value, bool trainable) {
    entries_[name] = Entry{std::move(value), trainable};
}

const Tensor& ParamTree::at(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ContractError("no parameter named '" + name + "'");
    return it->second.value;
}

Tensor& ParamTree::mutable_at(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ContractError("no parameter named '" + name + "'");
    return it->second.value;
}

bool ParamTree::trainable(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ContractError("no parameter named '" + name + "'");
    return it->second.trainable;
}

void ParamTree::set_trainable(const std::string& name, bool trainable) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ContractError("no parameter named '" + name + "'");
    it->second.trainable = trainable;
}

void ParamTree::freeze_all() {
    for (auto& [name, e] : entries_) e.trainable = false;
}

std::vector<std::string> ParamTree::names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [name, e] : entries_) out.push_back(name);
    return out;
}

std::size_t ParamTree::trainable_values() const {
    std::size_t n = 0;
    for (const auto& [name, e] : entries_)
        if (e.trainable) n += e.value.size();
    return n;
}

Bound::Bound(const ParamTree& params, ad::Tape& tape) : tape_(&tape) {
    for (const auto& [name, e] : params.entries()) {
        if (e.trainable) {
            auto v = tape.leaf(e.value, name);
            vars_.emplace(name, v);
            leaves_.emplace(name, v);
        } else {
            vars_.emplace(name, tape.constant(e.value));
        }
    }
}

ad::Var Bound::operator[](const std::string& name) const {
    auto it = vars_.find(name);
    if (it == vars_.end()) throw ContractError("parameter '" + name + "' is not bound");
    return it->second;
}

std::map<std::string, Tensor> Bound::grads(const ParamTree& params) const {
    std::map<std::string, Tensor> out;
    for (const auto& [name, v] : leaves_)
        if (params.contains(name) && params.trainable(name)) out.emplace(name, v.grad());
    return out;
}

double adam_step(ParamTree& params, const std::map<std::string, Tensor>& grads, AdamState& state) {
    const AdamConfig& c = state.config;
    double sq = 0.0;
    for (const auto& [name, e] : params.entries()) {
        if (!e.trainable) continue;
        auto it = grads.find(name);
        if (it == grads.end()) throw ContractError("missing gradient for trainable tensor '" + name + "'");
        if (it->second.shape() != e.value.shape())
            throw DimensionError("gradient for '" + name + "' has shape " + shape_str(it->second.shape()) +
                                 ", parameter has " + shape_str(e.value.shape()));
        for (double g : it->second.data()) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    const double clip = (c.clip_norm > 0.0 && norm > c.clip_norm) ? c.clip_norm / norm : 1.0;

    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(c.beta1, t);
    const double bc2 = 1.0 - std::pow(c.beta2, t);
    for (const auto& name : params.names()) {
        if (!params.trainable(name)) continue;
        Tensor& p = params.mutable_at(name);
        const Tensor& g = grads.at(name);
        auto [mit, m_new] = state.m.try_emplace(name, p.shape(), 0.0);
        auto [vit, v_new] = state.v.try_emplace(name, p.shape(), 0.0);
        Tensor& m = mit->second;
        Tensor& v = vit->second;
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double gi = g[i] * clip;
            m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * gi;
            v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * gi * gi;
            const double mh = m[i] / bc1;
            const double vh = v[i] / bc2;
            p[i] -= c.lr * mh / (std::sqrt(vh) + c.eps);
        }
    }
    return norm;
}

}  // namespace bitro
