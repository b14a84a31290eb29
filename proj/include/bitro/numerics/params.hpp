// Copyright 2026 The bitro Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "bitro/numerics/tape.hpp"
#include "bitro/numerics/tensor.hpp"

namespace bitro {

/// Named parameter tensors with per-tensor trainable flags. Iteration order
/// is by name, which keeps every traversal deterministic.
class ParamTree {
public:
    struct Entry {
        Tensor value;
        bool trainable = true;
    };

    void set(const std::string& name, Tensor value, bool trainable = true);
    bool contains(const std::string& name) const { return entries_.count(name) != 0; }
    const Tensor& at(const std::string& name) const;
    Tensor& mutable_at(const std::string& name);
    bool trainable(const std::string& name) const;
    void set_trainable(const std::string& name, bool trainable);
    void freeze_all();
    void erase(const std::string& name) { entries_.erase(name); }

    const std::map<std::string, Entry>& entries() const { return entries_; }
    std::vector<std::string> names() const;
    std::size_t size() const { return entries_.size(); }
    std::size_t trainable_values() const;

private:
    std::map<std::string, Entry> entries_;
};

/// Parameters placed on a tape: trainable ones as named leaves, frozen ones
/// as constants.
class Bound {
public:
    Bound(const ParamTree& params, ad::Tape& tape);
    ad::Var operator[](const std::string& name) const;
    bool contains(const std::string& name) const { return vars_.count(name) != 0; }
    ad::Tape& tape() const { return *tape_; }

    /// Gradients of the trainable entries after tape.backward().
    std::map<std::string, Tensor> grads(const ParamTree& params) const;

    /// Replace the binding of `name` with a derived expression (used to apply
    /// LoRA deltas on the fly).
    void rebind(const std::string& name, ad::Var v) { vars_[name] = v; }

private:
    ad::Tape* tape_;
    std::map<std::string, ad::Var> vars_;
    std::map<std::string, ad::Var> leaves_;
};

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    /// Global L2 gradient-norm cap across all trainable tensors; <= 0 disables.
    double clip_norm = 1.0;
};

struct AdamState {
    AdamConfig config;
    std::uint64_t step = 0;
    std::map<std::string, Tensor> m;
    std::map<std::string, Tensor> v;
};

/// One bias-corrected Adam update of every trainable tensor. Gradients are
/// first rescaled so their global norm is at most clip_norm. Frozen tensors
/// are never touched. Returns the global gradient norm before clipping.
/// Throws ContractError if a trainable tensor has no gradient.
double adam_step(ParamTree& params, const std::map<std::string, Tensor>& grads, AdamState& state);

}  // namespace bitro
