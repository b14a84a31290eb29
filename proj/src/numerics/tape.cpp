// Copyright 2026 The bitro Authors
// SPDX-License-Identifier: Apache-2.0

#include "bitro/numerics/tape.hpp"

#include "bitro/error.hpp"

namespace bitro::ad {

const Tensor& Var::value() const { return tape_->value(id_); }
const Tensor& Var::grad() const { return tape_->grad(id_); }

Var Tape::leaf(Tensor value, std::string name) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = recording_;
    n.name = std::move(name);
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
    Node n;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
}

bool Tape::tracks(std::initializer_list<Var> parents) const {
    if (!recording_) return false;
    for (const Var& p : parents) {
        if (&p.tape() != this) throw ContractError("operands live on different tapes");
        if (nodes_[p.id()].requires_grad) return true;
    }
    return false;
}

Var Tape::push(Tensor value, BackwardFn fn) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = true;
    n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
}

void Tape::backward(Var loss) {
    if (&loss.tape() != this) throw ContractError("loss belongs to another tape");
    if (loss.value().size() != 1)
        throw ContractError("backward() needs a scalar loss, got shape " + shape_str(loss.shape()));
    if (done_) throw ContractError("tape was already back-propagated");
    done_ = true;
    if (!nodes_[loss.id()].requires_grad) return;
    grad_accum(loss.id())[0] = 1.0;
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (n.backward && !n.grad.empty()) n.backward(*this, i);
    }
}

const Tensor& Tape::grad(std::size_t id) const {
    Node& n = const_cast<Node&>(nodes_[id]);
    if (n.grad.empty() && !n.value.empty()) n.grad = Tensor(n.value.shape(), 0.0);
    return n.grad;
}

Tensor& Tape::grad_accum(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad = Tensor(n.value.shape(), 0.0);
    return n.grad;
}

std::map<std::string, Tensor> Tape::named_grads() const {
    std::map<std::string, Tensor> out;
    for (std::size_t i = 0; i < nodes_.size(); ++i)
        if (!nodes_[i].name.empty()) out.emplace(nodes_[i].name, grad(i));
    return out;
}

}  // namespace bitro::ad
