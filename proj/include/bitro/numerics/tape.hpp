// Copyright 2026 The bitro Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <map>
#include <string>

#include "bitro/numerics/tensor.hpp"

namespace bitro::ad {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
public:
    Var() = default;

    const Tensor& value() const;
    const Tensor& grad() const;
    const Shape& shape() const { return value().shape(); }
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }

    Tape& tape() const { return *tape_; }
    std::size_t id() const { return id_; }
    bool valid() const { return tape_ != nullptr; }

private:
    friend class Tape;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Reverse-mode recorder. Ops push result nodes carrying a closure that
/// propagates the node's gradient into its parents; backward() replays them
/// in reverse order. Nodes that do not depend on any leaf keep no closure.
///
/// A tape built with recording=false never stores closures (inference).
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, std::size_t self)>;

    explicit Tape(bool recording = true) : recording_(recording) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Differentiable input. Named leaves are reported by named_grads().
    Var leaf(Tensor value, std::string name = {});
    Var constant(Tensor value);

    bool recording() const noexcept { return recording_; }
    std::size_t size() const noexcept { return nodes_.size(); }

    const Tensor& value(std::size_t id) const { return nodes_[id].value; }
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

    /// True when a result computed from `parents` must be differentiable.
    bool tracks(std::initializer_list<Var> parents) const;

    /// Appends a differentiable result node.
    Var push(Tensor value, BackwardFn fn);

    /// Appends a node that needs no gradient.
    Var push_constant(Tensor value) { return constant(std::move(value)); }

    /// Seeds d(loss)/d(loss) = 1 and propagates. Throws ContractError if the
    /// loss is not a single value or was already back-propagated.
    void backward(Var loss);

    /// Gradient of a node; a zero tensor of the right shape if never reached.
    const Tensor& grad(std::size_t id) const;

    /// Mutable accumulator used by backward closures.
    Tensor& grad_accum(std::size_t id);

    std::map<std::string, Tensor> named_grads() const;

private:
    struct Node {
        Tensor value;
        Tensor grad;
        BackwardFn backward;
        bool requires_grad = false;
        std::string name;
    };

    std::deque<Node> nodes_;
    bool recording_;
    bool done_ = false;
};

}  // namespace bitro::ad
