// Copyright (c) 2026 The GFocal Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "gfocal/tensor.hpp"

namespace gfocal {

/// A learnable tensor with its accumulated gradient.
struct Parameter {
    Parameter() = default;
    Parameter(std::string name, Tensor value);

    std::string name;
    Tensor value;
    Tensor grad;

    void zero_grad();
    std::size_t numel() const { return value.numel(); }
};

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
public:
    Var() = default;

    const Tensor& value() const;
    /// Gradient of the last backward() target w.r.t. this value (zeros if unreached).
    Tensor grad() const;
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

/// View handed to a backward rule: the output gradient plus accumulators for each input.
class BackwardContext {
public:
    const Tensor& out_grad() const { return *out_grad_; }
    const Tensor& out_value() const { return *out_value_; }
    const Tensor& input(std::size_t k) const;
    bool needs_grad(std::size_t k) const;
    /// Zero-initialized on first access.
    Tensor& input_grad(std::size_t k);

private:
    friend class Tape;
    BackwardContext(Tape& tape, std::size_t node, const Tensor& grad, const Tensor& value)
        : tape_(&tape), node_(node), out_grad_(&grad), out_value_(&value) {}

    Tape* tape_;
    std::size_t node_;
    const Tensor* out_grad_;
    const Tensor* out_value_;
};

using BackwardFn = std::function<void(BackwardContext&)>;

/// Dynamically recorded computation for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order and every node's inputs precede it,
/// so walking the node list backwards is a reverse topological order.
class Tape {
public:
    explicit Tape(DType dtype = DType::f64) : dtype_(dtype) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    DType dtype() const { return dtype_; }

    Var constant(Tensor value);
    Var variable(Tensor value);
    /// Records `p` as a leaf; gradients reach p.grad on backward(). Repeated calls reuse one node.
    Var param(Parameter& p);

    Var record(std::string_view op, Tensor value, std::vector<Var> inputs, BackwardFn backward);

    /// Reverse sweep from a scalar `loss`; adds d(loss)/d(param) into each reachable Parameter::grad.
    void backward(Var loss);

    std::size_t size() const { return nodes_.size(); }
    std::string_view op_name(std::size_t id) const { return nodes_.at(id).op; }
    /// Node ids whose backward rule ran during the last backward(), in execution order.
    const std::vector<std::size_t>& last_backward_order() const { return visited_; }

private:
    friend class Var;
    friend class BackwardContext;

    struct Node {
        std::string_view op;
        Tensor value;
        Tensor grad;
        bool has_grad = false;
        bool requires_grad = false;
        std::vector<std::size_t> inputs;
        BackwardFn backward;
        Parameter* param = nullptr;
    };

    Var push(Node node);
    Tensor& grad_of(std::size_t id);

    DType dtype_;
    std::vector<Node> nodes_;
    std::unordered_map<const Parameter*, std::size_t> param_nodes_;
    std::vector<std::size_t> visited_;
};

/// Test hook: perturbs the backward rule of every node with the given op name
/// (the incoming gradient is scaled by 1.5). Empty string disables it.
void set_corrupted_backward(std::string op);
const std::string& corrupted_backward();

}  // namespace gfocal
