// Copyright (c) 2026 The GFocal Authors
// SPDX-License-Identifier: Apache-2.0

#include "gfocal/autodiff.hpp"

#include <algorithm>

namespace gfocal {

namespace {
std::string& corrupted_op() {
    static std::string op;
    return op;
}
}  // namespace

void set_corrupted_backward(std::string op) { corrupted_op() = std::move(op); }
const std::string& corrupted_backward() { return corrupted_op(); }

Parameter::Parameter(std::string name_, Tensor value_)
    : name(std::move(name_)), value(std::move(value_)), grad(value.shape(), value.dtype()) {}

void Parameter::zero_grad() {
    if (grad.shape() != value.shape() || grad.dtype() != value.dtype()) {
        grad = Tensor(value.shape(), value.dtype());
    } else {
        std::fill(grad.storage().begin(), grad.storage().end(), 0.0);
    }
}

const Tensor& Var::value() const { return tape_->nodes_.at(id_).value; }

Tensor Var::grad() const {
    const auto& node = tape_->nodes_.at(id_);
    if (node.has_grad) return node.grad;
    return Tensor(node.value.shape(), node.value.dtype());
}

const Tensor& BackwardContext::input(std::size_t k) const {
    return tape_->nodes_[tape_->nodes_[node_].inputs.at(k)].value;
}

bool BackwardContext::needs_grad(std::size_t k) const {
    return tape_->nodes_[tape_->nodes_[node_].inputs.at(k)].requires_grad;
}

Tensor& BackwardContext::input_grad(std::size_t k) { return tape_->grad_of(tape_->nodes_[node_].inputs.at(k)); }

Tensor& Tape::grad_of(std::size_t id) {
    Node& n = nodes_[id];
    if (!n.has_grad) {
        n.grad = Tensor(n.value.shape(), dtype_);
        n.has_grad = true;
    }
    return n.grad;
}

Var Tape::push(Node node) {
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
    Node n;
    n.op = "constant";
    n.value = value.astype(dtype_);
    return push(std::move(n));
}

Var Tape::variable(Tensor value) {
    Node n;
    n.op = "variable";
    n.value = value.astype(dtype_);
    n.requires_grad = true;
    return push(std::move(n));
}

Var Tape::param(Parameter& p) {
    if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
    Node n;
    n.op = "parameter";
    n.value = p.value.astype(dtype_);
    n.requires_grad = true;
    n.param = &p;
    Var v = push(std::move(n));
    param_nodes_.emplace(&p, v.id());
    return v;
}

Var Tape::record(std::string_view op, Tensor value, std::vector<Var> inputs, BackwardFn backward) {
    Node n;
    n.op = op;
    value.round_to_dtype();
    n.value = value.dtype() == dtype_ ? std::move(value) : value.astype(dtype_);
    n.inputs.reserve(inputs.size());
    for (const Var& v : inputs) {
        if (v.tape_ != this) fail(ErrorKind::Usage, std::string(op) + ": input recorded on a different tape");
        n.inputs.push_back(v.id_);
        n.requires_grad = n.requires_grad || nodes_[v.id_].requires_grad;
    }
    if (n.requires_grad) n.backward = std::move(backward);
    return push(std::move(n));
}

void Tape::backward(Var loss) {
    if (loss.tape_ != this) fail(ErrorKind::Usage, "backward: loss belongs to a different tape");
    if (nodes_[loss.id_].value.numel() != 1) {
        fail(ErrorKind::Usage, "backward: loss must be a scalar, got shape " +
                                   shape_string(nodes_[loss.id_].value.shape()));
    }
    for (Node& n : nodes_) {
        n.has_grad = false;
        n.grad = Tensor();
    }
    visited_.clear();
    grad_of(loss.id_)[0] = 1.0;

    const std::string& corrupt = corrupted_backward();
    for (std::size_t i = loss.id_ + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.has_grad || !n.requires_grad || !n.backward) continue;
        Tensor grad = n.grad;
        if (!corrupt.empty() && n.op == corrupt) {
            for (double& g : grad.storage()) g *= 1.5;
        }
        BackwardContext ctx(*this, i, grad, n.value);
        n.backward(ctx);
        for (std::size_t in : nodes_[i].inputs) {
            if (nodes_[in].has_grad) nodes_[in].grad.round_to_dtype();
        }
        visited_.push_back(i);
    }

    for (Node& n : nodes_) {
        if (n.param == nullptr || !n.has_grad) continue;
        Parameter& p = *n.param;
        if (p.grad.shape() != p.value.shape()) p.zero_grad();
        for (std::size_t k = 0; k < p.grad.numel(); ++k) p.grad[k] += n.grad[k];
        p.grad.round_to_dtype();
    }
}

}  // namespace gfocal
