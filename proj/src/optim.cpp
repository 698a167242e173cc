// Copyright (c) 2026 The GFocal Authors
// SPDX-License-Identifier: Apache-2.0

#include "gfocal/optim.hpp"

#include <cmath>

namespace gfocal {

AdamW::AdamW(std::vector<Parameter*> params, AdamWOptions options)
    : params_(std::move(params)), options_(options) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const Parameter* p : params_) {
        m_.emplace_back(p->value.shape(), DType::f64);
        v_.emplace_back(p->value.shape(), DType::f64);
    }
}

void AdamW::zero_grad() {
    for (Parameter* p : params_) p->zero_grad();
}

void AdamW::step() {
    if (params_.empty()) return;
    ++step_;
    const auto& o = options_;
    const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(step_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        Parameter& p = *params_[k];
        if (p.grad.shape() != p.value.shape()) p.zero_grad();
        Tensor& m = m_[k];
        Tensor& v = v_[k];
        for (std::size_t i = 0; i < p.value.numel(); ++i) {
            const double g = p.grad[i];
            double theta = p.value[i];
            theta -= o.lr * o.weight_decay * theta;
            m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * g;
            v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            theta -= o.lr * mhat / (std::sqrt(vhat) + o.eps);
            p.value[i] = theta;
        }
        p.value.round_to_dtype();
    }
}

Tensor uniform_fan_in(Shape shape, std::size_t fan_in, Rng& rng, DType dtype) {
    Tensor t(std::move(shape), dtype);
    const double bound = std::sqrt(1.0 / static_cast<double>(fan_in == 0 ? 1 : fan_in));
    for (double& v : t.storage()) v = rng.uniform(-bound, bound);
    t.round_to_dtype();
    return t;
}

}  // namespace gfocal
