// Copyright (c) 2026 The GFocal Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "gfocal/autodiff.hpp"
#include "gfocal/random.hpp"

namespace gfocal {

struct AdamWOptions {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-5;
};

/// AdamW with decoupled weight decay: theta <- theta - lr*wd*theta, then the
/// bias-corrected Adam step.
class AdamW {
public:
    AdamW() = default;
    explicit AdamW(std::vector<Parameter*> params, AdamWOptions options = {});

    void step();
    void zero_grad();

    const AdamWOptions& options() const { return options_; }
    AdamWOptions& options() { return options_; }
    std::int64_t step_count() const { return step_; }
    void set_step_count(std::int64_t step) { step_ = step; }
    const std::vector<Parameter*>& params() const { return params_; }
    std::vector<Tensor>& first_moments() { return m_; }
    std::vector<Tensor>& second_moments() { return v_; }
    const std::vector<Tensor>& first_moments() const { return m_; }
    const std::vector<Tensor>& second_moments() const { return v_; }

private:
    std::vector<Parameter*> params_;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
    AdamWOptions options_;
    std::int64_t step_ = 0;
};

/// Uniform in +-sqrt(1/fan_in).
Tensor uniform_fan_in(Shape shape, std::size_t fan_in, Rng& rng, DType dtype);

}  // namespace gfocal
