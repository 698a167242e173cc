// Copyright (c) 2026 The GFocal Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "gfocal/optim.hpp"

using namespace gfocal;

TEST(AdamW, FirstStepMovesByLearningRate) {
    Parameter p("w", Tensor::matrix(1, 2, {1.0, -1.0}));
    p.grad = Tensor::matrix(1, 2, {0.3, -5.0});
    AdamWOptions o;
    o.lr = 0.01;
    o.weight_decay = 0.0;
    AdamW opt({&p}, o);
    opt.step();
    // Bias-corrected first step is lr * g / (|g| + eps).
    EXPECT_NEAR(p.value[0], 1.0 - 0.01, 1e-9);
    EXPECT_NEAR(p.value[1], -1.0 + 0.01, 1e-9);
    EXPECT_EQ(opt.step_count(), 1);
}

TEST(AdamW, DecoupledWeightDecay) {
    Parameter p("w", Tensor::matrix(1, 1, {2.0}));
    p.grad = Tensor::matrix(1, 1, {0.0});
    AdamWOptions o;
    o.lr = 0.1;
    o.weight_decay = 0.5;
    AdamW opt({&p}, o);
    opt.step();
    EXPECT_DOUBLE_EQ(p.value[0], 2.0 - 0.1 * 0.5 * 2.0);
}

TEST(AdamW, ZeroLearningRateKeepsParameters) {
    Parameter p("w", Tensor::matrix(1, 3, {1, 2, 3}));
    p.grad = Tensor::matrix(1, 3, {1, 1, 1});
    AdamWOptions o;
    o.lr = 0.0;
    AdamW opt({&p}, o);
    for (int i = 0; i < 3; ++i) opt.step();
    EXPECT_TRUE(p.value.identical(Tensor::matrix(1, 3, {1, 2, 3})));
}

TEST(AdamW, MinimizesQuadratic) {
    Parameter p("w", Tensor::matrix(1, 1, {5.0}));
    AdamWOptions o;
    o.lr = 0.1;
    o.weight_decay = 0.0;
    AdamW opt({&p}, o);
    for (int i = 0; i < 500; ++i) {
        p.grad = Tensor::matrix(1, 1, {2.0 * (p.value[0] - 1.5)});
        opt.step();
    }
    EXPECT_NEAR(p.value[0], 1.5, 1e-2);
}

TEST(Init, FanInBound) {
    Rng rng(1);
    const Tensor t = uniform_fan_in({64, 16}, 64, rng, DType::f64);
    for (double x : t.storage()) EXPECT_LE(std::abs(x), 0.125);
}
