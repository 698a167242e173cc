// Copyright (c) 2026 The GFocal Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "gfocal/random.hpp"
#include "gfocal/tensor.hpp"
#include "test_util.hpp"

using namespace gfocal;

TEST(Tensor, ShapeAndAccess) {
    Tensor t = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
    EXPECT_EQ(t.rank(), 2u);
    EXPECT_EQ(t.numel(), 6u);
    EXPECT_EQ(t.at(1, 2), 6.0);
    EXPECT_EQ(t.transposed().at(2, 1), 6.0);
    EXPECT_EQ(shape_string(t.shape()), "[2x3]");
    EXPECT_THROW(t.reshaped({4, 2}), Error);
    EXPECT_EQ(t.reshaped({3, 2}).at(2, 1), 6.0);
}

TEST(Tensor, Float32RoundsOnCast) {
    Tensor t = Tensor::full({3}, 0.1);
    Tensor f = t.astype(DType::f32);
    EXPECT_EQ(f.dtype(), DType::f32);
    EXPECT_EQ(f[0], static_cast<double>(0.1f));
    EXPECT_NE(f[0], 0.1);
    EXPECT_FALSE(f.identical(t));
    EXPECT_TRUE(f.astype(DType::f64).astype(DType::f32).identical(f));
}

TEST(Tensor, SliceFirst) {
    Tensor stack({2, 3, 2});
    for (std::size_t i = 0; i < stack.numel(); ++i) stack[i] = static_cast<double>(i);
    Tensor s1 = stack.slice_first(1);
    ASSERT_EQ(s1.shape(), (Shape{3, 2}));
    EXPECT_EQ(s1.at(0, 0), 6.0);
    EXPECT_EQ(s1.at(2, 1), 11.0);
}

TEST(Tensor, MatmulPlainMatchesHandComputed) {
    Tensor a = Tensor::matrix(2, 2, {1, 2, 3, 4});
    Tensor b = Tensor::matrix(2, 1, {5, 6});
    Tensor c = matmul_plain(a, b);
    EXPECT_EQ(c.at(0, 0), 17.0);
    EXPECT_EQ(c.at(1, 0), 39.0);
    EXPECT_THROW(matmul_plain(b, b), Error);
}

TEST(Tensor, FiniteCheck) {
    Tensor t = Tensor::full({2, 2}, 1.0);
    EXPECT_TRUE(t.all_finite());
    t[3] = std::nan("");
    EXPECT_FALSE(t.all_finite());
}

TEST(Random, SameSeedSameStream) {
    Rng a(42), b(42), c(43);
    for (int i = 0; i < 16; ++i) {
        const auto x = a.next_u64();
        EXPECT_EQ(x, b.next_u64());
        (void)c;
    }
    EXPECT_NE(Rng(42).next_u64(), Rng(43).next_u64());
    EXPECT_NE(derive_seed(1, 2), derive_seed(2, 1));
}

TEST(Random, StateRoundTrip) {
    Rng a(7);
    for (int i = 0; i < 5; ++i) a.uniform();
    Rng b;
    b.load_state(a.save_state());
    for (int i = 0; i < 8; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Random, PermutationIsBijective) {
    Rng rng(3);
    const auto p = rng.permutation(50);
    std::set<std::size_t> seen(p.begin(), p.end());
    EXPECT_EQ(seen.size(), 50u);
    EXPECT_EQ(*seen.rbegin(), 49u);
}

TEST(Random, NormalMoments) {
    Rng rng(11);
    double s = 0.0, s2 = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double x = rng.normal();
        s += x;
        s2 += x * x;
    }
    EXPECT_NEAR(s / n, 0.0, 0.03);
    EXPECT_NEAR(s2 / n, 1.0, 0.05);
}
