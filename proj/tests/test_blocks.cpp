// Copyright (c) 2026 The GFocal Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "gfocal/blocks.hpp"
#include "gfocal/ops.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace gfocal;
using gfocal::testing::random_tensor;
using gfocal::testing::smooth_sequence;

namespace {

Tensor nystrom(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t landmarks) {
    Tape tape;
    return nystrom_attention_qkv(tape.constant(q), tape.constant(k), tape.constant(v), landmarks).value();
}

}  // namespace

TEST(SegmentMeans, RowsAverageContiguousBlocks) {
    const Tensor a = segment_mean_matrix(10, 4);
    ASSERT_EQ(a.shape(), (Shape{4, 10}));
    for (std::size_t s = 0; s < 4; ++s) {
        double t = 0.0;
        for (std::size_t i = 0; i < 10; ++i) t += a.at(s, i);
        EXPECT_NEAR(t, 1.0, 1e-15);
    }
    EXPECT_EQ(segment_mean_matrix(5, 64).rows(), 5u);
    EXPECT_THROW(segment_mean_matrix(5, 0), Error);
}

TEST(ExactAttention, MatchesLoopOracle) {
    Rng rng(1);
    const Tensor q = random_tensor({9, 4}, rng), k = random_tensor({9, 4}, rng), v = random_tensor({9, 3}, rng);
    Tape tape;
    const Tensor y = exact_attention(tape.constant(q), tape.constant(k), tape.constant(v)).value();
    EXPECT_LT(max_abs_diff(y, oracle::exact_attention(q, k, v)), 1e-14);
}

TEST(Nystrom, ExactWhenLandmarksCoverAllPoints) {
    Rng rng(2);
    for (std::size_t n : {4u, 16u, 32u}) {
        const Tensor q = random_tensor({n, 8}, rng), k = random_tensor({n, 8}, rng), v = random_tensor({n, 8}, rng);
        EXPECT_LT(max_abs_diff(nystrom(q, k, v, n), oracle::exact_attention(q, k, v)), 1e-8) << "N=" << n;
    }
}

TEST(Nystrom, ErrorShrinksWithMoreLandmarks) {
    const std::size_t n = 32;
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t lm : {2u, 4u, 8u, 16u}) {
        double total = 0.0;
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            Rng rng(seed);
            const Tensor q = smooth_sequence(n, 8, rng), k = smooth_sequence(n, 8, rng),
                         v = smooth_sequence(n, 8, rng);
            Tensor d = nystrom(q, k, v, lm);
            const Tensor e = oracle::exact_attention(q, k, v);
            for (std::size_t i = 0; i < d.numel(); ++i) d[i] -= e[i];
            total += frobenius_norm(d);
        }
        EXPECT_LE(total / 20.0, prev) << "landmarks=" << lm;
        prev = total / 20.0;
    }
}

TEST(Nystrom, OutputDtypeFollowsTape) {
    Rng rng(3);
    const Tensor q = random_tensor({12, 4}, rng);
    Tape tape(DType::f32);
    Var y = nystrom_attention_qkv(tape.constant(q), tape.constant(q), tape.constant(q), 4);
    EXPECT_EQ(y.value().dtype(), DType::f32);
    EXPECT_TRUE(y.value().all_finite());
}

TEST(ReferenceGrid, TwoByTwoIsUnitCorners) {
    const ReferenceGrid g = build_reference_grid(2, 2);
    ASSERT_EQ(g.points.shape(), (Shape{4, 2}));
    const Tensor corners = Tensor::matrix(4, 2, {0, 0, 0, 1, 1, 0, 1, 1});
    EXPECT_TRUE(g.points.identical(corners));
    EXPECT_EQ(build_reference_grid(3, 3).size(), 27u);
    EXPECT_THROW(build_reference_grid(1, 2), Error);
}

TEST(ReferenceGrid, DistancesMatchLoop) {
    Rng rng(4);
    const ReferenceGrid g = build_reference_grid(5, 2);
    const Tensor coords = random_tensor({40, 2}, rng, 0.0, 1.0);
    EXPECT_LT(max_abs_diff(grid_distances(coords, g), oracle::distances(coords, g.points)), 1e-12);
    EXPECT_THROW(grid_distances(random_tensor({3, 3}, rng), g), Error);
}

TEST(Slices, WeightsAreRowStochastic) {
    Rng rng(5);
    FocalLayerParams p = FocalLayerParams::make("f", GeometryKind::point_cloud, 8, 6, rng, DType::f64);
    Tape tape;
    const Tensor w =
        slice_weights(tape, tape.constant(random_tensor({30, 8}, rng, -5, 5)), p.slice_map, Geometry::point_cloud())
            .value();
    for (std::size_t i = 0; i < 30; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < 6; ++j) {
            EXPECT_GE(w.at(i, j), 0.0);
            s += w.at(i, j);
        }
        EXPECT_NEAR(s, 1.0, 1e-12);
    }
}

TEST(Slices, DesliceOfConstantTokens) {
    Rng rng(6);
    Tape tape;
    Var w = softmax_rows(tape.constant(random_tensor({20, 5}, rng, -3, 3)));
    Var tokens = tape.constant(Tensor::full({5, 3}, 2.5));
    const Tensor y = deslice(tokens, w).value();
    for (double v : y.storage()) EXPECT_NEAR(v, 2.5, 1e-12);
}

TEST(Slices, OneHotRoundTripIsExact) {
    // Each point belongs to one slice; each slice holds exactly one point.
    Rng rng(7);
    const std::size_t n = 6;
    const Tensor x = random_tensor({n, 4}, rng);
    Tensor w({n, n});
    const auto perm = rng.permutation(n);
    for (std::size_t i = 0; i < n; ++i) w.at(i, perm[i]) = 1.0;
    Tape tape;
    Var tokens = aggregate_tokens(tape.constant(x), tape.constant(w), 0.0);
    const Tensor y = deslice(tokens, tape.constant(w)).value();
    EXPECT_TRUE(y.identical(x));
}

TEST(PhysicsAttention, MatchesDoubleSum) {
    Rng rng(8);
    FocalLayerParams p = FocalLayerParams::make("f", GeometryKind::point_cloud, 8, 8, rng, DType::f64);
    const Tensor x = random_tensor({50, 8}, rng);
    Tape tape;
    const Tensor y = physics_attention(tape, tape.constant(x), p, Geometry::point_cloud()).value();
    EXPECT_LT(max_abs_diff(y, oracle::physics_attention(x, p)), 1e-10);
}

TEST(PhysicsAttention, GridMapChecksGeometry) {
    Rng rng(9);
    FocalLayerParams p = FocalLayerParams::make("f", GeometryKind::structured_grid, 4, 3, rng, DType::f64);
    Tape tape;
    Var x = tape.constant(random_tensor({12, 4}, rng));
    EXPECT_NO_THROW(physics_attention(tape, x, p, Geometry::grid(3, 4)));
    EXPECT_THROW(physics_attention(tape, x, p, Geometry::grid(4, 4)), Error);
    EXPECT_THROW(physics_attention(tape, x, p, Geometry::point_cloud()), Error);
}

TEST(GatedFusion, ZeroPositionTermScalesByGateCube) {
    Rng rng(10);
    GateParams g = GateParams::make("g", GeometryKind::point_cloud, 4, 9, rng, DType::f64);
    const Tensor x = random_tensor({7, 4}, rng);
    Tape tape;
    Var gx = tape.constant(x);
    const Tensor gate = sigmoid(g.gate(tape, gx, Geometry::point_cloud())).value();
    const Tensor y = gated_fuse(tape, gx, tape.constant(Tensor({7, 4})), g.gate, Geometry::point_cloud()).value();
    for (std::size_t i = 0; i < 7; ++i)
        for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(y.at(i, c), x.at(i, c) * std::pow(gate.at(i, 0), 3), 1e-14);
}
