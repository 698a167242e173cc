// Copyright (c) 2026 The GFocal Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "gfocal/metrics.hpp"
#include "test_util.hpp"

using namespace gfocal;
using gfocal::testing::random_tensor;

namespace {

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i] / n;
        mb += b[i] / n;
    }
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

SurfaceSample circle(std::size_t b, double r, double v, double area) {
    SurfaceSample s;
    s.points = Tensor({b, 2});
    s.normals = Tensor({b, 2});
    s.shear = Tensor({b, 2});
    s.pressure = Tensor({b});
    s.measure = Tensor::full({b}, 2.0 * std::numbers::pi * r / static_cast<double>(b));
    for (std::size_t i = 0; i < b; ++i) {
        const double t = 2.0 * std::numbers::pi * (static_cast<double>(i) + 0.5) / static_cast<double>(b);
        s.points.at(i, 0) = r * std::cos(t);
        s.points.at(i, 1) = r * std::sin(t);
        s.normals.at(i, 0) = std::cos(t);
        s.normals.at(i, 1) = std::sin(t);
        s.pressure[i] = std::cos(t);
    }
    s.inlet_speed = v;
    s.reference_area = area;
    s.direction = {-1.0, 0.0};
    return s;
}

}  // namespace

TEST(RelativeL2, ExactValues) {
    Rng rng(1);
    const Tensor u = random_tensor({20, 2}, rng);
    EXPECT_EQ(relative_l2({u, u, std::nullopt}), 0.0);
    EXPECT_EQ(relative_l2({u, Tensor({20, 2}), std::nullopt}), 1.0);
    Tensor twice = u;
    for (double& x : twice.storage()) x *= 2.0;
    EXPECT_DOUBLE_EQ(relative_l2({u, twice, std::nullopt}), 1.0);
}

TEST(RelativeL2, WeightsAreQuadrature) {
    const Tensor u = Tensor::matrix(2, 1, {1.0, 1.0});
    const Tensor p = Tensor::matrix(2, 1, {1.0, 0.0});
    EXPECT_DOUBLE_EQ(relative_l2({u, p, Tensor::matrix(1, 2, {1.0, 3.0}).reshaped({2})}), std::sqrt(3.0 / 4.0));
}

TEST(RelativeL2, ZeroTruthIsDomainError) {
    EXPECT_THROW(relative_l2({Tensor({3, 1}), Tensor::full({3, 1}, 1.0), std::nullopt}), Error);
    EXPECT_THROW(relative_l2({Tensor({3, 1}), Tensor({2, 1}), std::nullopt}), Error);
}

TEST(GradLoss, ZeroForExactAndShiftInvariant) {
    Rng rng(2);
    const Tensor u = random_tensor({16, 1}, rng);
    Tensor shifted = u;
    for (double& x : shifted.storage()) x += 3.0;
    const Geometry g = Geometry::grid(4, 4);
    EXPECT_EQ(grad_loss({u, u, std::nullopt}, g), 0.0);
    EXPECT_NEAR(grad_loss({u, shifted, std::nullopt}, g), 0.0, 1e-12);
    EXPECT_THROW(grad_loss({u, u, std::nullopt}, Geometry::point_cloud()), Error);
}

TEST(Spearman, IdenticalAndReversed) {
    const std::vector<double> a{0.3, 1.2, -0.5, 4.0, 2.2};
    std::vector<double> rev(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) rev[i] = -a[i];
    EXPECT_EQ(spearman_rho(a, a), 1.0);
    EXPECT_EQ(spearman_rho(a, rev), -1.0);
}

TEST(Spearman, TiesUseAverageRanks) {
    const std::vector<double> a{1.0, 2.0, 2.0, 3.0, 5.0, 5.0, 5.0};
    const std::vector<double> b{2.0, 1.0, 4.0, 3.0, 7.0, 6.0, 6.0};
    const auto ra = average_ranks(a);
    EXPECT_EQ(ra, (std::vector<double>{1.0, 2.5, 2.5, 4.0, 6.0, 6.0, 6.0}));
    EXPECT_NEAR(spearman_rho(a, b), pearson(ra, average_ranks(b)), 1e-15);
}

TEST(Spearman, InvariantUnderMonotoneMaps) {
    Rng rng(3);
    std::vector<double> a(30), b(30), eb(30);
    for (std::size_t i = 0; i < 30; ++i) {
        a[i] = rng.normal();
        b[i] = a[i] + 0.5 * rng.normal();
        eb[i] = std::exp(3.0 * b[i]);
    }
    EXPECT_DOUBLE_EQ(spearman_rho(a, b), spearman_rho(a, eb));
    EXPECT_THROW(spearman_rho(a, std::vector<double>(29)), Error);
}

TEST(ForceCoefficient, CircleClosedForm) {
    for (double r : {1.0, 0.5}) {
        const SurfaceSample s = circle(512, r, 1.0, 1.0);
        EXPECT_NEAR(force_coefficient(s), -2.0 * std::numbers::pi * r, 1e-3);
    }
    const SurfaceSample s = circle(512, 1.0, 2.0, 3.0);
    EXPECT_NEAR(force_coefficient(s), -2.0 * std::numbers::pi / (4.0 * 3.0), 1e-3);
}

TEST(ForceCoefficient, ValidatesShapes) {
    SurfaceSample s = circle(16, 1.0, 1.0, 1.0);
    s.direction = {1.0};
    EXPECT_THROW(force_coefficient(s), Error);
    s = circle(16, 1.0, 0.0, 1.0);
    EXPECT_THROW(force_coefficient(s), Error);
}

TEST(MetricsReport, TextHasMachineBlock) {
    MetricsReport r;
    r.relative_l2 = 0.25;
    r.spearman_rho = 1.0;
    r.samples = 3;
    const std::string text = r.to_text();
    EXPECT_NE(text.find("relative_l2="), std::string::npos);
    EXPECT_NE(text.find("spearman_rho="), std::string::npos);
    EXPECT_EQ(text.find("coefficient_rl2"), std::string::npos);
}
