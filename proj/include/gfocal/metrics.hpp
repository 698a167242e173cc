// Copyright (c) 2026 The GFocal Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gfocal/layers.hpp"
#include "gfocal/tensor.hpp"

namespace gfocal {

/// Truth and prediction fields [N x F] with optional per-point quadrature weights [N].
struct FieldPair {
    Tensor truth;
    Tensor prediction;
    std::optional<Tensor> weights;
};

/// sqrt(sum_i w_i |u_i - u^_i|^2) / sqrt(sum_i w_i |u_i|^2); uniform weights when absent.
double relative_l2(const FieldPair& pair);

/// Relative L2 between finite-difference gradients of prediction and truth on a
/// regular grid ([0,1] per axis, so spacing 1/(extent-1)).
double grad_loss(const FieldPair& pair, const Geometry& geometry);

/// Boundary samples for a force coefficient integral.
struct SurfaceSample {
    Tensor points;     // [B x D]
    Tensor pressure;   // [B]
    Tensor normals;    // [B x D], outward unit
    Tensor shear;      // [B x D]
    Tensor measure;    // [B], segment lengths / areas
    double inlet_speed = 1.0;
    double reference_area = 1.0;
    std::vector<double> direction;  // unit vector, length D

    void validate() const;
};

/// C = 2/(v^2 A) * (sum_b p_b (n_b . i) ds_b + sum_b (tau_b . i) ds_b).
double force_coefficient(const SurfaceSample& s);

/// Lift direction used for AirfRANS-style surfaces and drag direction for car bodies.
inline const std::vector<double> kLiftDirection3d{0.0, 0.0, -1.0};
inline const std::vector<double> kDragDirection3d{-1.0, 0.0, 0.0};

/// 1-based ranks; tied values share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values);

/// Pearson correlation of average ranks.
double spearman_rho(std::span<const double> truth, std::span<const double> predicted);

struct MetricsReport {
    double relative_l2 = 0.0;
    std::optional<double> grad_loss;
    std::optional<double> coefficient;       // relative L2 of predicted vs true coefficients
    std::optional<double> spearman_rho;
    std::size_t samples = 0;

    /// Human-readable table followed by a key=value block.
    std::string to_text() const;
};

}  // namespace gfocal
