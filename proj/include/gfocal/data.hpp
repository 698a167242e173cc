// Copyright (c) 2026 The GFocal Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gfocal/bundle.hpp"
#include "gfocal/layers.hpp"

namespace gfocal {

// ---------------------------------------------------------------------------
// Darcy flow  -div(a grad u) = f  on (0,1)^2, u = 0 on the boundary.
//
// Fields are n x n nodal arrays, node (i, j) at (x, y) = (i, j) / (n - 1). The
// operator is the 5-point finite-volume stencil with harmonic-mean face
// coefficients; boundary rows of u are fixed to zero.

struct DarcySolveStats {
    int iterations = 0;
    double relative_residual = 0.0;
    std::vector<double> residual_history;
};

inline constexpr double kDarcyTolerance = 1e-10;

/// Conjugate gradient on the interior unknowns. Throws Solver after 10 n^2 iterations.
Tensor darcy_solve(const Tensor& a, const Tensor& f, DarcySolveStats* stats = nullptr);

/// max |f - A u| over interior nodes divided by max |f| (absolute when f == 0),
/// assembled face by face, independently of the solver's stencil.
double darcy_residual(const Tensor& a, const Tensor& f, const Tensor& u);

/// Two-valued medium {3, 12} from thresholded, smoothed white noise.
Tensor sample_darcy_coefficient(std::size_t n, Rng& rng);

// ---------------------------------------------------------------------------

/// Stacked samples: coords [S x N x D], inputs [S x N x F_in], outputs [S x N x F_out].
struct SampleSet {
    Tensor coords;
    Tensor inputs;
    Tensor outputs;
    Geometry geometry;
    std::string task;
    std::uint64_t seed = 0;
    std::size_t size_param = 0;

    std::size_t count() const { return coords.dim(0); }
    std::size_t points() const { return coords.dim(1); }
    std::size_t coord_dim() const { return coords.dim(2); }
    std::size_t input_channels() const { return inputs.dim(2); }
    std::size_t output_channels() const { return outputs.dim(2); }

    Tensor sample_coords(std::size_t s) const { return coords.slice_first(s); }
    Tensor sample_inputs(std::size_t s) const { return inputs.slice_first(s); }
    Tensor sample_outputs(std::size_t s) const { return outputs.slice_first(s); }

    void validate() const;
    TensorBundle to_bundle() const;
    /// Throws MissingField / Format when required arrays are absent or inconsistent.
    static SampleSet from_bundle(const TensorBundle& bundle);
};

SampleSet generate_darcy(std::size_t count, std::size_t n, std::uint64_t seed);

/// Gaussian-kernel smoothing width used by the point-cloud operator.
inline constexpr double kPointCloudKernelWidth = 0.1;

/// h(p_i) = sum_j K(p_i, p_j) g(p_j) / sum_j K(p_i, p_j), Gaussian K, by direct summation.
std::vector<double> smooth_by_kernel(const Tensor& points, std::span<const double> g, double width);

SampleSet generate_pointcloud(std::size_t count, std::size_t n, std::uint64_t seed);

/// Rescales every coordinate axis of the set into [0, 1] by its min/max over all
/// samples when any coordinate lies outside the unit box. Returns true if it rescaled.
bool normalize_coordinates(SampleSet& set);

}  // namespace gfocal
