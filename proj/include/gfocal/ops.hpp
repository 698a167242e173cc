// Copyright (c) 2026 The GFocal Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>

#include "gfocal/autodiff.hpp"

namespace gfocal {

// Differentiable operations recorded on the inputs' tape. Rank-2 tensors are
// [rows x cols]; "rows" are points/tokens and "cols" are channels throughout.

Var matmul(Var a, Var b);
/// a * b^T without materializing the transpose.
Var matmul_nt(Var a, Var b);
Var transpose(Var a);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
/// x[N x C] + b[C] broadcast over rows.
Var add_bias(Var x, Var bias);
/// x[N x C] scaled row-wise by gate[N x 1].
Var mul_rows(Var x, Var gate);
Var concat_cols(Var a, Var b);

/// Row-wise softmax with max subtraction.
Var softmax_rows(Var x);
inline constexpr double kLayerNormEps = 1e-5;
Var layernorm(Var x, Var gain, Var bias, double eps = kLayerNormEps);
/// Exact (erf) GELU.
Var gelu(Var x);
Var sigmoid(Var x);

/// Moore-Penrose pseudoinverse. The backward rule is the derivative of A+ for
/// locally constant rank.
Var pinv(Var a);

/// pinv(a) x, accumulated in extended precision. When a is ill-conditioned the
/// entries of pinv(a) are large, and rounding them before the product costs
/// digits that the product itself does not need.
Var pinv_matmul(Var a, Var x);

/// Fused Nystrom attention. With landmarks qt = A q, kt = A k (A[L x N] given):
///   softmax(s q kt^T) pinv(softmax(s qt kt^T)) softmax(s qt k^T) v.
/// Forward and backward run in one working precision end to end: long double
/// on float64 tapes, double on float32 tapes. The landmark core can reach
/// condition numbers near 1e7 at initialization, and its pseudoinverse
/// amplifies rounding in the softmax entries by the square of that.
Var nystrom_fused(Var q, Var k, Var v, const Tensor& averaging, double scale);

/// Slice tokens t[L x C]: t_j = sum_i w_ij f_i / (sum_i w_ij + eps).
inline constexpr double kTokenEps = 1e-8;
Var aggregate_tokens(Var features, Var weights, double eps = kTokenEps);

/// Gathers the 3x3 zero-padded neighbourhood of each node of an H x W grid
/// (point index = row * W + col): x[HW x C] -> [HW x 9C], column = tap * C + channel.
Var im2col3x3(Var x, std::size_t height, std::size_t width);

Var sum(Var x);
Var mean(Var x);
/// ||pred - target||_2 / ||target||_2 as a scalar.
Var relative_l2(Var pred, Var target);
/// Finite-difference gradient of grid fields x[HW x F]: rows [0, HW) hold the
/// derivative along the row axis, rows [HW, 2HW) along the column axis.
/// Second-order central stencils, second-order one-sided at the edges.
Var grid_gradient(Var x, std::size_t height, std::size_t width, double row_spacing, double col_spacing);

/// Plain-tensor version of grid_gradient, shared with the metrics module.
Tensor grid_gradient_plain(const Tensor& x, std::size_t height, std::size_t width, double row_spacing,
                           double col_spacing);

}  // namespace gfocal
