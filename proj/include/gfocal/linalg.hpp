// Copyright (c) 2026 The GFocal Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "gfocal/tensor.hpp"

namespace gfocal {

/// Thin SVD A = U diag(s) V^T of a p x q matrix with p >= q, singular values descending.
struct Svd {
    Tensor u;               // p x q
    std::vector<double> s;  // q
    Tensor v;               // q x q
    int sweeps = 0;
};

/// One-sided Jacobi SVD (extended-precision working arithmetic). Throws Numeric when max_sweeps is exhausted.
Svd jacobi_svd(const Tensor& a, int max_sweeps = 60);

/// Singular values below this multiple of the largest are treated as zero.
inline constexpr double kPinvRelativeCutoff = 1e-10;

/// Moore-Penrose pseudoinverse via the full SVD, accumulated in extended precision.
Tensor pinv_plain(const Tensor& a);

/// pinv(a) x without rounding pinv(a) first. Result takes x's dtype promoted with a's.
Tensor pinv_apply_plain(const Tensor& a, const Tensor& x);

/// Pullback of A -> A+ for an upstream gradient g shaped like A+ (locally constant rank).
///
/// Evaluated in extended precision: for an ill-conditioned core the projector
/// terms are O(eps * cond) and get multiplied by A+ A+^T, which is O(cond^2).
Tensor pinv_backward(const Tensor& a, const Tensor& g);

/// Pullbacks of (A, X) -> A+ X into *ga and *gx (either may be null).
void pinv_apply_backward(const Tensor& a, const Tensor& x, const Tensor& g, Tensor* ga, Tensor* gx);

}  // namespace gfocal
