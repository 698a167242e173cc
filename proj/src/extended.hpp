// Copyright (c) 2026 The GFocal Authors
// SPDX-License-Identifier: Apache-2.0

// Extended-precision dense matrices for the pseudoinverse and the fused
// Nystrom kernel. Internal to the library.

#pragma once

#include <cstddef>
#include <vector>

#include "gfocal/tensor.hpp"

namespace gfocal::detail {

/// Row-major matrix in working precision T (double or long double).
template <typename T>
struct WMat {
    using Work = T;
    std::size_t r = 0, c = 0;
    std::vector<Work> d;

    WMat() = default;
    WMat(std::size_t rows, std::size_t cols) : r(rows), c(cols), d(rows * cols, T(0)) {}
    explicit WMat(const Tensor& t);

    Work& operator()(std::size_t i, std::size_t j) { return d[i * c + j]; }
    Work operator()(std::size_t i, std::size_t j) const { return d[i * c + j]; }

    WMat t() const;
    Tensor to_tensor(DType dtype = DType::f64) const;
};

template <typename T>
WMat<T> operator*(const WMat<T>& a, const WMat<T>& b);
/// I - m for square m.
template <typename T>
WMat<T> complement(const WMat<T>& m);

template <typename T>
struct WorkSvd {
    using Work = T;
    std::size_t p = 0, q = 0;  // tall orientation, p >= q
    std::vector<Work> u;       // column-major p x q, columns normalized
    std::vector<Work> s;       // q, descending
    std::vector<Work> v;       // column-major q x q
    int sweeps = 0;
};

/// One-sided Jacobi of a tall matrix (rows >= cols). Throws Numeric on non-convergence.
template <typename T>
WorkSvd<T> jacobi_work(const WMat<T>& a, int max_sweeps);

/// Moore-Penrose pseudoinverse, any orientation, with the relative cutoff applied.
template <typename T>
WMat<T> pinv_work(const WMat<T>& a);

/// dA from dA+:  -P^T G P^T + (I - A P) G^T P P^T + P^T P G^T (I - P A), P = A+.
template <typename T>
WMat<T> pinv_pullback_work(const WMat<T>& a, const WMat<T>& p, const WMat<T>& g);

using LMat = WMat<long double>;

}  // namespace gfocal::detail
