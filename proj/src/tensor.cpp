// Copyright (c) 2026 The GFocal Authors
// SPDX-License-Identifier: Apache-2.0

#include "gfocal/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

namespace gfocal {

const char* to_string(DType dtype) { return dtype == DType::f32 ? "float32" : "float64"; }

std::size_t dtype_size(DType dtype) { return dtype == DType::f32 ? 4 : 8; }

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape shape, DType dtype) : shape_(std::move(shape)), dtype_(dtype) {
    data_.assign(shape_numel(shape_), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> data, DType dtype)
    : shape_(std::move(shape)), data_(std::move(data)), dtype_(dtype) {
    if (shape_numel(shape_) != data_.size()) {
        fail(ErrorKind::Dimension, "shape " + shape_string(shape_) + " does not match " +
                                       std::to_string(data_.size()) + " elements");
    }
    round_to_dtype();
}

Tensor Tensor::full(Shape shape, double value, DType dtype) {
    Tensor t(std::move(shape), dtype);
    std::fill(t.data_.begin(), t.data_.end(), value);
    t.round_to_dtype();
    return t;
}

Tensor Tensor::scalar(double value, DType dtype) { return Tensor(Shape{}, {value}, dtype); }

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values, DType dtype) {
    return Tensor({rows, cols}, std::vector<double>(values), dtype);
}

Tensor Tensor::identity(std::size_t n, DType dtype) {
    Tensor t({n, n}, dtype);
    for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
    return t;
}

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= shape_.size()) {
        fail(ErrorKind::Dimension, "axis " + std::to_string(axis) + " out of range for " + shape_string(shape_));
    }
    return shape_[axis];
}

std::size_t Tensor::rows() const {
    require_rank(*this, 2, "rows()");
    return shape_[0];
}

std::size_t Tensor::cols() const {
    require_rank(*this, 2, "cols()");
    return shape_[1];
}

double Tensor::item() const {
    if (data_.size() != 1) fail(ErrorKind::Dimension, "item() on tensor of shape " + shape_string(shape_));
    return data_[0];
}

void Tensor::round_to_dtype() {
    if (dtype_ == DType::f32) {
        for (double& v : data_) v = static_cast<double>(static_cast<float>(v));
    }
}

Tensor Tensor::astype(DType dtype) const {
    Tensor t = *this;
    t.dtype_ = dtype;
    t.round_to_dtype();
    return t;
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_numel(shape) != data_.size()) {
        fail(ErrorKind::Dimension, "cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    }
    Tensor t = *this;
    t.shape_ = std::move(shape);
    return t;
}

Tensor Tensor::transposed() const {
    require_rank(*this, 2, "transposed()");
    const std::size_t m = shape_[0], n = shape_[1];
    Tensor t({n, m}, dtype_);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) t.data_[j * m + i] = data_[i * n + j];
    return t;
}

Tensor Tensor::slice_first(std::size_t index) const {
    if (shape_.empty() || index >= shape_[0]) {
        fail(ErrorKind::Dimension, "slice index " + std::to_string(index) + " out of range for " + shape_string(shape_));
    }
    Shape inner(shape_.begin() + 1, shape_.end());
    const std::size_t stride = shape_numel(inner);
    Tensor t(inner, dtype_);
    std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(index * stride), stride, t.data_.begin());
    return t;
}

bool Tensor::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

bool Tensor::identical(const Tensor& other) const noexcept {
    if (shape_ != other.shape_ || dtype_ != other.dtype_) return false;
    for (std::size_t i = 0; i < data_.size(); ++i) {
        // bitwise-equal including signed zero
        if (std::memcmp(&data_[i], &other.data_[i], sizeof(double)) != 0) return false;
    }
    return true;
}

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
    if (t.rank() != rank) {
        fail(ErrorKind::Dimension, std::string(what) + ": expected rank " + std::to_string(rank) + ", got " +
                                       shape_string(t.shape()));
    }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape() != b.shape()) {
        fail(ErrorKind::Dimension,
             std::string(what) + ": shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
    }
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

double frobenius_norm(const Tensor& t) {
    double s = 0.0;
    for (double v : t.data()) s += v * v;
    return std::sqrt(s);
}

Tensor matmul_plain(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "matmul");
    require_rank(b, 2, "matmul");
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    if (b.rows() != k) {
        fail(ErrorKind::Dimension, "matmul: inner dimensions differ " + shape_string(a.shape()) + " * " +
                                       shape_string(b.shape()));
    }
    Tensor c({m, n}, promote(a.dtype(), b.dtype()));
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    double* pc = c.data().data();
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = pc + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = pa[i * k + p];
            const double* brow = pb + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    c.round_to_dtype();
    return c;
}

}  // namespace gfocal
