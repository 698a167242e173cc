// Copyright (c) 2026 The GFocal Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "gfocal/error.hpp"

namespace gfocal {

enum class DType : std::uint8_t { f32 = 1, f64 = 2 };

const char* to_string(DType dtype);
std::size_t dtype_size(DType dtype);
inline DType promote(DType a, DType b) { return (a == DType::f64 || b == DType::f64) ? DType::f64 : DType::f32; }

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array. Values are held in double precision; a float32 tensor
/// keeps every element exactly representable as a float (see round_to_dtype).
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, DType dtype = DType::f64);
    Tensor(Shape shape, std::vector<double> data, DType dtype = DType::f64);

    static Tensor zeros(Shape shape, DType dtype = DType::f64) { return Tensor(std::move(shape), dtype); }
    static Tensor full(Shape shape, double value, DType dtype = DType::f64);
    static Tensor scalar(double value, DType dtype = DType::f64);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values,
                         DType dtype = DType::f64);
    static Tensor identity(std::size_t n, DType dtype = DType::f64);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t numel() const noexcept { return data_.size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t rows() const;
    std::size_t cols() const;
    DType dtype() const noexcept { return dtype_; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    std::vector<double>& storage() noexcept { return data_; }
    const std::vector<double>& storage() const noexcept { return data_; }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }
    double& at(std::size_t r, std::size_t c) noexcept { return data_[r * shape_[1] + c]; }
    double at(std::size_t r, std::size_t c) const noexcept { return data_[r * shape_[1] + c]; }
    double item() const;

    /// Rounds every element to the precision of dtype() (no-op for f64).
    void round_to_dtype();
    Tensor astype(DType dtype) const;
    Tensor reshaped(Shape shape) const;
    Tensor transposed() const;

    /// Row `r` of a rank-2 tensor, or sample `r` of a rank-3 stack, as a new tensor.
    Tensor slice_first(std::size_t index) const;

    bool all_finite() const noexcept;
    bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }
    /// Exact element and dtype equality.
    bool identical(const Tensor& other) const noexcept;

private:
    Shape shape_;
    std::vector<double> data_;
    DType dtype_ = DType::f64;
};

void require_rank(const Tensor& t, std::size_t rank, const char* what);
void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

double max_abs_diff(const Tensor& a, const Tensor& b);
double frobenius_norm(const Tensor& t);

/// Plain (non-recorded) matrix product, used by oracles and linear algebra helpers.
Tensor matmul_plain(const Tensor& a, const Tensor& b);

}  // namespace gfocal
