// Copyright (c) 2026 The GFocal Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gfocal/autodiff.hpp"
#include "gfocal/random.hpp"

namespace gfocal {

enum class GeometryKind : std::uint8_t { point_cloud = 0, structured_grid = 1 };

const char* to_string(GeometryKind kind);
GeometryKind parse_geometry_kind(const std::string& text);

/// Discretization of one sample. Grid points are ordered row-major (index = row * width + col).
struct Geometry {
    GeometryKind kind = GeometryKind::point_cloud;
    std::size_t height = 0;
    std::size_t width = 0;

    static Geometry point_cloud() { return {}; }
    static Geometry grid(std::size_t h, std::size_t w) { return {GeometryKind::structured_grid, h, w}; }
    void check_points(std::size_t n) const;
};

/// Affine map x*W + b with W stored [in x out].
struct Linear {
    Parameter weight;
    Parameter bias;
    bool has_bias = true;

    static Linear make(const std::string& name, std::size_t in, std::size_t out, bool bias, Rng& rng, DType dtype);
    Var operator()(Tape& tape, Var x);
    void collect(std::vector<Parameter*>& out);
};

struct LayerNormParams {
    Parameter gain;
    Parameter bias;

    static LayerNormParams make(const std::string& name, std::size_t channels, DType dtype);
    Var operator()(Tape& tape, Var x);
    void collect(std::vector<Parameter*>& out);
};

/// Linear -> GELU -> Linear.
struct Mlp {
    Linear in;
    Linear out;

    static Mlp make(const std::string& name, std::size_t in, std::size_t hidden, std::size_t out, Rng& rng,
                    DType dtype);
    Var operator()(Tape& tape, Var x);
    void collect(std::vector<Parameter*>& params);
};

/// Per-point linear map on point clouds, 3x3 zero-padded convolution on grids.
struct LocalMap {
    GeometryKind kind = GeometryKind::point_cloud;
    Parameter weight;  // [C x out] or [9C x out]
    Parameter bias;

    static LocalMap make(const std::string& name, GeometryKind kind, std::size_t in, std::size_t out, Rng& rng,
                         DType dtype);
    Var operator()(Tape& tape, Var x, const Geometry& geometry);
    void collect(std::vector<Parameter*>& out);
};

}  // namespace gfocal
