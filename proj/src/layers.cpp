// Copyright (c) 2026 The GFocal Authors
// SPDX-License-Identifier: Apache-2.0

#include "gfocal/layers.hpp"

#include "gfocal/ops.hpp"
#include "gfocal/optim.hpp"

namespace gfocal {

const char* to_string(GeometryKind kind) {
    return kind == GeometryKind::structured_grid ? "structured_grid" : "point_cloud";
}

GeometryKind parse_geometry_kind(const std::string& text) {
    if (text == "point_cloud") return GeometryKind::point_cloud;
    if (text == "structured_grid") return GeometryKind::structured_grid;
    fail(ErrorKind::Config, "unknown geometry_kind '" + text + "' (expected point_cloud or structured_grid)");
}

void Geometry::check_points(std::size_t n) const {
    if (kind == GeometryKind::structured_grid && height * width != n) {
        fail(ErrorKind::Dimension, "grid " + std::to_string(height) + "x" + std::to_string(width) +
                                       " does not match " + std::to_string(n) + " points");
    }
}

Linear Linear::make(const std::string& name, std::size_t in, std::size_t out, bool bias, Rng& rng, DType dtype) {
    Linear l;
    l.weight = Parameter(name + ".weight", uniform_fan_in({in, out}, in, rng, dtype));
    l.has_bias = bias;
    if (bias) l.bias = Parameter(name + ".bias", uniform_fan_in({out}, in, rng, dtype));
    return l;
}

Var Linear::operator()(Tape& tape, Var x) {
    Var y = matmul(x, tape.param(weight));
    return has_bias ? add_bias(y, tape.param(bias)) : y;
}

void Linear::collect(std::vector<Parameter*>& out) {
    out.push_back(&weight);
    if (has_bias) out.push_back(&bias);
}

LayerNormParams LayerNormParams::make(const std::string& name, std::size_t channels, DType dtype) {
    return {Parameter(name + ".gain", Tensor::full({channels}, 1.0, dtype)),
            Parameter(name + ".bias", Tensor::zeros({channels}, dtype))};
}

Var LayerNormParams::operator()(Tape& tape, Var x) { return layernorm(x, tape.param(gain), tape.param(bias)); }

void LayerNormParams::collect(std::vector<Parameter*>& out) {
    out.push_back(&gain);
    out.push_back(&bias);
}

Mlp Mlp::make(const std::string& name, std::size_t in, std::size_t hidden, std::size_t out, Rng& rng, DType dtype) {
    Mlp m;
    m.in = Linear::make(name + ".0", in, hidden, true, rng, dtype);
    m.out = Linear::make(name + ".1", hidden, out, true, rng, dtype);
    return m;
}

Var Mlp::operator()(Tape& tape, Var x) { return out(tape, gelu(in(tape, x))); }

void Mlp::collect(std::vector<Parameter*>& params) {
    in.collect(params);
    out.collect(params);
}

LocalMap LocalMap::make(const std::string& name, GeometryKind kind, std::size_t in, std::size_t out, Rng& rng,
                        DType dtype) {
    LocalMap m;
    m.kind = kind;
    const std::size_t fan_in = kind == GeometryKind::structured_grid ? 9 * in : in;
    m.weight = Parameter(name + ".weight", uniform_fan_in({fan_in, out}, fan_in, rng, dtype));
    m.bias = Parameter(name + ".bias", uniform_fan_in({out}, fan_in, rng, dtype));
    return m;
}

Var LocalMap::operator()(Tape& tape, Var x, const Geometry& geometry) {
    if (geometry.kind != kind) {
        fail(ErrorKind::Config, std::string("map built for ") + to_string(kind) + " applied to " +
                                    to_string(geometry.kind) + " input");
    }
    if (kind == GeometryKind::structured_grid) {
        geometry.check_points(x.rows());
        x = im2col3x3(x, geometry.height, geometry.width);
    }
    return add_bias(matmul(x, tape.param(weight)), tape.param(bias));
}

void LocalMap::collect(std::vector<Parameter*>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
}

}  // namespace gfocal
