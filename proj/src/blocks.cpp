// Copyright (c) 2026 The GFocal Authors
// SPDX-License-Identifier: Apache-2.0

#include "gfocal/blocks.hpp"

#include <algorithm>
#include <cmath>

#include "gfocal/ops.hpp"

namespace gfocal {

AttentionProjections AttentionProjections::make(const std::string& name, std::size_t channels, Rng& rng,
                                                DType dtype) {
    return {Linear::make(name + ".query", channels, channels, false, rng, dtype),
            Linear::make(name + ".key", channels, channels, false, rng, dtype),
            Linear::make(name + ".value", channels, channels, false, rng, dtype)};
}

void AttentionProjections::collect(std::vector<Parameter*>& out) {
    query.collect(out);
    key.collect(out);
    value.collect(out);
}

Tensor segment_mean_matrix(std::size_t rows, std::size_t landmarks) {
    if (landmarks < 1) fail(ErrorKind::Config, "landmark count must be >= 1");
    landmarks = std::min(landmarks, rows);
    Tensor p({landmarks, rows});
    for (std::size_t s = 0; s < landmarks; ++s) {
        const std::size_t lo = s * rows / landmarks;
        const std::size_t hi = (s + 1) * rows / landmarks;
        const double w = 1.0 / static_cast<double>(hi - lo);
        for (std::size_t i = lo; i < hi; ++i) p.at(s, i) = w;
    }
    return p;
}

Var exact_attention(Var q, Var k, Var v) {
    const double inv = 1.0 / std::sqrt(static_cast<double>(q.cols()));
    return matmul(softmax_rows(scale(matmul_nt(q, k), inv)), v);
}

Var nystrom_attention_qkv(Var q, Var k, Var v, std::size_t landmarks) {
    if (landmarks < 1) fail(ErrorKind::Config, "nystrom attention needs at least one landmark");
    return nystrom_fused(q, k, v, segment_mean_matrix(q.rows(), landmarks),
                         1.0 / std::sqrt(static_cast<double>(q.cols())));
}

Var nystrom_attention(Tape& tape, Var features, AttentionProjections& proj, std::size_t landmarks) {
    if (landmarks < 1) fail(ErrorKind::Config, "landmark_num must be >= 1");
    return nystrom_attention_qkv(proj.query(tape, features), proj.key(tape, features), proj.value(tape, features),
                                 landmarks);
}

GlobalLayerParams GlobalLayerParams::make(const std::string& name, std::size_t channels, std::size_t landmarks,
                                          Rng& rng, DType dtype) {
    GlobalLayerParams p;
    p.norm1 = LayerNormParams::make(name + ".norm1", channels, dtype);
    p.attention = AttentionProjections::make(name + ".attn", channels, rng, dtype);
    p.norm2 = LayerNormParams::make(name + ".norm2", channels, dtype);
    p.feed_forward = Mlp::make(name + ".ffn", channels, feed_forward_width(channels), channels, rng, dtype);
    p.landmarks = landmarks;
    return p;
}

void GlobalLayerParams::collect(std::vector<Parameter*>& out) {
    norm1.collect(out);
    attention.collect(out);
    norm2.collect(out);
    feed_forward.collect(out);
}

Var global_layer(Tape& tape, Var features, GlobalLayerParams& params) {
    Var mixed = add(nystrom_attention(tape, params.norm1(tape, features), params.attention, params.landmarks), features);
    return add(params.feed_forward(tape, params.norm2(tape, mixed)), mixed);
}

ReferenceGrid build_reference_grid(std::size_t resolution, std::size_t dim) {
    if (resolution < 2) fail(ErrorKind::Config, "reference grid resolution must be >= 2");
    if (dim < 1 || dim > 3) fail(ErrorKind::Config, "reference grid dimension must be 1, 2 or 3");
    std::size_t count = 1;
    for (std::size_t d = 0; d < dim; ++d) count *= resolution;
    ReferenceGrid grid{resolution, dim, Tensor({count, dim})};
    const double step = static_cast<double>(resolution - 1);
    for (std::size_t idx = 0; idx < count; ++idx) {
        std::size_t rest = idx;
        for (std::size_t d = dim; d-- > 0;) {
            const std::size_t k = rest % resolution;
            rest /= resolution;
            grid.points.at(idx, d) = static_cast<double>(k) / step;
        }
    }
    return grid;
}

Tensor grid_distances(const Tensor& coords, const ReferenceGrid& grid) {
    require_rank(coords, 2, "grid_distances");
    if (coords.cols() != grid.dim) {
        fail(ErrorKind::Dimension, "coordinates have dimension " + std::to_string(coords.cols()) +
                                       " but the reference grid has " + std::to_string(grid.dim));
    }
    const std::size_t n = coords.rows(), g = grid.size(), d = grid.dim;
    Tensor out({n, g});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < g; ++j) {
            double s = 0.0;
            for (std::size_t a = 0; a < d; ++a) {
                const double diff = coords.at(i, a) - grid.points.at(j, a);
                s += diff * diff;
            }
            out.at(i, j) = std::sqrt(s);
        }
    return out;
}

Var encode_position(Tape& tape, const Tensor& coords, const ReferenceGrid& grid, Mlp& mlp) {
    return mlp(tape, tape.constant(grid_distances(coords, grid)));
}

GateParams GateParams::make(const std::string& name, GeometryKind kind, std::size_t channels,
                            std::size_t grid_points, Rng& rng, DType dtype) {
    GateParams p;
    p.gate = LocalMap::make(name + ".gate", kind, channels, 1, rng, dtype);
    p.position = Mlp::make(name + ".position", grid_points, channels, channels, rng, dtype);
    return p;
}

void GateParams::collect(std::vector<Parameter*>& out) {
    gate.collect(out);
    position.collect(out);
}

Var gated_fuse(Tape& tape, Var global, Var pos_term, LocalMap& gate, const Geometry& geometry) {
    require_same_shape(global.value(), pos_term.value(), "gated_fuse");
    Var g = sigmoid(gate(tape, global, geometry));
    Var f = global;
    for (int layer = 0; layer < kGatedLayers; ++layer) f = add(mul_rows(f, g), pos_term);
    return f;
}

Var slice_weights(Tape& tape, Var features, LocalMap& map, const Geometry& geometry) {
    return softmax_rows(map(tape, features, geometry));
}

Var physics_attention_tokens(Tape& tape, Var tokens, AttentionProjections& proj) {
    return exact_attention(proj.query(tape, tokens), proj.key(tape, tokens), proj.value(tape, tokens));
}

Var deslice(Var tokens, Var weights) { return matmul(weights, tokens); }

FocalLayerParams FocalLayerParams::make(const std::string& name, GeometryKind kind, std::size_t channels,
                                        std::size_t slices, Rng& rng, DType dtype) {
    FocalLayerParams p;
    p.norm1 = LayerNormParams::make(name + ".norm1", channels, dtype);
    p.slice_map = LocalMap::make(name + ".slice", kind, channels, slices, rng, dtype);
    p.attention = AttentionProjections::make(name + ".attn", channels, rng, dtype);
    p.norm2 = LayerNormParams::make(name + ".norm2", channels, dtype);
    p.feed_forward = Mlp::make(name + ".ffn", channels, feed_forward_width(channels), channels, rng, dtype);
    return p;
}

void FocalLayerParams::collect(std::vector<Parameter*>& out) {
    norm1.collect(out);
    slice_map.collect(out);
    attention.collect(out);
    norm2.collect(out);
    feed_forward.collect(out);
}

Var physics_attention(Tape& tape, Var features, FocalLayerParams& params, const Geometry& geometry) {
    Var w = slice_weights(tape, features, params.slice_map, geometry);
    Var tokens = aggregate_tokens(features, w);
    return deslice(physics_attention_tokens(tape, tokens, params.attention), w);
}

Var focal_layer(Tape& tape, Var features, FocalLayerParams& params, const Geometry& geometry) {
    Var mixed = add(physics_attention(tape, params.norm1(tape, features), params, geometry), features);
    return add(params.feed_forward(tape, params.norm2(tape, mixed)), mixed);
}

}  // namespace gfocal
