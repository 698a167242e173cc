// Copyright (c) 2026 The GFocal Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "gfocal/layers.hpp"

namespace gfocal {

// ---------------------------------------------------------------------------
// Global block: Nystrom-approximated softmax attention in a pre-norm residual layer.

/// Single-head query/key/value projections without bias, each C x C.
struct AttentionProjections {
    Linear query;
    Linear key;
    Linear value;

    static AttentionProjections make(const std::string& name, std::size_t channels, Rng& rng, DType dtype);
    void collect(std::vector<Parameter*>& out);
};

/// [L x N] averaging matrix: row s averages rows floor(sN/L) .. floor((s+1)N/L)-1.
/// With L == N it is the identity, i.e. the landmarks are the full rows.
Tensor segment_mean_matrix(std::size_t rows, std::size_t landmarks);

/// softmax(Q K^T / sqrt(d)) V with d = channel count of Q.
Var exact_attention(Var q, Var k, Var v);

/// Nystrom approximation of exact_attention with segment-mean landmarks:
///   softmax(Q Kl^T/sqrt(d)) * pinv(softmax(Ql Kl^T/sqrt(d))) * softmax(Ql K^T/sqrt(d)) * V,
/// evaluated right to left so no N x N matrix is formed. `landmarks` is clamped to N.
Var nystrom_attention_qkv(Var q, Var k, Var v, std::size_t landmarks);

/// Projects `features` and applies nystrom_attention_qkv. Throws Config when landmarks < 1.
Var nystrom_attention(Tape& tape, Var features, AttentionProjections& proj, std::size_t landmarks);

struct GlobalLayerParams {
    LayerNormParams norm1;
    AttentionProjections attention;
    LayerNormParams norm2;
    Mlp feed_forward;
    std::size_t landmarks = 64;

    static GlobalLayerParams make(const std::string& name, std::size_t channels, std::size_t landmarks, Rng& rng,
                                  DType dtype);
    void collect(std::vector<Parameter*>& out);
};

/// F^ = Nystrom(LN(F)) + F;  F' = FFN(LN(F^)) + F^.
Var global_layer(Tape& tape, Var features, GlobalLayerParams& params);

// ---------------------------------------------------------------------------
// Position encoder.

/// Uniform lattice over [0,1]^D with `resolution` samples k/(R-1) per axis.
/// Points are ordered with the first axis varying slowest.
struct ReferenceGrid {
    std::size_t resolution = 0;
    std::size_t dim = 0;
    Tensor points;  // [R^D x D]

    std::size_t size() const { return points.rows(); }
};

ReferenceGrid build_reference_grid(std::size_t resolution, std::size_t dim);

/// Euclidean distance from each coordinate row to every reference point: [N x R^D].
Tensor grid_distances(const Tensor& coords, const ReferenceGrid& grid);

/// MLP over grid_distances(coords), giving [N x C].
Var encode_position(Tape& tape, const Tensor& coords, const ReferenceGrid& grid, Mlp& mlp);

// ---------------------------------------------------------------------------
// Gated mechanism.

inline constexpr int kGatedLayers = 3;

struct GateParams {
    LocalMap gate;  // C -> 1
    Mlp position;   // R^D -> C

    static GateParams make(const std::string& name, GeometryKind kind, std::size_t channels, std::size_t grid_points,
                           Rng& rng, DType dtype);
    void collect(std::vector<Parameter*>& out);
};

/// G = sigmoid(gate(F_global)) once, then F^g = G * F^{g-1} + pos_term for three
/// layers starting at F^0 = F_global. G is [N x 1], broadcast across channels.
Var gated_fuse(Tape& tape, Var global, Var pos_term, LocalMap& gate, const Geometry& geometry);

// ---------------------------------------------------------------------------
// Focal block: slice -> token attention -> deslice.

/// softmax(Map(F)) row-wise: [N x L] slice memberships.
Var slice_weights(Tape& tape, Var features, LocalMap& map, const Geometry& geometry);

/// q, k, v = Linear(t);  t' = softmax(q k^T / sqrt(C)) v  over the L tokens.
Var physics_attention_tokens(Tape& tape, Var tokens, AttentionProjections& proj);

/// f'_i = sum_j w_ij t'_j.
Var deslice(Var tokens, Var weights);

struct FocalLayerParams {
    LayerNormParams norm1;
    LocalMap slice_map;
    AttentionProjections attention;
    LayerNormParams norm2;
    Mlp feed_forward;

    static FocalLayerParams make(const std::string& name, GeometryKind kind, std::size_t channels,
                                 std::size_t slices, Rng& rng, DType dtype);
    std::size_t slices() const { return slice_map.weight.value.cols(); }
    void collect(std::vector<Parameter*>& out);
};

/// slice_weights -> aggregate_tokens -> physics_attention_tokens -> deslice.
Var physics_attention(Tape& tape, Var features, FocalLayerParams& params, const Geometry& geometry);

/// F^ = PhysicsAttn(LN(F)) + F;  F' = FFN(LN(F^)) + F^.
Var focal_layer(Tape& tape, Var features, FocalLayerParams& params, const Geometry& geometry);

/// Hidden width of every feed-forward sub-layer.
inline constexpr std::size_t feed_forward_width(std::size_t channels) { return 2 * channels; }

}  // namespace gfocal
