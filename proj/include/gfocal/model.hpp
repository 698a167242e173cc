// Copyright (c) 2026 The GFocal Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gfocal/blocks.hpp"
#include "gfocal/optim.hpp"

namespace gfocal {

struct GFocalConfig {
    std::size_t global_depth = 2;     // M
    std::size_t focal_depth = 1;      // K
    std::size_t channels = 32;        // C
    std::size_t slice_num = 8;        // L
    std::size_t landmark_num = 64;    // clamped to N at run time
    std::size_t grid_resolution = 8;  // R
    std::size_t coord_dim = 2;        // D
    std::size_t input_channels = 1;
    std::size_t output_channels = 1;
    GeometryKind geometry_kind = GeometryKind::point_cloud;
    DType dtype = DType::f32;

    /// Throws Config naming every offending field.
    void validate() const;
    bool operator==(const GFocalConfig&) const = default;
};

/// Architecture settings for one benchmark row of the reference hyperparameter table.
struct Preset {
    std::string name;
    GFocalConfig config;
    std::size_t batch_size;
};

/// Known names: elasticity, plasticity, airfoil, pipe, navier_stokes, darcy,
/// shapenet_car, airfrans, tiny. Throws Config for anything else.
Preset preset(const std::string& name);
std::vector<std::string> preset_names();
/// The configuration used by gradient checks: N=16, D=2, C=8, M=K=1, L=4, L_lm=4, R=4, float64.
GFocalConfig tiny_config(GeometryKind kind = GeometryKind::point_cloud);

struct GFocalModel {
    GFocalConfig config;
    Mlp encoder;  // (input_channels + D) -> C -> C
    std::vector<GlobalLayerParams> global;
    ReferenceGrid grid;
    GateParams gate;
    std::vector<FocalLayerParams> focal;
    Mlp decoder;  // C -> C -> output_channels

    /// Pointers into this model, in a fixed order. Invalidated if the model is moved.
    std::vector<Parameter*> parameters();
    std::size_t parameter_count();
};

/// Closed-form parameter count of build_model(cfg, seed).
std::size_t expected_parameter_count(const GFocalConfig& cfg);

GFocalModel build_model(const GFocalConfig& cfg, std::uint64_t seed);

/// encoder(concat(coords, input)) -> M global layers -> gated fusion with the
/// position encoding -> K focal layers -> decoder. Throws Numeric naming the
/// first stage that produced a non-finite value.
Var forward(Tape& tape, GFocalModel& model, const Tensor& coords, const Tensor& input_field,
            const Geometry& geometry);

/// forward() on a private tape in the model's dtype.
Tensor predict(GFocalModel& model, const Tensor& coords, const Tensor& input_field, const Geometry& geometry);

// ---------------------------------------------------------------------------
// Checkpoints: a TensorBundle with "param/...", "opt/..." and "meta/..." entries.

struct OptimizerSnapshot {
    std::int64_t step = 0;
    AdamWOptions options;
    std::vector<Tensor> first_moments;
    std::vector<Tensor> second_moments;
};

struct Checkpoint {
    GFocalConfig config;
    std::vector<std::pair<std::string, Tensor>> params;
    std::optional<OptimizerSnapshot> optimizer;
    std::vector<std::uint32_t> rng_state;
    std::int64_t epoch = 0;
};

void save_checkpoint(const std::filesystem::path& path, GFocalModel& model, const AdamW* optimizer, const Rng* rng,
                     std::int64_t epoch);
/// Throws Format on corrupt or truncated files; nothing is returned partially.
Checkpoint read_checkpoint(const std::filesystem::path& path);
/// Copies parameters into `model`; throws Config when the architectures differ.
void load_into(GFocalModel& model, const Checkpoint& ckpt);
GFocalModel model_from_checkpoint(const Checkpoint& ckpt);
void restore_optimizer(AdamW& optimizer, const Checkpoint& ckpt);

}  // namespace gfocal
