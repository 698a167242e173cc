// Copyright (c) 2026 The GFocal Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "gfocal/data.hpp"
#include "gfocal/metrics.hpp"
#include "gfocal/model.hpp"

namespace gfocal {

// ---------------------------------------------------------------------------
// Run configuration: flat "key = value" text, '#' starts a comment.

enum class LossKind { rl2, rl2_grad };

const char* to_string(LossKind kind);
LossKind parse_loss(const std::string& text);

/// Weight of the gradient term in the rl2+grad loss.
inline constexpr double kGradLossWeight = 0.1;

struct RunConfig {
    std::string preset;  // empty: library defaults
    GFocalConfig model;
    bool geometry_auto = true;  // geometry_kind, coord_dim and channels follow the dataset
    LossKind loss = LossKind::rl2;
    std::size_t epochs = 500;
    std::size_t batch_size = 2;
    double lr = 1e-3;
    double weight_decay = 1e-5;
    std::uint64_t seed = 0;
    std::string train_data;
    std::string eval_data;
    std::string out_dir = "run";
    std::size_t checkpoint_every = 50;

    /// Keys given explicitly in the parsed text.
    std::set<std::string> explicit_keys;

    /// Throws Config on unknown keys, malformed values or a missing train_data.
    static RunConfig parse(const std::string& text, bool require_data = true);
    static RunConfig load(const std::filesystem::path& path);

    /// Fills dataset-derived model fields and rejects contradictions (Config error).
    void bind_dataset(const SampleSet& data);
};

std::vector<std::string> run_config_keys();

// ---------------------------------------------------------------------------
// Training.

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double train_rl2 = 0.0;  // running mean of the per-sample relative L2 term
    std::optional<double> eval_rl2;
    double wall_seconds = 0.0;  // not part of the deterministic log

    std::string to_line() const;
};

struct TrainResult {
    std::vector<EpochRecord> epochs;
    double final_train_rl2 = 0.0;
    std::optional<double> final_eval_rl2;
    std::filesystem::path checkpoint;
};

/// Mean over samples of the per-sample relative L2 of `model` on `data`.
double dataset_relative_l2(GFocalModel& model, const SampleSet& data);

/// Relative L2 of predicting the scalar mean of `train` outputs everywhere on `eval`.
double constant_mean_baseline(const SampleSet& train, const SampleSet& eval);

/// Epoch loop with AdamW. Writes train_log.txt, timing.txt and checkpoints into
/// cfg.out_dir. A non-finite loss throws Numeric; earlier checkpoints stay.
TrainResult train(RunConfig cfg, const SampleSet& train_set, const SampleSet* eval_set, std::ostream* progress);

// ---------------------------------------------------------------------------
// Evaluation.

/// Per-sample predictions [S x N x F_out], from a checkpoint or a predictions bundle.
Tensor predict_dataset(GFocalModel& model, const SampleSet& data);

enum class MetricRequest { automatic, coefficient };

/// Relative L2 (plus gradient error on grids). Coefficient error and Spearman rho
/// when the dataset carries surface data or per-sample coefficients; requesting
/// them explicitly without such data throws MissingField.
MetricsReport evaluate(const TensorBundle& dataset, const SampleSet& data, const Tensor& predictions,
                       const TensorBundle* prediction_bundle, MetricRequest request = MetricRequest::automatic);

/// Adds "surface/..." entries for B boundary points per sample [S x B] (indices into
/// the point set), outward normals [S x B x D], measures [S x B] and
/// "surface/config" = [inlet_speed, reference_area, direction...].
void attach_surface(TensorBundle& dataset, const Tensor& index, const Tensor& normals, const Tensor& measure,
                    double inlet_speed, double reference_area, const std::vector<double>& direction);

// ---------------------------------------------------------------------------
// Gradient checking against central finite differences.

struct GradCheckOptions {
    std::uint64_t seed = 0;
    double step = 1e-5;
    double tolerance = 1e-4;
    /// Denominator floor of relative_error. Central differences of an O(1)
    /// loss in float64 carry about ulp/step = 2e-11 of rounding noise, so
    /// ratios against gradients much below 1e-6 measure that noise, not the rule.
    double floor = 1e-6;
    bool include_ops = true;
    bool include_model = true;
};

struct GradCheckEntry {
    std::string name;  // "op:<name>" or "<geometry>/<parameter>"
    double worst = 0.0;
    std::size_t checked = 0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double tolerance = 0.0;

    double worst() const;
    std::vector<std::string> offenders() const;
    bool passed() const { return offenders().empty(); }
    std::string to_text() const;
};

/// |a - n| / max(|a|, |n|, floor).
double relative_error(double analytic, double numeric, double floor);
/// Largest relative_error over paired entries.
double worst_relative_error(std::span<const double> analytic, std::span<const double> numeric, double floor);

GradCheckReport run_gradcheck(const GradCheckOptions& options);

// ---------------------------------------------------------------------------
// Forward timing of exact vs Nystrom attention.

struct BenchRow {
    std::size_t points = 0;
    double exact_seconds = 0.0;
    double nystrom_seconds = 0.0;
};

struct BenchOptions {
    std::size_t channels = 32;
    std::size_t landmarks = 32;
    std::size_t repeats = 3;
    std::uint64_t seed = 0;
};

/// Best-of-repeats wall time per forward, one row per size, in the given order.
std::vector<BenchRow> run_bench(const std::vector<std::size_t>& sizes, const BenchOptions& options);
std::string bench_table(const std::vector<BenchRow>& rows);

}  // namespace gfocal
