// Copyright (c) 2026 The GFocal Authors
// SPDX-License-Identifier: Apache-2.0

#include "gfocal/harness.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>

#include "gfocal/ops.hpp"

namespace gfocal {

const char* to_string(LossKind kind) { return kind == LossKind::rl2 ? "rl2" : "rl2+0.1*grad"; }

LossKind parse_loss(const std::string& text) {
    if (text == "rl2") return LossKind::rl2;
    if (text == "rl2+0.1*grad" || text == "rl2_grad") return LossKind::rl2_grad;
    fail(ErrorKind::Config, "loss must be 'rl2' or 'rl2+0.1*grad' (alias rl2_grad), got '" + text + "'");
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::uint64_t parse_unsigned(const std::string& key, const std::string& value) {
    std::uint64_t out = 0;
    const auto* end = value.data() + value.size();
    const auto [ptr, ec] = std::from_chars(value.data(), end, out);
    if (ec != std::errc() || ptr != end) fail(ErrorKind::Config, key + " expects a non-negative integer, got '" + value + "'");
    return out;
}

double parse_real(const std::string& key, const std::string& value) {
    // strtod rather than from_chars: GCC 11 lacks floating-point from_chars on some targets.
    char* end = nullptr;
    const double v = std::strtod(value.c_str(), &end);
    if (value.empty() || end != value.c_str() + value.size() || !std::isfinite(v))
        fail(ErrorKind::Config, key + " expects a finite number, got '" + value + "'");
    return v;
}

DType parse_dtype(const std::string& value) {
    if (value == "f32" || value == "float32") return DType::f32;
    if (value == "f64" || value == "float64") return DType::f64;
    fail(ErrorKind::Config, "dtype must be f32 or f64, got '" + value + "'");
}

const std::vector<std::string>& model_keys() {
    static const std::vector<std::string> keys{"global_depth",    "focal_depth",    "channels",
                                               "slice_num",       "landmark_num",   "grid_resolution",
                                               "coord_dim",       "input_channels", "output_channels",
                                               "geometry_kind",   "dtype"};
    return keys;
}

}  // namespace

std::vector<std::string> run_config_keys() {
    std::vector<std::string> keys{"preset"};
    for (const auto& k : model_keys()) keys.push_back(k);
    for (const char* k : {"loss", "epochs", "batch_size", "lr", "weight_decay", "seed", "train_data", "eval_data",
                          "out_dir", "checkpoint_every"})
        keys.emplace_back(k);
    return keys;
}

RunConfig RunConfig::parse(const std::string& text, bool require_data) {
    std::map<std::string, std::string> values;
    const auto known = run_config_keys();
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            fail(ErrorKind::Config, "line " + std::to_string(line_no) + ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (std::find(known.begin(), known.end(), key) == known.end())
            fail(ErrorKind::Config, "line " + std::to_string(line_no) + ": unknown key '" + key + "'");
        if (values.count(key)) fail(ErrorKind::Config, "line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
        values[key] = value;
    }

    RunConfig cfg;
    if (auto it = values.find("preset"); it != values.end()) {
        const Preset p = gfocal::preset(it->second);
        cfg.preset = p.name;
        cfg.model = p.config;
        cfg.batch_size = p.batch_size;
        if (p.name == "darcy") cfg.loss = LossKind::rl2_grad;
    }
    for (const auto& [key, value] : values) {
        cfg.explicit_keys.insert(key);
        GFocalConfig& m = cfg.model;
        if (key == "preset") continue;
        else if (key == "global_depth") m.global_depth = parse_unsigned(key, value);
        else if (key == "focal_depth") m.focal_depth = parse_unsigned(key, value);
        else if (key == "channels") m.channels = parse_unsigned(key, value);
        else if (key == "slice_num") m.slice_num = parse_unsigned(key, value);
        else if (key == "landmark_num") m.landmark_num = parse_unsigned(key, value);
        else if (key == "grid_resolution") m.grid_resolution = parse_unsigned(key, value);
        else if (key == "coord_dim") m.coord_dim = parse_unsigned(key, value);
        else if (key == "input_channels") m.input_channels = parse_unsigned(key, value);
        else if (key == "output_channels") m.output_channels = parse_unsigned(key, value);
        else if (key == "geometry_kind") {
            cfg.geometry_auto = value == "auto";
            if (!cfg.geometry_auto) m.geometry_kind = parse_geometry_kind(value);
        } else if (key == "dtype") m.dtype = parse_dtype(value);
        else if (key == "loss") cfg.loss = parse_loss(value);
        else if (key == "epochs") cfg.epochs = parse_unsigned(key, value);
        else if (key == "batch_size") cfg.batch_size = parse_unsigned(key, value);
        else if (key == "lr") cfg.lr = parse_real(key, value);
        else if (key == "weight_decay") cfg.weight_decay = parse_real(key, value);
        else if (key == "seed") cfg.seed = parse_unsigned(key, value);
        else if (key == "train_data") cfg.train_data = value;
        else if (key == "eval_data") cfg.eval_data = value;
        else if (key == "out_dir") cfg.out_dir = value;
        else if (key == "checkpoint_every") cfg.checkpoint_every = parse_unsigned(key, value);
    }
    if (cfg.batch_size == 0) fail(ErrorKind::Config, "batch_size must be >= 1");
    if (cfg.lr < 0.0) fail(ErrorKind::Config, "lr must be >= 0");
    if (cfg.weight_decay < 0.0) fail(ErrorKind::Config, "weight_decay must be >= 0");
    if (require_data && cfg.train_data.empty()) fail(ErrorKind::Config, "train_data is required");
    // Dataset-derived fields get valid stand-ins; bind_dataset checks them later.
    GFocalConfig probe = cfg.model;
    if (cfg.geometry_auto) {
        probe.geometry_kind = GeometryKind::point_cloud;
        probe.coord_dim = std::max<std::size_t>(probe.coord_dim, 1);
        probe.output_channels = std::max<std::size_t>(probe.output_channels, 1);
    }
    probe.validate();
    return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Io, "cannot read config '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

void RunConfig::bind_dataset(const SampleSet& data) {
    GFocalConfig& m = model;
    const auto check = [&](const char* key, std::size_t& field, std::size_t actual) {
        if (explicit_keys.count(key) && field != actual)
            fail(ErrorKind::Config, std::string(key) + " = " + std::to_string(field) + " but the dataset has " +
                                        std::to_string(actual));
        field = actual;
    };
    check("coord_dim", m.coord_dim, data.coord_dim());
    check("input_channels", m.input_channels, data.input_channels());
    check("output_channels", m.output_channels, data.output_channels());
    if (geometry_auto) {
        m.geometry_kind = data.geometry.kind;
    } else if (m.geometry_kind != data.geometry.kind) {
        fail(ErrorKind::Config, std::string("geometry_kind = ") + to_string(m.geometry_kind) + " but the dataset is " +
                                    to_string(data.geometry.kind));
    }
    if (loss == LossKind::rl2_grad && data.geometry.kind != GeometryKind::structured_grid)
        fail(ErrorKind::Config, "the gradient loss term needs a structured-grid dataset");
    m.validate();
}

// ---------------------------------------------------------------------------

std::string EpochRecord::to_line() const {
    char buf[256];
    int n = std::snprintf(buf, sizeof buf, "epoch=%zu train_loss=%.17g train_rl2=%.17g", epoch, train_loss, train_rl2);
    if (eval_rl2) std::snprintf(buf + n, sizeof buf - static_cast<std::size_t>(n), " eval_rl2=%.17g", *eval_rl2);
    return buf;
}

namespace {

double sample_relative_l2(const Tensor& pred, const Tensor& truth) {
    return relative_l2(FieldPair{truth, pred, std::nullopt});
}

std::string format_real(const char* key, double v) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%s=%.17g", key, v);
    return buf;
}

std::filesystem::path epoch_checkpoint_path(const std::filesystem::path& dir, std::size_t epoch) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "checkpoint_epoch%04zu.gftb", epoch);
    return dir / buf;
}

}  // namespace

double dataset_relative_l2(GFocalModel& model, const SampleSet& data) {
    double total = 0.0;
    for (std::size_t s = 0; s < data.count(); ++s) {
        const Tensor pred = predict(model, data.sample_coords(s), data.sample_inputs(s), data.geometry);
        total += sample_relative_l2(pred, data.sample_outputs(s));
    }
    return total / static_cast<double>(data.count());
}

double constant_mean_baseline(const SampleSet& train_set, const SampleSet& eval_set) {
    double mean = 0.0;
    for (double v : train_set.outputs.data()) mean += v;
    mean /= static_cast<double>(train_set.outputs.numel());
    double total = 0.0;
    for (std::size_t s = 0; s < eval_set.count(); ++s) {
        const Tensor truth = eval_set.sample_outputs(s);
        total += sample_relative_l2(Tensor::full(truth.shape(), mean, truth.dtype()), truth);
    }
    return total / static_cast<double>(eval_set.count());
}

TrainResult train(RunConfig cfg, const SampleSet& train_set, const SampleSet* eval_set, std::ostream* progress) {
    cfg.bind_dataset(train_set);
    if (eval_set != nullptr) {
        if (eval_set->geometry.kind != cfg.model.geometry_kind || eval_set->coord_dim() != cfg.model.coord_dim ||
            eval_set->input_channels() != cfg.model.input_channels ||
            eval_set->output_channels() != cfg.model.output_channels)
            fail(ErrorKind::Config, "evaluation dataset does not match the training dataset layout");
    }
    const std::filesystem::path dir(cfg.out_dir);
    std::filesystem::create_directories(dir);

    GFocalModel model = build_model(cfg.model, cfg.seed);
    AdamWOptions opt;
    opt.lr = cfg.lr;
    opt.weight_decay = cfg.weight_decay;
    AdamW optimizer(model.parameters(), opt);
    Rng shuffle(derive_seed(cfg.seed, 0x73687566666c65ULL));

    std::ofstream log(dir / "train_log.txt", std::ios::trunc);
    std::ofstream timing(dir / "timing.txt", std::ios::trunc);
    if (!log || !timing) fail(ErrorKind::Io, "cannot write logs into '" + dir.string() + "'");
    log << "# samples=" << train_set.count() << " points=" << train_set.points() << " epochs=" << cfg.epochs
        << " batch_size=" << cfg.batch_size << " loss=" << to_string(cfg.loss) << " seed=" << cfg.seed
        << " params=" << model.parameter_count() << '\n';
    timing << "# epoch wall_seconds\n";

    const Geometry& geom = train_set.geometry;
    const DType dtype = cfg.model.dtype;
    // Gradient targets depend only on the data, so compute them once.
    std::vector<Tensor> target_grads;
    if (cfg.loss == LossKind::rl2_grad) {
        const double hr = 1.0 / static_cast<double>(geom.height - 1), hc = 1.0 / static_cast<double>(geom.width - 1);
        for (std::size_t s = 0; s < train_set.count(); ++s)
            target_grads.push_back(grid_gradient_plain(train_set.sample_outputs(s), geom.height, geom.width, hr, hc));
    }

    TrainResult result;
    const std::size_t count = train_set.count();
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const std::vector<std::size_t> order = shuffle.permutation(count);
        double loss_sum = 0.0, rl2_sum = 0.0;
        for (std::size_t start = 0; start < count; start += cfg.batch_size) {
            const std::size_t stop = std::min(count, start + cfg.batch_size);
            const double inv_batch = 1.0 / static_cast<double>(stop - start);
            optimizer.zero_grad();
            for (std::size_t b = start; b < stop; ++b) {
                const std::size_t s = order[b];
                Tape tape(dtype);
                Var pred = forward(tape, model, train_set.sample_coords(s), train_set.sample_inputs(s), geom);
                Var target = tape.constant(train_set.sample_outputs(s));
                Var rl2 = relative_l2(pred, target);
                Var loss = rl2;
                if (cfg.loss == LossKind::rl2_grad) {
                    const double hr = 1.0 / static_cast<double>(geom.height - 1);
                    const double hc = 1.0 / static_cast<double>(geom.width - 1);
                    Var g = grid_gradient(pred, geom.height, geom.width, hr, hc);
                    loss = add(rl2, scale(relative_l2(g, tape.constant(target_grads[s])), kGradLossWeight));
                }
                const double value = loss.value().item();
                if (!std::isfinite(value)) {
                    log << "# aborted: non-finite loss at epoch " << epoch << " sample " << s << '\n';
                    fail(ErrorKind::Numeric, "non-finite training loss at epoch " + std::to_string(epoch) +
                                                 " (sample " + std::to_string(s) + ")");
                }
                loss_sum += value;
                rl2_sum += rl2.value().item();
                tape.backward(scale(loss, inv_batch));
            }
            optimizer.step();
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(count);
        rec.train_rl2 = rl2_sum / static_cast<double>(count);
        if (eval_set != nullptr) rec.eval_rl2 = dataset_relative_l2(model, *eval_set);
        rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        log << rec.to_line() << '\n';
        log.flush();
        timing << epoch << ' ' << rec.wall_seconds << '\n';
        if (progress != nullptr) *progress << rec.to_line() << '\n';
        result.epochs.push_back(rec);
        if (cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0 && epoch != cfg.epochs)
            save_checkpoint(epoch_checkpoint_path(dir, epoch), model, &optimizer, &shuffle,
                            static_cast<std::int64_t>(epoch));
    }

    result.final_train_rl2 = dataset_relative_l2(model, train_set);
    log << "final " << format_real("train_rl2", result.final_train_rl2);
    if (eval_set != nullptr) {
        result.final_eval_rl2 = dataset_relative_l2(model, *eval_set);
        log << ' ' << format_real("eval_rl2", *result.final_eval_rl2);
    }
    log << '\n';
    result.checkpoint = dir / "checkpoint.gftb";
    save_checkpoint(result.checkpoint, model, &optimizer, &shuffle, static_cast<std::int64_t>(cfg.epochs));
    return result;
}

// ---------------------------------------------------------------------------

Tensor predict_dataset(GFocalModel& model, const SampleSet& data) {
    const std::size_t s_count = data.count(), n = data.points(), f = model.config.output_channels;
    Tensor out({s_count, n, f}, DType::f64);
    for (std::size_t s = 0; s < s_count; ++s) {
        const Tensor p = predict(model, data.sample_coords(s), data.sample_inputs(s), data.geometry);
        std::copy(p.data().begin(), p.data().end(), out.storage().begin() + static_cast<std::ptrdiff_t>(s * n * f));
    }
    return out;
}

void attach_surface(TensorBundle& dataset, const Tensor& index, const Tensor& normals, const Tensor& measure,
                    double inlet_speed, double reference_area, const std::vector<double>& direction) {
    dataset.put("surface/index", index);
    dataset.put("surface/normals", normals);
    dataset.put("surface/measure", measure);
    std::vector<double> cfg{inlet_speed, reference_area};
    cfg.insert(cfg.end(), direction.begin(), direction.end());
    dataset.put("surface/config", Tensor({cfg.size()}, cfg));
}

namespace {

bool has_surface(const TensorBundle& b) {
    return b.contains("surface/index") && b.contains("surface/normals") && b.contains("surface/measure") &&
           b.contains("surface/config");
}

// Force coefficient of sample `s` using output channel 0 as surface pressure, no shear.
double surface_coefficient(const TensorBundle& b, const SampleSet& data, const Tensor& fields, std::size_t s) {
    const Tensor index = b.tensor("surface/index");
    const Tensor normals = b.tensor("surface/normals");
    const Tensor measure = b.tensor("surface/measure");
    const Tensor cfg = b.tensor("surface/config");
    const std::size_t d = data.coord_dim();
    if (index.rank() != 2 || index.dim(0) != data.count())
        fail(ErrorKind::Format, "surface/index must be [samples x boundary points]");
    const std::size_t nb = index.dim(1);
    if (normals.shape() != Shape{data.count(), nb, d} || measure.shape() != Shape{data.count(), nb})
        fail(ErrorKind::Format, "surface/normals or surface/measure shape does not match surface/index");
    if (cfg.numel() != 2 + d) fail(ErrorKind::Format, "surface/config must hold inlet speed, area and a direction");
    SurfaceSample ss;
    ss.points = Tensor({nb, d});
    ss.pressure = Tensor({nb});
    ss.normals = Tensor({nb, d});
    ss.shear = Tensor({nb, d});
    ss.measure = Tensor({nb});
    ss.inlet_speed = cfg[0];
    ss.reference_area = cfg[1];
    ss.direction.assign(cfg.data().begin() + 2, cfg.data().end());
    const std::size_t n = data.points(), f = fields.dim(2);
    for (std::size_t k = 0; k < nb; ++k) {
        const double raw = index[s * nb + k];
        if (!(raw >= 0.0) || raw >= static_cast<double>(n) || raw != std::floor(raw))
            fail(ErrorKind::Format, "surface/index holds an invalid point index");
        const auto p = static_cast<std::size_t>(raw);
        ss.pressure[k] = fields[(s * n + p) * f];
        ss.measure[k] = measure[s * nb + k];
        for (std::size_t j = 0; j < d; ++j) {
            ss.points[k * d + j] = data.coords[(s * n + p) * d + j];
            ss.normals[k * d + j] = normals[(s * nb + k) * d + j];
        }
    }
    return force_coefficient(ss);
}

}  // namespace

MetricsReport evaluate(const TensorBundle& dataset, const SampleSet& data, const Tensor& predictions,
                       const TensorBundle* prediction_bundle, MetricRequest request) {
    if (predictions.shape() != data.outputs.shape())
        fail(ErrorKind::Dimension, "predictions " + shape_string(predictions.shape()) + " do not match outputs " +
                                       shape_string(data.outputs.shape()));
    MetricsReport report;
    report.samples = data.count();
    const bool grid = data.geometry.kind == GeometryKind::structured_grid;
    double rl2 = 0.0, gl = 0.0;
    for (std::size_t s = 0; s < data.count(); ++s) {
        FieldPair pair{data.sample_outputs(s), predictions.slice_first(s), std::nullopt};
        rl2 += relative_l2(pair);
        if (grid) gl += grad_loss(pair, data.geometry);
    }
    report.relative_l2 = rl2 / static_cast<double>(data.count());
    if (grid) report.grad_loss = gl / static_cast<double>(data.count());

    // Coefficient sources: explicit per-sample values win over surface integration.
    const bool surface = has_surface(dataset);
    const bool truth_values = dataset.contains("targets/coefficient");
    const bool pred_values = prediction_bundle != nullptr && prediction_bundle->contains("coefficient");
    const bool have_truth = truth_values || surface;
    const bool have_pred = pred_values || surface;
    if (request == MetricRequest::coefficient && !(have_truth && have_pred)) {
        if (!have_truth) fail(ErrorKind::MissingField, "coefficient metric needs 'targets/coefficient' or 'surface/*' in the dataset");
        fail(ErrorKind::MissingField, "coefficient metric needs 'coefficient' in the predictions or 'surface/*' in the dataset");
    }
    if (!(have_truth && have_pred)) return report;

    std::vector<double> truth(data.count()), pred(data.count());
    const Tensor tv = truth_values ? dataset.tensor("targets/coefficient") : Tensor();
    const Tensor pv = pred_values ? prediction_bundle->tensor("coefficient") : Tensor();
    if (truth_values && tv.numel() != data.count())
        fail(ErrorKind::Format, "targets/coefficient must hold one value per sample");
    if (pred_values && pv.numel() != data.count()) fail(ErrorKind::Format, "coefficient must hold one value per sample");
    for (std::size_t s = 0; s < data.count(); ++s) {
        truth[s] = truth_values ? tv[s] : surface_coefficient(dataset, data, data.outputs, s);
        pred[s] = pred_values ? pv[s] : surface_coefficient(dataset, data, predictions, s);
    }
    double num = 0.0, den = 0.0;
    for (std::size_t s = 0; s < truth.size(); ++s) {
        num += (truth[s] - pred[s]) * (truth[s] - pred[s]);
        den += truth[s] * truth[s];
    }
    if (den > 0.0) report.coefficient = std::sqrt(num / den);
    if (data.count() >= 2) {
        try {
            report.spearman_rho = spearman_rho(truth, pred);
        } catch (const Error& e) {
            if (request == MetricRequest::coefficient) throw;
        }
    }
    return report;
}

}  // namespace gfocal
