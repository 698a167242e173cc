// Copyright (c) 2026 The GFocal Authors
// SPDX-License-Identifier: Apache-2.0

#include "gfocal/model.hpp"

#include <sstream>

#include "gfocal/bundle.hpp"
#include "gfocal/ops.hpp"

namespace gfocal {

void GFocalConfig::validate() const {
    std::vector<std::string> bad;
    if (global_depth < 1) bad.emplace_back("global_depth (must be >= 1)");
    if (focal_depth < 1) bad.emplace_back("focal_depth (must be >= 1)");
    if (channels < 1) bad.emplace_back("channels (must be >= 1)");
    if (slice_num < 1) bad.emplace_back("slice_num (must be >= 1)");
    if (landmark_num < 1) bad.emplace_back("landmark_num (must be >= 1)");
    if (grid_resolution < 2) bad.emplace_back("grid_resolution (must be >= 2)");
    if (coord_dim < 1 || coord_dim > 3) bad.emplace_back("coord_dim (must be 1, 2 or 3)");
    if (output_channels < 1) bad.emplace_back("output_channels (must be >= 1)");
    if (geometry_kind == GeometryKind::structured_grid && coord_dim != 2)
        bad.emplace_back("coord_dim (structured_grid requires 2)");
    if (bad.empty()) return;
    std::string msg = "invalid GFocalConfig field(s): ";
    for (std::size_t i = 0; i < bad.size(); ++i) msg += (i ? ", " : "") + bad[i];
    fail(ErrorKind::Config, msg);
}

namespace {

GFocalConfig make_cfg(std::size_t m, std::size_t k, std::size_t c, std::size_t l, std::size_t d, GeometryKind kind) {
    GFocalConfig cfg;
    cfg.global_depth = m;
    cfg.focal_depth = k;
    cfg.channels = c;
    cfg.slice_num = l;
    cfg.coord_dim = d;
    cfg.geometry_kind = kind;
    return cfg;
}

}  // namespace

std::vector<std::string> preset_names() {
    return {"elasticity", "plasticity", "airfoil", "pipe", "navier_stokes", "darcy", "shapenet_car", "airfrans", "tiny"};
}

Preset preset(const std::string& name) {
    using G = GeometryKind;
    if (name == "elasticity") return {name, make_cfg(5, 5, 128, 32, 2, G::point_cloud), 2};
    if (name == "plasticity") return {name, make_cfg(5, 5, 128, 32, 2, G::structured_grid), 8};
    if (name == "airfoil") return {name, make_cfg(4, 4, 128, 32, 2, G::structured_grid), 4};
    if (name == "pipe") return {name, make_cfg(4, 4, 128, 32, 2, G::structured_grid), 4};
    if (name == "navier_stokes") return {name, make_cfg(4, 4, 256, 32, 2, G::structured_grid), 2};
    if (name == "darcy") return {name, make_cfg(6, 3, 128, 64, 2, G::structured_grid), 2};
    if (name == "shapenet_car") return {name, make_cfg(5, 5, 256, 32, 3, G::point_cloud), 1};
    if (name == "airfrans") return {name, make_cfg(5, 5, 256, 32, 2, G::point_cloud), 1};
    if (name == "tiny") return {name, tiny_config(), 1};
    std::string known;
    for (const auto& n : preset_names()) known += (known.empty() ? "" : ", ") + n;
    fail(ErrorKind::Config, "unknown preset '" + name + "' (known: " + known + ")");
}

GFocalConfig tiny_config(GeometryKind kind) {
    GFocalConfig cfg = make_cfg(1, 1, 8, 4, 2, kind);
    cfg.landmark_num = 4;
    cfg.grid_resolution = 4;
    cfg.dtype = DType::f64;
    return cfg;
}

std::vector<Parameter*> GFocalModel::parameters() {
    std::vector<Parameter*> out;
    encoder.collect(out);
    for (auto& layer : global) layer.collect(out);
    gate.collect(out);
    for (auto& layer : focal) layer.collect(out);
    decoder.collect(out);
    return out;
}

std::size_t GFocalModel::parameter_count() {
    std::size_t n = 0;
    for (const Parameter* p : parameters()) n += p->numel();
    return n;
}

std::size_t expected_parameter_count(const GFocalConfig& cfg) {
    const std::size_t c = cfg.channels;
    const auto mlp = [](std::size_t in, std::size_t hidden, std::size_t out) {
        return in * hidden + hidden + hidden * out + out;
    };
    const std::size_t fan = cfg.geometry_kind == GeometryKind::structured_grid ? 9 * c : c;
    std::size_t grid_points = 1;
    for (std::size_t d = 0; d < cfg.coord_dim; ++d) grid_points *= cfg.grid_resolution;

    const std::size_t encoder = mlp(cfg.input_channels + cfg.coord_dim, c, c);
    const std::size_t global_layer = 4 * c + 3 * c * c + mlp(c, feed_forward_width(c), c);
    const std::size_t gate = (fan + 1) + mlp(grid_points, c, c);
    const std::size_t focal_layer = 4 * c + (fan * cfg.slice_num + cfg.slice_num) + 3 * c * c +
                                    mlp(c, feed_forward_width(c), c);
    const std::size_t decoder = mlp(c, c, cfg.output_channels);
    return encoder + cfg.global_depth * global_layer + gate + cfg.focal_depth * focal_layer + decoder;
}

GFocalModel build_model(const GFocalConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(derive_seed(seed, 0x6d6f64656cULL));
    const DType dt = cfg.dtype;
    const std::size_t c = cfg.channels;
    GFocalModel m;
    m.config = cfg;
    m.encoder = Mlp::make("encoder", cfg.input_channels + cfg.coord_dim, c, c, rng, dt);
    for (std::size_t i = 0; i < cfg.global_depth; ++i)
        m.global.push_back(GlobalLayerParams::make("global." + std::to_string(i), c, cfg.landmark_num, rng, dt));
    m.grid = build_reference_grid(cfg.grid_resolution, cfg.coord_dim);
    m.gate = GateParams::make("gate", cfg.geometry_kind, c, m.grid.size(), rng, dt);
    for (std::size_t i = 0; i < cfg.focal_depth; ++i)
        m.focal.push_back(
            FocalLayerParams::make("focal." + std::to_string(i), cfg.geometry_kind, c, cfg.slice_num, rng, dt));
    m.decoder = Mlp::make("decoder", c, c, cfg.output_channels, rng, dt);
    return m;
}

namespace {

void check_stage(const Var& v, const std::string& stage) {
    if (!v.value().all_finite()) fail(ErrorKind::Numeric, "non-finite values after stage '" + stage + "'");
}

}  // namespace

Var forward(Tape& tape, GFocalModel& model, const Tensor& coords, const Tensor& input_field,
            const Geometry& geometry) {
    const GFocalConfig& cfg = model.config;
    require_rank(coords, 2, "forward coords");
    require_rank(input_field, 2, "forward input_field");
    const std::size_t n = coords.rows();
    if (n < 1) fail(ErrorKind::Dimension, "forward needs at least one point");
    if (coords.cols() != cfg.coord_dim) {
        fail(ErrorKind::Dimension, "coords have " + std::to_string(coords.cols()) + " columns, model expects " +
                                       std::to_string(cfg.coord_dim));
    }
    if (input_field.rows() != n || input_field.cols() != cfg.input_channels) {
        fail(ErrorKind::Dimension, "input field " + shape_string(input_field.shape()) + " does not match [" +
                                       std::to_string(n) + "x" + std::to_string(cfg.input_channels) + "]");
    }
    if (geometry.kind != cfg.geometry_kind) {
        fail(ErrorKind::Config, std::string("model expects ") + to_string(cfg.geometry_kind) + " geometry, got " +
                                    to_string(geometry.kind));
    }
    geometry.check_points(n);

    Var x = tape.constant(coords);
    Var features = model.encoder(tape, concat_cols(x, tape.constant(input_field)));
    check_stage(features, "encoder");
    for (std::size_t i = 0; i < model.global.size(); ++i) {
        features = global_layer(tape, features, model.global[i]);
        check_stage(features, "global." + std::to_string(i));
    }
    Var pos = encode_position(tape, coords, model.grid, model.gate.position);
    check_stage(pos, "position");
    features = gated_fuse(tape, features, pos, model.gate.gate, geometry);
    check_stage(features, "gate");
    for (std::size_t i = 0; i < model.focal.size(); ++i) {
        features = focal_layer(tape, features, model.focal[i], geometry);
        check_stage(features, "focal." + std::to_string(i));
    }
    Var out = model.decoder(tape, features);
    check_stage(out, "decoder");
    return out;
}

Tensor predict(GFocalModel& model, const Tensor& coords, const Tensor& input_field, const Geometry& geometry) {
    Tape tape(model.config.dtype);
    return forward(tape, model, coords, input_field, geometry).value();
}

// ---------------------------------------------------------------------------

namespace {

const char* kConfigKeys[] = {"global_depth",   "focal_depth",    "channels",        "slice_num",
                             "landmark_num",   "grid_resolution", "coord_dim",      "input_channels",
                             "output_channels", "geometry_kind",  "dtype"};

std::vector<double> config_values(const GFocalConfig& c) {
    return {static_cast<double>(c.global_depth),    static_cast<double>(c.focal_depth),
            static_cast<double>(c.channels),        static_cast<double>(c.slice_num),
            static_cast<double>(c.landmark_num),    static_cast<double>(c.grid_resolution),
            static_cast<double>(c.coord_dim),       static_cast<double>(c.input_channels),
            static_cast<double>(c.output_channels), static_cast<double>(c.geometry_kind),
            static_cast<double>(c.dtype)};
}

std::size_t as_count(double v, const std::string& key) {
    if (!(v >= 0.0) || v != static_cast<double>(static_cast<std::size_t>(v)))
        fail(ErrorKind::Format, "checkpoint field '" + key + "' is not a non-negative integer");
    return static_cast<std::size_t>(v);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, GFocalModel& model, const AdamW* optimizer, const Rng* rng,
                     std::int64_t epoch) {
    TensorBundle b;
    const std::vector<double> cfg = config_values(model.config);
    for (std::size_t i = 0; i < cfg.size(); ++i) b.put_scalar(std::string("meta/config/") + kConfigKeys[i], cfg[i]);
    b.put_scalar("meta/epoch", static_cast<double>(epoch));
    if (rng != nullptr) {
        const auto words = rng->save_state();
        Tensor t({words.size()});
        for (std::size_t i = 0; i < words.size(); ++i) t[i] = words[i];
        b.put("meta/rng", t);
    }
    const auto params = model.parameters();
    for (const Parameter* p : params) b.put("param/" + p->name, p->value, model.config.dtype);
    if (optimizer != nullptr) {
        const AdamWOptions& o = optimizer->options();
        b.put_scalar("opt/step", static_cast<double>(optimizer->step_count()));
        b.put("opt/hyper", Tensor({5}, {o.lr, o.beta1, o.beta2, o.eps, o.weight_decay}));
        for (std::size_t i = 0; i < params.size(); ++i) {
            b.put("opt/m/" + params[i]->name, optimizer->first_moments().at(i));
            b.put("opt/v/" + params[i]->name, optimizer->second_moments().at(i));
        }
    }
    b.write_file(path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
    const TensorBundle b = TensorBundle::read_file(path);
    Checkpoint ck;
    auto field = [&](const char* key) {
        const std::string name = std::string("meta/config/") + key;
        if (!b.contains(name)) fail(ErrorKind::Format, "checkpoint is missing '" + name + "'");
        return as_count(b.scalar(name), name);
    };
    GFocalConfig& c = ck.config;
    c.global_depth = field("global_depth");
    c.focal_depth = field("focal_depth");
    c.channels = field("channels");
    c.slice_num = field("slice_num");
    c.landmark_num = field("landmark_num");
    c.grid_resolution = field("grid_resolution");
    c.coord_dim = field("coord_dim");
    c.input_channels = field("input_channels");
    c.output_channels = field("output_channels");
    const std::size_t kind = field("geometry_kind");
    const std::size_t dtype = field("dtype");
    if (kind > 1) fail(ErrorKind::Format, "checkpoint geometry_kind code out of range");
    if (dtype != 1 && dtype != 2) fail(ErrorKind::Format, "checkpoint dtype code out of range");
    c.geometry_kind = static_cast<GeometryKind>(kind);
    c.dtype = static_cast<DType>(dtype);
    try {
        c.validate();
    } catch (const Error& e) {
        fail(ErrorKind::Format, std::string("checkpoint config invalid: ") + e.what());
    }
    if (b.contains("meta/epoch")) ck.epoch = static_cast<std::int64_t>(b.scalar("meta/epoch"));
    if (b.contains("meta/rng")) {
        const Tensor t = b.tensor("meta/rng");
        for (double v : t.data()) ck.rng_state.push_back(static_cast<std::uint32_t>(v));
    }

    // Validate names and shapes against a freshly built skeleton of the same architecture.
    GFocalModel skeleton = build_model(c, 0);
    const auto params = skeleton.parameters();
    for (const Parameter* p : params) {
        const std::string name = "param/" + p->name;
        if (!b.contains(name)) fail(ErrorKind::Format, "checkpoint is missing '" + name + "'");
        Tensor t = b.tensor(name);
        if (t.shape() != p->value.shape()) {
            fail(ErrorKind::Format, "checkpoint entry '" + name + "' has shape " + shape_string(t.shape()) +
                                        ", architecture expects " + shape_string(p->value.shape()));
        }
        ck.params.emplace_back(p->name, t.astype(c.dtype));
    }
    if (b.contains("opt/step")) {
        OptimizerSnapshot o;
        o.step = static_cast<std::int64_t>(b.scalar("opt/step"));
        const Tensor h = b.tensor("opt/hyper");
        if (h.numel() != 5) fail(ErrorKind::Format, "checkpoint 'opt/hyper' must hold 5 values");
        o.options = {h[0], h[1], h[2], h[3], h[4]};
        for (const Parameter* p : params) {
            Tensor m = b.tensor("opt/m/" + p->name);
            Tensor v = b.tensor("opt/v/" + p->name);
            if (m.shape() != p->value.shape() || v.shape() != p->value.shape())
                fail(ErrorKind::Format, "optimizer moments for '" + p->name + "' have the wrong shape");
            o.first_moments.push_back(std::move(m));
            o.second_moments.push_back(std::move(v));
        }
        ck.optimizer = std::move(o);
    }
    return ck;
}

void load_into(GFocalModel& model, const Checkpoint& ckpt) {
    if (!(model.config == ckpt.config)) fail(ErrorKind::Config, "checkpoint architecture does not match the model");
    auto params = model.parameters();
    if (params.size() != ckpt.params.size()) fail(ErrorKind::Config, "checkpoint parameter count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i]->name != ckpt.params[i].first || params[i]->value.shape() != ckpt.params[i].second.shape())
            fail(ErrorKind::Config, "checkpoint parameter '" + ckpt.params[i].first + "' does not match the model");
        params[i]->value = ckpt.params[i].second;
        params[i]->zero_grad();
    }
}

GFocalModel model_from_checkpoint(const Checkpoint& ckpt) {
    GFocalModel m = build_model(ckpt.config, 0);
    load_into(m, ckpt);
    return m;
}

void restore_optimizer(AdamW& optimizer, const Checkpoint& ckpt) {
    if (!ckpt.optimizer) fail(ErrorKind::MissingField, "checkpoint carries no optimizer state");
    const OptimizerSnapshot& o = *ckpt.optimizer;
    if (o.first_moments.size() != optimizer.params().size())
        fail(ErrorKind::Config, "optimizer state does not match the parameter set");
    optimizer.options() = o.options;
    optimizer.set_step_count(o.step);
    optimizer.first_moments() = o.first_moments;
    optimizer.second_moments() = o.second_moments;
}

}  // namespace gfocal
