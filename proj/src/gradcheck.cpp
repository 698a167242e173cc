// Copyright (c) 2026 The GFocal Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>

#include "gfocal/blocks.hpp"
#include "gfocal/harness.hpp"
#include "gfocal/ops.hpp"

namespace gfocal {

double relative_error(double analytic, double numeric, double floor) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

double worst_relative_error(std::span<const double> analytic, std::span<const double> numeric, double floor) {
    if (analytic.size() != numeric.size()) fail(ErrorKind::Dimension, "relative_error: length mismatch");
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i)
        worst = std::max(worst, relative_error(analytic[i], numeric[i], floor));
    return worst;
}

double GradCheckReport::worst() const {
    double w = 0.0;
    for (const auto& e : entries) w = std::max(w, e.worst);
    return w;
}

std::vector<std::string> GradCheckReport::offenders() const {
    std::vector<std::string> out;
    for (const auto& e : entries)
        if (!(e.worst < tolerance)) out.push_back(e.name);
    return out;
}

std::string GradCheckReport::to_text() const {
    std::size_t width = 4;
    for (const auto& e : entries) width = std::max(width, e.name.size());
    std::ostringstream os;
    char buf[512];
    std::snprintf(buf, sizeof buf, "%-*s  %12s  %8s  %s\n", static_cast<int>(width), "name", "worst_rel_err", "checked",
                  "status");
    os << buf;
    for (const auto& e : entries) {
        std::snprintf(buf, sizeof buf, "%-*s  %12.4e  %8zu  %s\n", static_cast<int>(width), e.name.c_str(), e.worst,
                      e.checked, e.worst < tolerance ? "ok" : "FAIL");
        os << buf;
    }
    const auto bad = offenders();
    os << "[gradcheck]\n";
    std::snprintf(buf, sizeof buf, "worst_rel_err=%.17g\ntolerance=%.17g\n", worst(), tolerance);
    os << buf << "entries=" << entries.size() << "\nresult=" << (bad.empty() ? "pass" : "fail") << '\n';
    if (!bad.empty()) {
        os << "offenders=";
        for (std::size_t i = 0; i < bad.size(); ++i) os << (i ? "," : "") << bad[i];
        os << '\n';
    }
    return os.str();
}

namespace {

using OpFn = std::function<Var(const std::vector<Var>&)>;

struct OpCase {
    std::string name;
    std::vector<Tensor> inputs;
    OpFn fn;
};

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape), DType::f64);
    for (double& v : t.storage()) v = rng.uniform(lo, hi);
    return t;
}

// <out, probe>, recorded as its own node so the check does not lean on other ops' rules.
Var probe_sum(Var out, const Tensor& probe) {
    double s = 0.0;
    for (std::size_t i = 0; i < probe.numel(); ++i) s += out.value()[i] * probe[i];
    return out.tape().record("gradcheck_probe", Tensor::scalar(s), {out}, [probe](BackwardContext& ctx) {
        Tensor& g = ctx.input_grad(0);
        const double up = ctx.out_grad().item();
        for (std::size_t i = 0; i < probe.numel(); ++i) g[i] += up * probe[i];
    });
}

/// Fourth-order central difference of f() in x, restoring x afterwards.
template <typename F>
double central_difference(double& x, double h, F&& f) {
    const double saved = x;
    const double offsets[4] = {2.0 * h, h, -h, -2.0 * h};
    double v[4];
    for (int k = 0; k < 4; ++k) {
        x = saved + offsets[k];
        v[k] = f();
    }
    x = saved;
    return (-v[0] + 8.0 * v[1] - 8.0 * v[2] + v[3]) / (12.0 * h);
}

GradCheckEntry check_op(const OpCase& c, const GradCheckOptions& opt, Rng& rng) {
    std::vector<Tensor> inputs = c.inputs;
    Tensor probe;
    const auto evaluate = [&](Tape& tape, std::vector<Var>& vars) {
        vars.clear();
        for (const Tensor& t : inputs) vars.push_back(tape.variable(t));
        Var out = c.fn(vars);
        if (probe.numel() == 0 && out.value().numel() > 0) probe = random_tensor(out.value().shape(), rng, 0.5, 1.5);
        return probe_sum(out, probe);
    };
    std::vector<Tensor> analytic;
    {
        Tape tape(DType::f64);
        std::vector<Var> vars;
        tape.backward(evaluate(tape, vars));
        for (const Var& v : vars) analytic.push_back(v.grad());
    }
    GradCheckEntry entry{"op:" + c.name, 0.0, 0};
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        std::vector<double> numeric(inputs[k].numel());
        for (std::size_t i = 0; i < inputs[k].numel(); ++i) {
            numeric[i] = central_difference(inputs[k][i], opt.step, [&] {
                Tape tape(DType::f64);
                std::vector<Var> vars;
                return evaluate(tape, vars).value().item();
            });
        }
        entry.worst = std::max(entry.worst, worst_relative_error(analytic[k].data(), numeric, opt.floor));
        entry.checked += numeric.size();
    }
    return entry;
}

std::vector<OpCase> op_cases(Rng& rng) {
    const auto r = [&](Shape s) { return random_tensor(std::move(s), rng); };
    const auto pos = [&](Shape s) { return random_tensor(std::move(s), rng, 0.2, 1.0); };
    std::vector<OpCase> cases;
    cases.push_back({"matmul", {r({3, 4}), r({4, 2})}, [](auto& v) { return matmul(v[0], v[1]); }});
    cases.push_back({"matmul_nt", {r({3, 4}), r({2, 4})}, [](auto& v) { return matmul_nt(v[0], v[1]); }});
    cases.push_back({"transpose", {r({3, 2})}, [](auto& v) { return transpose(v[0]); }});
    cases.push_back({"add", {r({3, 3}), r({3, 3})}, [](auto& v) { return add(v[0], v[1]); }});
    cases.push_back({"sub", {r({3, 3}), r({3, 3})}, [](auto& v) { return sub(v[0], v[1]); }});
    cases.push_back({"mul", {r({3, 3}), r({3, 3})}, [](auto& v) { return mul(v[0], v[1]); }});
    cases.push_back({"scale", {r({2, 3})}, [](auto& v) { return scale(v[0], -1.7); }});
    cases.push_back({"add_bias", {r({4, 3}), r({3})}, [](auto& v) { return add_bias(v[0], v[1]); }});
    cases.push_back({"mul_rows", {r({4, 3}), r({4, 1})}, [](auto& v) { return mul_rows(v[0], v[1]); }});
    cases.push_back({"concat_cols", {r({3, 2}), r({3, 4})}, [](auto& v) { return concat_cols(v[0], v[1]); }});
    cases.push_back({"softmax_rows", {r({3, 5})}, [](auto& v) { return softmax_rows(v[0]); }});
    cases.push_back({"layernorm", {r({4, 5}), r({5}), r({5})}, [](auto& v) { return layernorm(v[0], v[1], v[2]); }});
    cases.push_back({"gelu", {r({3, 4})}, [](auto& v) { return gelu(v[0]); }});
    cases.push_back({"sigmoid", {r({3, 4})}, [](auto& v) { return sigmoid(v[0]); }});
    {
        Tensor tall = r({4, 3}), wide = r({2, 4});
        for (std::size_t i = 0; i < 3; ++i) tall.at(i, i) += 2.0;
        for (std::size_t i = 0; i < 2; ++i) wide.at(i, i) += 2.0;
        cases.push_back({"pinv", {tall}, [](auto& v) { return pinv(v[0]); }});
        cases.push_back({"pinv", {wide}, [](auto& v) { return pinv(v[0]); }});
        cases.push_back({"pinv_matmul", {tall.transposed(), r({3, 2})}, [](auto& v) { return pinv_matmul(v[0], v[1]); }});
    }
    {
        const Tensor averaging = segment_mean_matrix(6, 3);
        cases.push_back({"nystrom_fused", {r({6, 4}), r({6, 4}), r({6, 3})},
                         [averaging](auto& v) { return nystrom_fused(v[0], v[1], v[2], averaging, 0.5); }});
    }
    cases.push_back(
        {"aggregate_tokens", {r({6, 3}), pos({6, 4})}, [](auto& v) { return aggregate_tokens(v[0], v[1]); }});
    cases.push_back({"im2col3x3", {r({12, 2})}, [](auto& v) { return im2col3x3(v[0], 3, 4); }});
    cases.push_back({"sum", {r({3, 4})}, [](auto& v) { return sum(v[0]); }});
    cases.push_back({"relative_l2", {r({5, 2}), r({5, 2})}, [](auto& v) { return relative_l2(v[0], v[1]); }});
    cases.push_back(
        {"grid_gradient", {r({12, 2})}, [](auto& v) { return grid_gradient(v[0], 3, 4, 0.5, 1.0 / 3.0); }});
    cases.push_back(
        {"grid_gradient", {r({4, 1})}, [](auto& v) { return grid_gradient(v[0], 2, 2, 1.0, 1.0); }});
    return cases;
}

struct ModelCase {
    Geometry geometry;
    Tensor coords, input, target;
};

ModelCase model_case(GeometryKind kind, Rng& rng) {
    constexpr std::size_t side = 4;
    ModelCase mc;
    mc.geometry = kind == GeometryKind::structured_grid ? Geometry::grid(side, side) : Geometry::point_cloud();
    const std::size_t n = side * side;
    mc.coords = Tensor({n, 2});
    if (kind == GeometryKind::structured_grid) {
        for (std::size_t p = 0; p < n; ++p) {
            mc.coords.at(p, 0) = static_cast<double>(p / side) / (side - 1);
            mc.coords.at(p, 1) = static_cast<double>(p % side) / (side - 1);
        }
    } else {
        mc.coords = random_tensor({n, 2}, rng, 0.0, 1.0);
    }
    mc.input = random_tensor({n, 1}, rng);
    mc.target = random_tensor({n, 1}, rng);
    return mc;
}

void check_model(GeometryKind kind, const GradCheckOptions& opt, Rng& rng, std::vector<GradCheckEntry>& out) {
    GFocalConfig cfg = tiny_config(kind);
    cfg.dtype = DType::f64;
    GFocalModel model = build_model(cfg, derive_seed(opt.seed, static_cast<std::uint64_t>(kind) + 1));
    const ModelCase mc = model_case(kind, rng);
    const bool grid = kind == GeometryKind::structured_grid;
    const Tensor target_grad =
        grid ? grid_gradient_plain(mc.target, 4, 4, 1.0 / 3.0, 1.0 / 3.0) : Tensor();
    const auto loss = [&](Tape& tape) {
        Var pred = forward(tape, model, mc.coords, mc.input, mc.geometry);
        Var l = relative_l2(pred, tape.constant(mc.target));
        if (grid) {
            Var g = grid_gradient(pred, 4, 4, 1.0 / 3.0, 1.0 / 3.0);
            l = add(l, scale(relative_l2(g, tape.constant(target_grad)), kGradLossWeight));
        }
        return l;
    };
    const auto params = model.parameters();
    for (Parameter* p : params) p->zero_grad();
    {
        Tape tape(DType::f64);
        tape.backward(loss(tape));
    }
    for (Parameter* p : params) {
        GradCheckEntry entry{std::string(to_string(kind)) + "/" + p->name, 0.0, p->value.numel()};
        std::vector<double> numeric(p->value.numel());
        for (std::size_t i = 0; i < p->value.numel(); ++i) {
            numeric[i] = central_difference(p->value[i], opt.step, [&] {
                Tape tape(DType::f64);
                return loss(tape).value().item();
            });
        }
        entry.worst = worst_relative_error(p->grad.data(), numeric, opt.floor);
        out.push_back(entry);
    }
}

}  // namespace

GradCheckReport run_gradcheck(const GradCheckOptions& options) {
    GradCheckReport report;
    report.tolerance = options.tolerance;
    Rng rng(derive_seed(options.seed, 0x67726164ULL));
    if (options.include_ops) {
        // Duplicate names (e.g. tall and wide pinv) fold into one entry.
        for (const OpCase& c : op_cases(rng)) {
            GradCheckEntry e = check_op(c, options, rng);
            auto it = std::find_if(report.entries.begin(), report.entries.end(),
                                   [&](const GradCheckEntry& x) { return x.name == e.name; });
            if (it == report.entries.end()) {
                report.entries.push_back(e);
            } else {
                it->worst = std::max(it->worst, e.worst);
                it->checked += e.checked;
            }
        }
    }
    if (options.include_model) {
        check_model(GeometryKind::point_cloud, options, rng, report.entries);
        check_model(GeometryKind::structured_grid, options, rng, report.entries);
    }
    return report;
}

}  // namespace gfocal
