// Copyright (c) 2026 The GFocal Authors
// SPDX-License-Identifier: Apache-2.0

#include "gfocal/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "gfocal/ops.hpp"

namespace gfocal {

namespace {

std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void check_pair(const FieldPair& pair) {
    require_same_shape(pair.truth, pair.prediction, "metrics");
    if (pair.weights) {
        if (pair.weights->numel() != (pair.truth.rank() == 0 ? 1 : pair.truth.dim(0)))
            fail(ErrorKind::Dimension, "quadrature weights must have one entry per point");
        for (double w : pair.weights->data())
            if (!(w > 0.0)) fail(ErrorKind::Domain, "quadrature weights must be positive");
    }
}

}  // namespace

double relative_l2(const FieldPair& pair) {
    check_pair(pair);
    const Tensor& u = pair.truth;
    const Tensor& p = pair.prediction;
    const std::size_t n = u.rank() == 0 ? 1 : u.dim(0);
    const std::size_t f = n == 0 ? 0 : u.numel() / n;
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double w = pair.weights ? (*pair.weights)[i] : 1.0;
        for (std::size_t k = 0; k < f; ++k) {
            const double d = u[i * f + k] - p[i * f + k];
            num += w * d * d;
            den += w * u[i * f + k] * u[i * f + k];
        }
    }
    if (den == 0.0) fail(ErrorKind::Domain, "relative L2 is undefined for a zero truth field");
    return std::sqrt(num) / std::sqrt(den);
}

double grad_loss(const FieldPair& pair, const Geometry& geometry) {
    check_pair(pair);
    if (geometry.kind != GeometryKind::structured_grid) {
        fail(ErrorKind::UnsupportedGeometry, "gradient loss needs a structured grid");
    }
    const std::size_t h = geometry.height, w = geometry.width;
    const double hr = h > 1 ? 1.0 / static_cast<double>(h - 1) : 1.0;
    const double hc = w > 1 ? 1.0 / static_cast<double>(w - 1) : 1.0;
    const Tensor u = pair.truth.rank() == 2 ? pair.truth : pair.truth.reshaped({pair.truth.numel(), 1});
    const Tensor p = pair.prediction.rank() == 2 ? pair.prediction : pair.prediction.reshaped({pair.prediction.numel(), 1});
    FieldPair grads{grid_gradient_plain(u, h, w, hr, hc), grid_gradient_plain(p, h, w, hr, hc), std::nullopt};
    return relative_l2(grads);
}

void SurfaceSample::validate() const {
    require_rank(points, 2, "surface points");
    const std::size_t b = points.rows(), d = points.cols();
    if (pressure.numel() != b || measure.numel() != b) fail(ErrorKind::Dimension, "surface arrays disagree on B");
    if (normals.shape() != points.shape() || shear.shape() != points.shape())
        fail(ErrorKind::Dimension, "surface normals/shear must be [B x D]");
    if (direction.size() != d) fail(ErrorKind::Dimension, "direction must have D components");
    if (!(inlet_speed > 0.0)) fail(ErrorKind::Domain, "inlet speed must be positive");
    if (!(reference_area > 0.0)) fail(ErrorKind::Domain, "reference area must be positive");
    double dn = 0.0;
    for (double c : direction) dn += c * c;
    if (std::abs(std::sqrt(dn) - 1.0) > 1e-6) fail(ErrorKind::Domain, "direction must be a unit vector");
    for (std::size_t i = 0; i < b; ++i) {
        double nn = 0.0;
        for (std::size_t k = 0; k < d; ++k) nn += normals.at(i, k) * normals.at(i, k);
        if (std::abs(std::sqrt(nn) - 1.0) > 1e-6)
            fail(ErrorKind::Domain, "normal " + std::to_string(i) + " is not unit length");
        if (!(measure[i] > 0.0)) fail(ErrorKind::Domain, "segment measure " + std::to_string(i) + " is not positive");
    }
}

double force_coefficient(const SurfaceSample& s) {
    s.validate();
    const std::size_t b = s.points.rows(), d = s.points.cols();
    double pressure_term = 0.0, shear_term = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        double n_dot = 0.0, t_dot = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
            n_dot += s.normals.at(i, k) * s.direction[k];
            t_dot += s.shear.at(i, k) * s.direction[k];
        }
        pressure_term += s.pressure[i] * n_dot * s.measure[i];
        shear_term += t_dot * s.measure[i];
    }
    return 2.0 / (s.inlet_speed * s.inlet_speed * s.reference_area) * (pressure_term + shear_term);
}

std::vector<double> average_ranks(std::span<const double> values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n);
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

double spearman_rho(std::span<const double> truth, std::span<const double> predicted) {
    if (truth.size() != predicted.size()) fail(ErrorKind::Dimension, "spearman_rho: length mismatch");
    if (truth.size() < 2) fail(ErrorKind::Domain, "spearman_rho needs at least two values");
    const std::vector<double> rt = average_ranks(truth);
    const std::vector<double> rp = average_ranks(predicted);
    const auto n = static_cast<double>(rt.size());
    const double mt = std::accumulate(rt.begin(), rt.end(), 0.0) / n;
    const double mp = std::accumulate(rp.begin(), rp.end(), 0.0) / n;
    double cov = 0.0, vt = 0.0, vp = 0.0;
    for (std::size_t i = 0; i < rt.size(); ++i) {
        cov += (rt[i] - mt) * (rp[i] - mp);
        vt += (rt[i] - mt) * (rt[i] - mt);
        vp += (rp[i] - mp) * (rp[i] - mp);
    }
    if (vt == 0.0 || vp == 0.0) fail(ErrorKind::Domain, "spearman_rho undefined: a ranking has zero variance");
    return std::clamp(cov / std::sqrt(vt * vp), -1.0, 1.0);
}

std::string MetricsReport::to_text() const {
    std::ostringstream os;
    os << "metric              value\n";
    os << "------------------  ------------------------\n";
    auto row = [&](const char* name, double v) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "%-18s  %.10g\n", name, v);
        os << buf;
    };
    row("relative_l2", relative_l2);
    if (grad_loss) row("grad_loss", *grad_loss);
    if (coefficient) row("coefficient_rl2", *coefficient);
    if (spearman_rho) row("spearman_rho", *spearman_rho);
    os << "\n[metrics]\n";
    os << "samples=" << samples << '\n';
    os << "relative_l2=" << fmt17(relative_l2) << '\n';
    if (grad_loss) os << "grad_loss=" << fmt17(*grad_loss) << '\n';
    if (coefficient) os << "coefficient_rl2=" << fmt17(*coefficient) << '\n';
    if (spearman_rho) os << "spearman_rho=" << fmt17(*spearman_rho) << '\n';
    return os.str();
}

}  // namespace gfocal
