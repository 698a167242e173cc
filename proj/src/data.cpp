// Copyright (c) 2026 The GFocal Authors
// SPDX-License-Identifier: Apache-2.0

#include "gfocal/data.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace gfocal {

namespace {

double harmonic(double a, double b) { return 2.0 * a * b / (a + b); }

void check_darcy_inputs(const Tensor& a, const Tensor& f) {
    require_rank(a, 2, "darcy coefficient");
    require_same_shape(a, f, "darcy inputs");
    if (a.rows() != a.cols()) fail(ErrorKind::Dimension, "darcy grid must be square");
    if (a.rows() < 4) fail(ErrorKind::Domain, "darcy grid needs n >= 4");
    for (double v : a.data())
        if (!(v > 0.0)) fail(ErrorKind::Domain, "darcy coefficient must be strictly positive");
}

// y = A x on interior nodes (boundary entries of x are ignored and y is zero there).
void apply_operator(const Tensor& a, const std::vector<double>& x, std::vector<double>& y, std::size_t n,
                    double inv_h2) {
    std::fill(y.begin(), y.end(), 0.0);
    for (std::size_t i = 1; i + 1 < n; ++i)
        for (std::size_t j = 1; j + 1 < n; ++j) {
            const std::size_t p = i * n + j;
            const double ap = a[p];
            const double ce = harmonic(ap, a[p + n]);
            const double cw = harmonic(ap, a[p - n]);
            const double cn = harmonic(ap, a[p + 1]);
            const double cs = harmonic(ap, a[p - 1]);
            const auto val = [&](std::size_t q) {
                const std::size_t qi = q / n, qj = q % n;
                return (qi == 0 || qj == 0 || qi == n - 1 || qj == n - 1) ? 0.0 : x[q];
            };
            y[p] = inv_h2 * ((ce + cw + cn + cs) * x[p] - ce * val(p + n) - cw * val(p - n) - cn * val(p + 1) -
                             cs * val(p - 1));
        }
}

double dot_interior(const std::vector<double>& a, const std::vector<double>& b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 1; i + 1 < n; ++i)
        for (std::size_t j = 1; j + 1 < n; ++j) s += a[i * n + j] * b[i * n + j];
    return s;
}

}  // namespace

Tensor darcy_solve(const Tensor& a_in, const Tensor& f_in, DarcySolveStats* stats) {
    check_darcy_inputs(a_in, f_in);
    const Tensor a = a_in.astype(DType::f64);
    const std::size_t n = a.rows();
    const double h = 1.0 / static_cast<double>(n - 1);
    const double inv_h2 = 1.0 / (h * h);

    std::vector<double> u(n * n, 0.0), r(n * n, 0.0), p(n * n, 0.0), ap(n * n, 0.0);
    for (std::size_t i = 1; i + 1 < n; ++i)
        for (std::size_t j = 1; j + 1 < n; ++j) r[i * n + j] = f_in[i * n + j];
    const double bnorm = std::sqrt(dot_interior(r, r, n));
    DarcySolveStats local;
    DarcySolveStats& st = stats ? *stats : local;
    st = {};
    if (bnorm == 0.0) return Tensor({n, n});

    p = r;
    double rr = dot_interior(r, r, n);
    const int max_iter = static_cast<int>(10 * n * n);
    for (int it = 1; it <= max_iter; ++it) {
        apply_operator(a, p, ap, n, inv_h2);
        const double alpha = rr / dot_interior(p, ap, n);
        for (std::size_t k = 0; k < n * n; ++k) {
            u[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        const double rr_new = dot_interior(r, r, n);
        const double rel = std::sqrt(rr_new) / bnorm;
        st.residual_history.push_back(rel);
        st.iterations = it;
        st.relative_residual = rel;
        if (rel < kDarcyTolerance) {
            for (std::size_t k = 0; k < n; ++k) {
                u[k] = u[(n - 1) * n + k] = u[k * n] = u[k * n + n - 1] = 0.0;
            }
            return Tensor({n, n}, std::move(u));
        }
        const double beta = rr_new / rr;
        rr = rr_new;
        for (std::size_t k = 0; k < n * n; ++k) p[k] = r[k] + beta * p[k];
    }
    std::ostringstream os;
    os << "conjugate gradient did not reach relative residual " << kDarcyTolerance << " in " << max_iter
       << " iterations (final " << st.relative_residual << "; history tail:";
    const std::size_t tail = std::min<std::size_t>(5, st.residual_history.size());
    for (std::size_t k = st.residual_history.size() - tail; k < st.residual_history.size(); ++k)
        os << ' ' << st.residual_history[k];
    os << ')';
    fail(ErrorKind::Solver, os.str());
}

double darcy_residual(const Tensor& a, const Tensor& f, const Tensor& u) {
    check_darcy_inputs(a, f);
    require_same_shape(a, u, "darcy residual");
    const std::size_t n = a.rows();
    const double h = 1.0 / static_cast<double>(n - 1);
    std::vector<double> flux_out(n * n, 0.0);
    // Every face between neighbouring nodes carries flux c (u_left - u_right) / h^2.
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const std::size_t p = i * n + j;
            if (i + 1 < n) {
                const std::size_t q = p + n;
                const double flux = 2.0 * a[p] * a[q] / (a[p] + a[q]) * (u[p] - u[q]) / (h * h);
                flux_out[p] += flux;
                flux_out[q] -= flux;
            }
            if (j + 1 < n) {
                const std::size_t q = p + 1;
                const double flux = 2.0 * a[p] * a[q] / (a[p] + a[q]) * (u[p] - u[q]) / (h * h);
                flux_out[p] += flux;
                flux_out[q] -= flux;
            }
        }
    double rmax = 0.0, fmax = 0.0;
    for (std::size_t i = 1; i + 1 < n; ++i)
        for (std::size_t j = 1; j + 1 < n; ++j) {
            const std::size_t p = i * n + j;
            rmax = std::max(rmax, std::abs(f[p] - flux_out[p]));
            fmax = std::max(fmax, std::abs(f[p]));
        }
    return fmax > 0.0 ? rmax / fmax : rmax;
}

Tensor sample_darcy_coefficient(std::size_t n, Rng& rng) {
    std::vector<double> field(n * n);
    for (double& v : field) v = rng.normal();
    // Separable Gaussian blur, width proportional to the grid so media look alike across resolutions.
    const double sigma = std::max(1.0, static_cast<double>(n) / 8.0);
    const auto radius = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    for (std::ptrdiff_t k = -radius; k <= radius; ++k)
        kernel[static_cast<std::size_t>(k + radius)] = std::exp(-0.5 * static_cast<double>(k * k) / (sigma * sigma));
    const auto ni = static_cast<std::ptrdiff_t>(n);
    std::vector<double> tmp(n * n, 0.0);
    for (std::ptrdiff_t pass = 0; pass < 2; ++pass) {
        std::fill(tmp.begin(), tmp.end(), 0.0);
        for (std::ptrdiff_t i = 0; i < ni; ++i)
            for (std::ptrdiff_t j = 0; j < ni; ++j) {
                double s = 0.0;
                for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
                    // reflect at the edges
                    std::ptrdiff_t idx = (pass == 0 ? i : j) + k;
                    if (idx < 0) idx = -idx - 1;
                    if (idx >= ni) idx = 2 * ni - idx - 1;
                    idx = std::clamp<std::ptrdiff_t>(idx, 0, ni - 1);
                    const std::ptrdiff_t src = pass == 0 ? idx * ni + j : i * ni + idx;
                    s += kernel[static_cast<std::size_t>(k + radius)] * field[static_cast<std::size_t>(src)];
                }
                tmp[static_cast<std::size_t>(i * ni + j)] = s;
            }
        field.swap(tmp);
    }
    Tensor a({n, n});
    for (std::size_t k = 0; k < n * n; ++k) a[k] = field[k] >= 0.0 ? 12.0 : 3.0;
    return a;
}

// ---------------------------------------------------------------------------

namespace {

double task_code(const std::string& task) {
    if (task == "darcy") return 1.0;
    if (task == "pointcloud") return 2.0;
    return 0.0;
}

std::string task_name(double code) {
    if (code == 1.0) return "darcy";
    if (code == 2.0) return "pointcloud";
    return "custom";
}

}  // namespace

void SampleSet::validate() const {
    require_rank(coords, 3, "sample coords");
    require_rank(inputs, 3, "sample inputs");
    require_rank(outputs, 3, "sample outputs");
    if (inputs.dim(0) != coords.dim(0) || outputs.dim(0) != coords.dim(0))
        fail(ErrorKind::Format, "sample arrays disagree on the sample count");
    if (inputs.dim(1) != coords.dim(1) || outputs.dim(1) != coords.dim(1))
        fail(ErrorKind::Format, "sample arrays disagree on the point count");
    if (geometry.kind == GeometryKind::structured_grid && geometry.height * geometry.width != coords.dim(1))
        fail(ErrorKind::Format, "grid shape does not match the point count");
}

TensorBundle SampleSet::to_bundle() const {
    validate();
    TensorBundle b;
    b.put("coords", coords);
    b.put("inputs", inputs);
    b.put("outputs", outputs);
    b.put_scalar("meta/geometry_kind", static_cast<double>(geometry.kind));
    b.put("meta/grid_shape", Tensor({2}, {static_cast<double>(geometry.height), static_cast<double>(geometry.width)}));
    b.put_scalar("meta/task", task_code(task));
    b.put("meta/seed", Tensor({2}, {static_cast<double>(seed >> 32), static_cast<double>(seed & 0xffffffffULL)}));
    b.put_scalar("meta/count", static_cast<double>(count()));
    b.put_scalar("meta/size", static_cast<double>(size_param));
    return b;
}

SampleSet SampleSet::from_bundle(const TensorBundle& b) {
    SampleSet s;
    s.coords = b.tensor("coords");
    s.inputs = b.tensor("inputs");
    s.outputs = b.tensor("outputs");
    if (b.contains("meta/geometry_kind")) {
        const double k = b.scalar("meta/geometry_kind");
        if (k != 0.0 && k != 1.0) fail(ErrorKind::Format, "meta/geometry_kind must be 0 or 1");
        s.geometry.kind = static_cast<GeometryKind>(static_cast<int>(k));
    }
    if (b.contains("meta/grid_shape")) {
        const Tensor g = b.tensor("meta/grid_shape");
        if (g.numel() != 2) fail(ErrorKind::Format, "meta/grid_shape must hold two values");
        s.geometry.height = static_cast<std::size_t>(g[0]);
        s.geometry.width = static_cast<std::size_t>(g[1]);
    }
    if (b.contains("meta/task")) s.task = task_name(b.scalar("meta/task"));
    if (b.contains("meta/seed")) {
        const Tensor t = b.tensor("meta/seed");
        if (t.numel() == 2)
            s.seed = (static_cast<std::uint64_t>(t[0]) << 32) | static_cast<std::uint64_t>(t[1]);
    }
    if (b.contains("meta/size")) s.size_param = static_cast<std::size_t>(b.scalar("meta/size"));
    s.validate();
    return s;
}

SampleSet generate_darcy(std::size_t count, std::size_t n, std::uint64_t seed) {
    if (count < 1) fail(ErrorKind::Usage, "darcy generation needs count >= 1");
    if (n < 4) fail(ErrorKind::Usage, "darcy generation needs size >= 4");
    const std::size_t pts = n * n;
    SampleSet set;
    set.task = "darcy";
    set.seed = seed;
    set.size_param = n;
    set.geometry = Geometry::grid(n, n);
    set.coords = Tensor({count, pts, 2});
    set.inputs = Tensor({count, pts, 1});
    set.outputs = Tensor({count, pts, 1});
    const double h = 1.0 / static_cast<double>(n - 1);
    const Tensor f = Tensor::full({n, n}, 1.0);
    for (std::size_t s = 0; s < count; ++s) {
        Rng rng(derive_seed(seed, s));
        const Tensor a = sample_darcy_coefficient(n, rng);
        Tensor u;
        try {
            u = darcy_solve(a, f);
        } catch (const Error& e) {
            fail(e.kind(), "sample " + std::to_string(s) + ": " + e.what());
        }
        for (std::size_t k = 0; k < pts; ++k) {
            set.coords[(s * pts + k) * 2 + 0] = static_cast<double>(k / n) * h;
            set.coords[(s * pts + k) * 2 + 1] = static_cast<double>(k % n) * h;
            set.inputs[s * pts + k] = a[k];
            set.outputs[s * pts + k] = u[k];
        }
    }
    return set;
}

std::vector<double> smooth_by_kernel(const Tensor& points, std::span<const double> g, double width) {
    require_rank(points, 2, "smooth_by_kernel");
    const std::size_t n = points.rows(), d = points.cols();
    std::vector<double> h(n);
    const double inv = 1.0 / (2.0 * width * width);
    for (std::size_t i = 0; i < n; ++i) {
        double num = 0.0, den = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            double r2 = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                const double diff = points.at(i, k) - points.at(j, k);
                r2 += diff * diff;
            }
            const double w = std::exp(-r2 * inv);
            num += w * g[j];
            den += w;
        }
        h[i] = num / den;
    }
    return h;
}

SampleSet generate_pointcloud(std::size_t count, std::size_t n, std::uint64_t seed) {
    if (count < 1) fail(ErrorKind::Usage, "point-cloud generation needs count >= 1");
    if (n < 1) fail(ErrorKind::Usage, "point-cloud generation needs size >= 1");
    SampleSet set;
    set.task = "pointcloud";
    set.seed = seed;
    set.size_param = n;
    set.geometry = Geometry::point_cloud();
    set.coords = Tensor({count, n, 2});
    set.inputs = Tensor({count, n, 1});
    set.outputs = Tensor({count, n, 1});
    constexpr int kModes = 3;
    for (std::size_t s = 0; s < count; ++s) {
        Rng rng(derive_seed(seed, s));
        Tensor pts({n, 2});
        for (double& v : pts.storage()) v = rng.uniform();
        double cos_amp[kModes][kModes], sin_amp[kModes][kModes];
        for (int kx = 0; kx < kModes; ++kx)
            for (int ky = 0; ky < kModes; ++ky) {
                const double decay = 1.0 / (1.0 + kx + ky);
                cos_amp[kx][ky] = rng.normal() * decay;
                sin_amp[kx][ky] = rng.normal() * decay;
            }
        std::vector<double> g(n);
        for (std::size_t i = 0; i < n; ++i) {
            double v = 0.0;
            for (int kx = 0; kx < kModes; ++kx)
                for (int ky = 0; ky < kModes; ++ky) {
                    const double phase = 2.0 * std::numbers::pi * (kx * pts.at(i, 0) + ky * pts.at(i, 1));
                    v += cos_amp[kx][ky] * std::cos(phase) + sin_amp[kx][ky] * std::sin(phase);
                }
            g[i] = v;
        }
        const std::vector<double> h = smooth_by_kernel(pts, g, kPointCloudKernelWidth);
        for (std::size_t i = 0; i < n; ++i) {
            set.coords[(s * n + i) * 2 + 0] = pts.at(i, 0);
            set.coords[(s * n + i) * 2 + 1] = pts.at(i, 1);
            set.inputs[s * n + i] = g[i];
            set.outputs[s * n + i] = h[i];
        }
    }
    return set;
}

bool normalize_coordinates(SampleSet& set) {
    const std::size_t d = set.coord_dim();
    const std::size_t rows = set.count() * set.points();
    bool outside = false;
    for (double v : set.coords.data()) outside = outside || v < 0.0 || v > 1.0;
    if (!outside) return false;
    for (std::size_t k = 0; k < d; ++k) {
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (std::size_t r = 0; r < rows; ++r) {
            lo = std::min(lo, set.coords[r * d + k]);
            hi = std::max(hi, set.coords[r * d + k]);
        }
        const double span = hi - lo;
        for (std::size_t r = 0; r < rows; ++r)
            set.coords[r * d + k] = span > 0.0 ? (set.coords[r * d + k] - lo) / span : 0.0;
    }
    return true;
}

}  // namespace gfocal
