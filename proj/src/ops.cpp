// Copyright (c) 2026 The GFocal Authors
// SPDX-License-Identifier: Apache-2.0

#include "gfocal/ops.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <numbers>
#include <string>

#include "extended.hpp"
#include "gfocal/linalg.hpp"

namespace gfocal {

namespace {

void need_rank2(const Var& v, const char* op) { require_rank(v.value(), 2, op); }

void need_same(const Var& a, const Var& b, const char* op) { require_same_shape(a.value(), b.value(), op); }

// c[m x n] += a[m x k] * b[k x n]
void gemm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a[i * k + p];
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// c[m x n] += a[m x k] * b[n x k]^T
void gemm_nt_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = b + j * k;
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
            c[i * n + j] += s;
        }
    }
}

// c[k x n] += a[m x k]^T * b[m x n]
void gemm_tn_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* brow = b + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a[i * k + p];
            double* crow = c + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

}  // namespace

Var matmul(Var a, Var b) {
    need_rank2(a, "matmul");
    need_rank2(b, "matmul");
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    if (b.rows() != k) {
        fail(ErrorKind::Dimension, "matmul: inner dimensions differ " + shape_string(a.shape()) + " * " +
                                       shape_string(b.shape()));
    }
    Tensor out({m, n}, a.tape().dtype());
    gemm_acc(a.value().data().data(), b.value().data().data(), out.data().data(), m, k, n);
    return a.tape().record("matmul", std::move(out), {a, b}, [m, k, n](BackwardContext& ctx) {
        const double* g = ctx.out_grad().data().data();
        if (ctx.needs_grad(0))
            gemm_nt_acc(g, ctx.input(1).data().data(), ctx.input_grad(0).data().data(), m, n, k);
        if (ctx.needs_grad(1))
            gemm_tn_acc(ctx.input(0).data().data(), g, ctx.input_grad(1).data().data(), m, k, n);
    });
}

Var matmul_nt(Var a, Var b) {
    need_rank2(a, "matmul_nt");
    need_rank2(b, "matmul_nt");
    const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
    if (b.cols() != k) {
        fail(ErrorKind::Dimension, "matmul_nt: inner dimensions differ " + shape_string(a.shape()) + " * " +
                                       shape_string(b.shape()) + "^T");
    }
    Tensor out({m, n}, a.tape().dtype());
    gemm_nt_acc(a.value().data().data(), b.value().data().data(), out.data().data(), m, k, n);
    return a.tape().record("matmul_nt", std::move(out), {a, b}, [m, k, n](BackwardContext& ctx) {
        const double* g = ctx.out_grad().data().data();
        if (ctx.needs_grad(0)) gemm_acc(g, ctx.input(1).data().data(), ctx.input_grad(0).data().data(), m, n, k);
        if (ctx.needs_grad(1))
            gemm_tn_acc(g, ctx.input(0).data().data(), ctx.input_grad(1).data().data(), m, n, k);
    });
}

Var transpose(Var a) {
    need_rank2(a, "transpose");
    return a.tape().record("transpose", a.value().transposed(), {a}, [](BackwardContext& ctx) {
        const Tensor gt = ctx.out_grad().transposed();
        Tensor& ga = ctx.input_grad(0);
        for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] += gt[i];
    });
}

Var add(Var a, Var b) {
    need_same(a, b, "add");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] += b.value()[i];
    return a.tape().record("add", std::move(out), {a, b}, [](BackwardContext& ctx) {
        const Tensor& g = ctx.out_grad();
        for (std::size_t k = 0; k < 2; ++k) {
            if (!ctx.needs_grad(k)) continue;
            Tensor& gi = ctx.input_grad(k);
            for (std::size_t i = 0; i < g.numel(); ++i) gi[i] += g[i];
        }
    });
}

Var sub(Var a, Var b) {
    need_same(a, b, "sub");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= b.value()[i];
    return a.tape().record("sub", std::move(out), {a, b}, [](BackwardContext& ctx) {
        const Tensor& g = ctx.out_grad();
        if (ctx.needs_grad(0)) {
            Tensor& ga = ctx.input_grad(0);
            for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
        }
        if (ctx.needs_grad(1)) {
            Tensor& gb = ctx.input_grad(1);
            for (std::size_t i = 0; i < g.numel(); ++i) gb[i] -= g[i];
        }
    });
}

Var mul(Var a, Var b) {
    need_same(a, b, "mul");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= b.value()[i];
    return a.tape().record("mul", std::move(out), {a, b}, [](BackwardContext& ctx) {
        const Tensor& g = ctx.out_grad();
        if (ctx.needs_grad(0)) {
            Tensor& ga = ctx.input_grad(0);
            for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * ctx.input(1)[i];
        }
        if (ctx.needs_grad(1)) {
            Tensor& gb = ctx.input_grad(1);
            for (std::size_t i = 0; i < g.numel(); ++i) gb[i] += g[i] * ctx.input(0)[i];
        }
    });
}

Var scale(Var a, double factor) {
    Tensor out = a.value();
    for (double& v : out.storage()) v *= factor;
    return a.tape().record("scale", std::move(out), {a}, [factor](BackwardContext& ctx) {
        const Tensor& g = ctx.out_grad();
        Tensor& ga = ctx.input_grad(0);
        for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * factor;
    });
}

Var add_bias(Var x, Var bias) {
    need_rank2(x, "add_bias");
    const std::size_t n = x.rows(), c = x.cols();
    if (bias.value().numel() != c) {
        fail(ErrorKind::Dimension, "add_bias: bias " + shape_string(bias.shape()) + " vs input " +
                                       shape_string(x.shape()));
    }
    Tensor out = x.value();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] += bias.value()[j];
    return x.tape().record("add_bias", std::move(out), {x, bias}, [n, c](BackwardContext& ctx) {
        const Tensor& g = ctx.out_grad();
        if (ctx.needs_grad(0)) {
            Tensor& gx = ctx.input_grad(0);
            for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i];
        }
        if (ctx.needs_grad(1)) {
            Tensor& gb = ctx.input_grad(1);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < c; ++j) gb[j] += g[i * c + j];
        }
    });
}

Var mul_rows(Var x, Var gate) {
    need_rank2(x, "mul_rows");
    const std::size_t n = x.rows(), c = x.cols();
    if (gate.value().numel() != n) {
        fail(ErrorKind::Dimension, "mul_rows: gate " + shape_string(gate.shape()) + " vs input " +
                                       shape_string(x.shape()));
    }
    Tensor out = x.value();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] *= gate.value()[i];
    return x.tape().record("mul_rows", std::move(out), {x, gate}, [n, c](BackwardContext& ctx) {
        const Tensor& g = ctx.out_grad();
        const Tensor& xv = ctx.input(0);
        const Tensor& gv = ctx.input(1);
        if (ctx.needs_grad(0)) {
            Tensor& gx = ctx.input_grad(0);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += g[i * c + j] * gv[i];
        }
        if (ctx.needs_grad(1)) {
            Tensor& gg = ctx.input_grad(1);
            for (std::size_t i = 0; i < n; ++i) {
                double s = 0.0;
                for (std::size_t j = 0; j < c; ++j) s += g[i * c + j] * xv[i * c + j];
                gg[i] += s;
            }
        }
    });
}

Var concat_cols(Var a, Var b) {
    need_rank2(a, "concat_cols");
    need_rank2(b, "concat_cols");
    const std::size_t n = a.rows(), p = a.cols(), q = b.cols();
    if (b.rows() != n) {
        fail(ErrorKind::Dimension, "concat_cols: row counts differ " + shape_string(a.shape()) + " vs " +
                                       shape_string(b.shape()));
    }
    Tensor out({n, p + q}, a.tape().dtype());
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < p; ++j) out[i * (p + q) + j] = a.value()[i * p + j];
        for (std::size_t j = 0; j < q; ++j) out[i * (p + q) + p + j] = b.value()[i * q + j];
    }
    return a.tape().record("concat_cols", std::move(out), {a, b}, [n, p, q](BackwardContext& ctx) {
        const Tensor& g = ctx.out_grad();
        if (ctx.needs_grad(0)) {
            Tensor& ga = ctx.input_grad(0);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < p; ++j) ga[i * p + j] += g[i * (p + q) + j];
        }
        if (ctx.needs_grad(1)) {
            Tensor& gb = ctx.input_grad(1);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < q; ++j) gb[i * q + j] += g[i * (p + q) + p + j];
        }
    });
}

Var softmax_rows(Var x) {
    need_rank2(x, "softmax_rows");
    const std::size_t n = x.rows(), c = x.cols();
    if (!x.value().all_finite()) fail(ErrorKind::Numeric, "softmax_rows: non-finite input");
    Tensor out(x.value().shape(), x.tape().dtype());
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = x.value().data().data() + i * c;
        double* o = out.data().data() + i * c;
        const double mx = *std::max_element(row, row + c);
        double s = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            o[j] = std::exp(row[j] - mx);
            s += o[j];
        }
        for (std::size_t j = 0; j < c; ++j) o[j] /= s;
    }
    return x.tape().record("softmax_rows", std::move(out), {x}, [n, c](BackwardContext& ctx) {
        const Tensor& g = ctx.out_grad();
        const Tensor& y = ctx.out_value();
        Tensor& gx = ctx.input_grad(0);
        for (std::size_t i = 0; i < n; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < c; ++j) dot += g[i * c + j] * y[i * c + j];
            for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += y[i * c + j] * (g[i * c + j] - dot);
        }
    });
}

Var layernorm(Var x, Var gain, Var bias, double eps) {
    need_rank2(x, "layernorm");
    const std::size_t n = x.rows(), c = x.cols();
    if (gain.value().numel() != c || bias.value().numel() != c) {
        fail(ErrorKind::Dimension, "layernorm: affine size does not match " + shape_string(x.shape()));
    }
    Tensor xhat(x.value().shape(), DType::f64);
    std::vector<double> inv_std(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = x.value().data().data() + i * c;
        double mu = 0.0;
        for (std::size_t j = 0; j < c; ++j) mu += row[j];
        mu /= static_cast<double>(c);
        double var = 0.0;
        for (std::size_t j = 0; j < c; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= static_cast<double>(c);
        inv_std[i] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < c; ++j) xhat[i * c + j] = (row[j] - mu) * inv_std[i];
    }
    Tensor out(x.value().shape(), x.tape().dtype());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j)
            out[i * c + j] = xhat[i * c + j] * gain.value()[j] + bias.value()[j];
    return x.tape().record(
        "layernorm", std::move(out), {x, gain, bias},
        [n, c, xhat = std::move(xhat), inv_std = std::move(inv_std)](BackwardContext& ctx) {
            const Tensor& g = ctx.out_grad();
            const Tensor& gain_v = ctx.input(1);
            if (ctx.needs_grad(0)) {
                Tensor& gx = ctx.input_grad(0);
                std::vector<double> gxhat(c);
                for (std::size_t i = 0; i < n; ++i) {
                    double m1 = 0.0, m2 = 0.0;
                    for (std::size_t j = 0; j < c; ++j) {
                        gxhat[j] = g[i * c + j] * gain_v[j];
                        m1 += gxhat[j];
                        m2 += gxhat[j] * xhat[i * c + j];
                    }
                    m1 /= static_cast<double>(c);
                    m2 /= static_cast<double>(c);
                    for (std::size_t j = 0; j < c; ++j)
                        gx[i * c + j] += inv_std[i] * (gxhat[j] - m1 - xhat[i * c + j] * m2);
                }
            }
            if (ctx.needs_grad(1)) {
                Tensor& gg = ctx.input_grad(1);
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < c; ++j) gg[j] += g[i * c + j] * xhat[i * c + j];
            }
            if (ctx.needs_grad(2)) {
                Tensor& gb = ctx.input_grad(2);
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < c; ++j) gb[j] += g[i * c + j];
            }
        });
}

Var gelu(Var x) {
    Tensor out = x.value();
    for (double& v : out.storage()) v = 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
    return x.tape().record("gelu", std::move(out), {x}, [](BackwardContext& ctx) {
        const Tensor& g = ctx.out_grad();
        const Tensor& xv = ctx.input(0);
        Tensor& gx = ctx.input_grad(0);
        const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
        for (std::size_t i = 0; i < g.numel(); ++i) {
            const double v = xv[i];
            const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
            const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
            gx[i] += g[i] * (cdf + v * pdf);
        }
    });
}

Var sigmoid(Var x) {
    Tensor out = x.value();
    for (double& v : out.storage()) {
        if (v >= 0.0) {
            v = 1.0 / (1.0 + std::exp(-v));
        } else {
            const double e = std::exp(v);
            v = e / (1.0 + e);
        }
    }
    return x.tape().record("sigmoid", std::move(out), {x}, [](BackwardContext& ctx) {
        const Tensor& g = ctx.out_grad();
        const Tensor& y = ctx.out_value();
        Tensor& gx = ctx.input_grad(0);
        for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
    });
}

Var pinv(Var a) {
    need_rank2(a, "pinv");
    Tensor ap = pinv_plain(a.value().astype(DType::f64));
    return a.tape().record("pinv", ap, {a}, [](BackwardContext& ctx) {
        const Tensor ga = pinv_backward(ctx.input(0).astype(DType::f64), ctx.out_grad());
        Tensor& dst = ctx.input_grad(0);
        for (std::size_t i = 0; i < dst.numel(); ++i) dst[i] += ga[i];
    });
}

Var pinv_matmul(Var a, Var x) {
    need_rank2(a, "pinv_matmul");
    need_rank2(x, "pinv_matmul");
    if (x.rows() != a.rows()) {
        fail(ErrorKind::Dimension, "pinv_matmul: " + shape_string(a.shape()) + " pseudoinverse cannot multiply " +
                                       shape_string(x.shape()));
    }
    const Tensor a64 = a.value().astype(DType::f64);
    return a.tape().record("pinv_matmul", pinv_apply_plain(a64, x.value()), {a, x}, [a64](BackwardContext& ctx) {
        Tensor ga, gx;
        pinv_apply_backward(a64, ctx.input(1).astype(DType::f64), ctx.out_grad(), ctx.needs_grad(0) ? &ga : nullptr,
                            ctx.needs_grad(1) ? &gx : nullptr);
        if (ctx.needs_grad(0)) {
            Tensor& dst = ctx.input_grad(0);
            for (std::size_t i = 0; i < dst.numel(); ++i) dst[i] += ga[i];
        }
        if (ctx.needs_grad(1)) {
            Tensor& dst = ctx.input_grad(1);
            for (std::size_t i = 0; i < dst.numel(); ++i) dst[i] += gx[i];
        }
    });
}

namespace {

using detail::WMat;

/// s a b^T.
template <typename T>
WMat<T> scaled_nt(const WMat<T>& a, const WMat<T>& b, T s) {
    WMat<T> out(a.r, b.r);
    for (std::size_t i = 0; i < a.r; ++i)
        for (std::size_t j = 0; j < b.r; ++j) {
            T acc = 0;
            for (std::size_t k = 0; k < a.c; ++k) acc += a(i, k) * b(j, k);
            out(i, j) = s * acc;
        }
    return out;
}

template <typename T>
void softmax_rows_work(WMat<T>& m) {
    for (std::size_t i = 0; i < m.r; ++i) {
        T* row = &m.d[i * m.c];
        const T top = *std::max_element(row, row + m.c);
        T total = 0;
        for (std::size_t j = 0; j < m.c; ++j) total += row[j] = std::exp(row[j] - top);
        for (std::size_t j = 0; j < m.c; ++j) row[j] /= total;
    }
}

/// Gradient wrt the logits, times s: s * S o (G - rowsum(G o S)).
template <typename T>
WMat<T> softmax_pullback_work(const WMat<T>& sm, const WMat<T>& g, T s) {
    WMat<T> out(sm.r, sm.c);
    for (std::size_t i = 0; i < sm.r; ++i) {
        T dot = 0;
        for (std::size_t j = 0; j < sm.c; ++j) dot += g(i, j) * sm(i, j);
        for (std::size_t j = 0; j < sm.c; ++j) out(i, j) = s * sm(i, j) * (g(i, j) - dot);
    }
    return out;
}

template <typename T>
void accumulate(Tensor& dst, const WMat<T>& src) {
    for (std::size_t i = 0; i < dst.numel(); ++i) dst[i] += static_cast<double>(src.d[i]);
}

template <typename T>
void add_into(WMat<T>& dst, const WMat<T>& src) {
    for (std::size_t i = 0; i < dst.d.size(); ++i) dst.d[i] += src.d[i];
}

template <typename T>
Var nystrom_fused_impl(Var q, Var k, Var v, const Tensor& averaging, T s) {
    struct State {
        WMat<T> a, q, k, v, qt, kt, left, core, right, x, p, y;
    };
    auto st = std::make_shared<State>();
    st->a = WMat<T>(averaging);
    st->q = WMat<T>(q.value());
    st->k = WMat<T>(k.value());
    st->v = WMat<T>(v.value());
    st->qt = st->a * st->q;
    st->kt = st->a * st->k;
    st->left = scaled_nt(st->q, st->kt, s);
    st->core = scaled_nt(st->qt, st->kt, s);
    st->right = scaled_nt(st->qt, st->k, s);
    softmax_rows_work(st->left);
    softmax_rows_work(st->core);
    softmax_rows_work(st->right);
    st->x = st->right * st->v;
    st->p = detail::pinv_work(st->core);
    st->y = st->p * st->x;
    Tensor out = (st->left * st->y).to_tensor(q.tape().dtype());

    return q.tape().record("nystrom_fused", std::move(out), {q, k, v}, [st, s](BackwardContext& ctx) {
        const State& m = *st;
        const WMat<T> g(ctx.out_grad());
        const WMat<T> g_y = m.left.t() * g;
        const WMat<T> g_x = m.p.t() * g_y;
        if (ctx.needs_grad(2)) accumulate(ctx.input_grad(2), m.right.t() * g_x);
        if (!ctx.needs_grad(0) && !ctx.needs_grad(1)) return;
        const WMat<T> z_left = softmax_pullback_work(m.left, g * m.y.t(), s);
        const WMat<T> z_core =
            softmax_pullback_work(m.core, detail::pinv_pullback_work(m.core, m.p, g_y * m.x.t()), s);
        const WMat<T> z_right = softmax_pullback_work(m.right, g_x * m.v.t(), s);
        const WMat<T> at = m.a.t();
        if (ctx.needs_grad(0)) {
            WMat<T> g_qt = z_core * m.kt;
            add_into(g_qt, z_right * m.k);
            WMat<T> g_q = z_left * m.kt;
            add_into(g_q, at * g_qt);
            accumulate(ctx.input_grad(0), g_q);
        }
        if (ctx.needs_grad(1)) {
            WMat<T> g_kt = z_left.t() * m.q;
            add_into(g_kt, z_core.t() * m.qt);
            WMat<T> g_k = z_right.t() * m.qt;
            add_into(g_k, at * g_kt);
            accumulate(ctx.input_grad(1), g_k);
        }
    });
}

}  // namespace

Var nystrom_fused(Var q, Var k, Var v, const Tensor& averaging, double scale) {
    need_rank2(q, "nystrom_fused");
    need_rank2(k, "nystrom_fused");
    need_rank2(v, "nystrom_fused");
    const std::size_t n = q.rows();
    if (k.rows() != n || v.rows() != n || k.cols() != q.cols() || averaging.rank() != 2 || averaging.cols() != n) {
        fail(ErrorKind::Dimension, "nystrom_fused: q " + shape_string(q.shape()) + ", k " + shape_string(k.shape()) +
                                       ", v " + shape_string(v.shape()) + ", landmarks " +
                                       shape_string(averaging.shape()));
    }
    if (q.tape().dtype() == DType::f32) return nystrom_fused_impl<double>(q, k, v, averaging, scale);
    return nystrom_fused_impl<long double>(q, k, v, averaging, scale);
}

Var aggregate_tokens(Var features, Var weights, double eps) {
    need_rank2(features, "aggregate_tokens");
    need_rank2(weights, "aggregate_tokens");
    const std::size_t n = features.rows(), c = features.cols(), l = weights.cols();
    if (weights.rows() != n) {
        fail(ErrorKind::Dimension, "aggregate_tokens: weights " + shape_string(weights.shape()) +
                                       " vs features " + shape_string(features.shape()));
    }
    const Tensor& f = features.value();
    const Tensor& w = weights.value();
    std::vector<double> denom(l, eps);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < l; ++j) denom[j] += w[i * l + j];
    Tensor out({l, c}, features.tape().dtype());
    gemm_tn_acc(w.data().data(), f.data().data(), out.data().data(), n, l, c);
    for (std::size_t j = 0; j < l; ++j)
        for (std::size_t k = 0; k < c; ++k) out[j * c + k] /= denom[j];
    return features.tape().record(
        "aggregate_tokens", std::move(out), {features, weights},
        [n, c, l, denom = std::move(denom)](BackwardContext& ctx) {
            const Tensor& g = ctx.out_grad();
            const Tensor& t = ctx.out_value();
            const Tensor& fv = ctx.input(0);
            const Tensor& wv = ctx.input(1);
            std::vector<double> gs(l * c);
            for (std::size_t j = 0; j < l; ++j)
                for (std::size_t k = 0; k < c; ++k) gs[j * c + k] = g[j * c + k] / denom[j];
            if (ctx.needs_grad(0)) gemm_acc(wv.data().data(), gs.data(), ctx.input_grad(0).data().data(), n, l, c);
            if (ctx.needs_grad(1)) {
                Tensor& gw = ctx.input_grad(1);
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < l; ++j) {
                        double s = 0.0;
                        for (std::size_t k = 0; k < c; ++k) s += gs[j * c + k] * (fv[i * c + k] - t[j * c + k]);
                        gw[i * l + j] += s;
                    }
            }
        });
}

Var im2col3x3(Var x, std::size_t height, std::size_t width) {
    need_rank2(x, "im2col3x3");
    const std::size_t n = x.rows(), c = x.cols();
    if (height * width != n) {
        fail(ErrorKind::Dimension, "im2col3x3: grid " + std::to_string(height) + "x" + std::to_string(width) +
                                       " does not cover " + std::to_string(n) + " points");
    }
    // source index per (point, tap), or n for padding
    std::vector<std::size_t> src(n * 9, n);
    for (std::size_t r = 0; r < height; ++r)
        for (std::size_t q = 0; q < width; ++q)
            for (int dr = -1; dr <= 1; ++dr)
                for (int dq = -1; dq <= 1; ++dq) {
                    const auto rr = static_cast<std::ptrdiff_t>(r) + dr;
                    const auto qq = static_cast<std::ptrdiff_t>(q) + dq;
                    const std::size_t tap = static_cast<std::size_t>((dr + 1) * 3 + (dq + 1));
                    if (rr < 0 || qq < 0 || rr >= static_cast<std::ptrdiff_t>(height) ||
                        qq >= static_cast<std::ptrdiff_t>(width))
                        continue;
                    src[(r * width + q) * 9 + tap] = static_cast<std::size_t>(rr) * width + static_cast<std::size_t>(qq);
                }
    Tensor out({n, 9 * c}, x.tape().dtype());
    for (std::size_t p = 0; p < n; ++p)
        for (std::size_t tap = 0; tap < 9; ++tap) {
            const std::size_t s = src[p * 9 + tap];
            if (s == n) continue;
            for (std::size_t k = 0; k < c; ++k) out[p * 9 * c + tap * c + k] = x.value()[s * c + k];
        }
    return x.tape().record("im2col3x3", std::move(out), {x}, [n, c, src = std::move(src)](BackwardContext& ctx) {
        const Tensor& g = ctx.out_grad();
        Tensor& gx = ctx.input_grad(0);
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t tap = 0; tap < 9; ++tap) {
                const std::size_t s = src[p * 9 + tap];
                if (s == n) continue;
                for (std::size_t k = 0; k < c; ++k) gx[s * c + k] += g[p * 9 * c + tap * c + k];
            }
    });
}

Var sum(Var x) {
    double s = 0.0;
    for (double v : x.value().data()) s += v;
    return x.tape().record("sum", Tensor::scalar(s), {x}, [](BackwardContext& ctx) {
        const double g = ctx.out_grad()[0];
        Tensor& gx = ctx.input_grad(0);
        for (double& v : gx.storage()) v += g;
    });
}

Var mean(Var x) {
    const auto count = static_cast<double>(x.value().numel());
    if (count == 0) fail(ErrorKind::Dimension, "mean of empty tensor");
    return scale(sum(x), 1.0 / count);
}

Var relative_l2(Var pred, Var target) {
    need_same(pred, target, "relative_l2");
    const Tensor& p = pred.value();
    const Tensor& t = target.value();
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < p.numel(); ++i) {
        num += (p[i] - t[i]) * (p[i] - t[i]);
        den += t[i] * t[i];
    }
    if (den == 0.0) fail(ErrorKind::Domain, "relative_l2: target has zero norm");
    const double dn = std::sqrt(num), dd = std::sqrt(den);
    const double r = dn / dd;
    return pred.tape().record("relative_l2", Tensor::scalar(r), {pred, target}, [dn, dd, r](BackwardContext& ctx) {
        const double g = ctx.out_grad()[0];
        const Tensor& pv = ctx.input(0);
        const Tensor& tv = ctx.input(1);
        const double k = dn > 0.0 ? g / (dn * dd) : 0.0;
        if (ctx.needs_grad(0)) {
            Tensor& gp = ctx.input_grad(0);
            for (std::size_t i = 0; i < gp.numel(); ++i) gp[i] += k * (pv[i] - tv[i]);
        }
        if (ctx.needs_grad(1)) {
            Tensor& gt = ctx.input_grad(1);
            const double kt = g * r / (dd * dd);
            for (std::size_t i = 0; i < gt.numel(); ++i) gt[i] += -k * (pv[i] - tv[i]) - kt * tv[i];
        }
    });
}

namespace {

struct Stencil {
    std::array<std::ptrdiff_t, 3> offset{};
    std::array<double, 3> coef{};
    int taps = 0;
};

Stencil axis_stencil(std::size_t i, std::size_t len, double h) {
    Stencil s;
    if (len < 2) return s;
    if (len == 2) {
        s.taps = 2;
        s.offset = {-static_cast<std::ptrdiff_t>(i), 1 - static_cast<std::ptrdiff_t>(i), 0};
        s.coef = {-1.0 / h, 1.0 / h, 0.0};
        return s;
    }
    s.taps = 3;
    if (i == 0) {
        s.offset = {0, 1, 2};
        s.coef = {-1.5 / h, 2.0 / h, -0.5 / h};
    } else if (i == len - 1) {
        s.offset = {0, -1, -2};
        s.coef = {1.5 / h, -2.0 / h, 0.5 / h};
    } else {
        s.taps = 2;
        s.offset = {-1, 1, 0};
        s.coef = {-0.5 / h, 0.5 / h, 0.0};
    }
    return s;
}

// Applies the gradient stencil (transpose=false) or its adjoint (transpose=true).
void apply_grid_gradient(const double* in, double* out, std::size_t height, std::size_t width, std::size_t f,
                         double hr, double hc, bool adjoint) {
    const std::size_t n = height * width;
    for (std::size_t r = 0; r < height; ++r)
        for (std::size_t q = 0; q < width; ++q) {
            const std::size_t p = r * width + q;
            const Stencil sr = axis_stencil(r, height, hr);
            for (int t = 0; t < sr.taps; ++t) {
                const std::size_t src = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(r) + sr.offset[t]) * width + q;
                for (std::size_t k = 0; k < f; ++k) {
                    if (adjoint) out[src * f + k] += sr.coef[t] * in[p * f + k];
                    else out[p * f + k] += sr.coef[t] * in[src * f + k];
                }
            }
            const Stencil sc = axis_stencil(q, width, hc);
            for (int t = 0; t < sc.taps; ++t) {
                const std::size_t src = r * width + static_cast<std::size_t>(static_cast<std::ptrdiff_t>(q) + sc.offset[t]);
                for (std::size_t k = 0; k < f; ++k) {
                    if (adjoint) out[src * f + k] += sc.coef[t] * in[(n + p) * f + k];
                    else out[(n + p) * f + k] += sc.coef[t] * in[src * f + k];
                }
            }
        }
}

}  // namespace

Tensor grid_gradient_plain(const Tensor& x, std::size_t height, std::size_t width, double row_spacing,
                           double col_spacing) {
    require_rank(x, 2, "grid_gradient");
    if (height * width != x.rows()) {
        fail(ErrorKind::UnsupportedGeometry, "grid_gradient: field with " + std::to_string(x.rows()) +
                                                 " points is not a " + std::to_string(height) + "x" +
                                                 std::to_string(width) + " grid");
    }
    Tensor out({2 * x.rows(), x.cols()}, x.dtype());
    apply_grid_gradient(x.data().data(), out.data().data(), height, width, x.cols(), row_spacing, col_spacing, false);
    out.round_to_dtype();
    return out;
}

Var grid_gradient(Var x, std::size_t height, std::size_t width, double row_spacing, double col_spacing) {
    Tensor out = grid_gradient_plain(x.value(), height, width, row_spacing, col_spacing);
    const std::size_t f = x.cols();
    return x.tape().record("grid_gradient", std::move(out), {x},
                           [height, width, f, row_spacing, col_spacing](BackwardContext& ctx) {
                               apply_grid_gradient(ctx.out_grad().data().data(), ctx.input_grad(0).data().data(),
                                                   height, width, f, row_spacing, col_spacing, true);
                           });
}

}  // namespace gfocal
