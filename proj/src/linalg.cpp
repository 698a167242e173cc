// Copyright (c) 2026 The GFocal Authors
// SPDX-License-Identifier: Apache-2.0

#include "gfocal/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "extended.hpp"

namespace gfocal {

namespace detail {

template <typename T>
WMat<T>::WMat(const Tensor& t) : WMat(t.rows(), t.cols()) {
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = t[i];
}

template <typename T>
WMat<T> WMat<T>::t() const {
    WMat out(c, r);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out(j, i) = (*this)(i, j);
    return out;
}

template <typename T>
Tensor WMat<T>::to_tensor(DType dtype) const {
    Tensor out({r, c}, dtype);
    for (std::size_t i = 0; i < d.size(); ++i) out[i] = static_cast<double>(d[i]);
    out.round_to_dtype();
    return out;
}

template <typename T>
WMat<T> operator*(const WMat<T>& a, const WMat<T>& b) {
    using Work = T;
    if (a.c != b.r) fail(ErrorKind::Dimension, "extended matmul: inner dimensions differ");
    WMat<T> out(a.r, b.c);
    for (std::size_t i = 0; i < a.r; ++i)
        for (std::size_t k = 0; k < a.c; ++k) {
            const Work x = a(i, k);
            const Work* brow = &b.d[k * b.c];
            Work* orow = &out.d[i * out.c];
            for (std::size_t j = 0; j < b.c; ++j) orow[j] += x * brow[j];
        }
    return out;
}

template <typename T>
WMat<T> complement(const WMat<T>& m) {
    WMat<T> out(m.r, m.c);
    for (std::size_t i = 0; i < m.r; ++i)
        for (std::size_t j = 0; j < m.c; ++j) out(i, j) = (i == j ? T(1) : T(0)) - m(i, j);
    return out;
}

template <typename T>
WorkSvd<T> jacobi_work(const WMat<T>& a, int max_sweeps) {
    using Work = T;
    WorkSvd<T> out;
    const std::size_t p = a.r, q = a.c;
    out.p = p;
    out.q = q;
    // Columns of A rotate toward mutual orthogonality.
    std::vector<Work> w(p * q), v(q * q, Work(0));
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j < q; ++j) w[j * p + i] = a(i, j);
    for (std::size_t j = 0; j < q; ++j) v[j * q + j] = Work(1);

    const Work eps = std::numeric_limits<Work>::epsilon();
    // Relative test scaled by the column length; columns below eps * ||A||_F are
    // numerically null and never again rotated, or a rank-deficient A cycles forever.
    const Work tol = eps * std::sqrt(static_cast<Work>(p));
    Work frob = Work(0);
    for (Work x : w) frob += x * x;
    const Work negligible = eps * eps * frob;
    int sweep = 0;
    bool converged = q < 2;
    while (!converged && sweep < max_sweeps) {
        ++sweep;
        converged = true;
        for (std::size_t i = 0; i + 1 < q; ++i) {
            Work* ci = &w[i * p];
            for (std::size_t j = i + 1; j < q; ++j) {
                Work* cj = &w[j * p];
                Work alpha = Work(0), beta = Work(0), gamma = Work(0);
                for (std::size_t k = 0; k < p; ++k) {
                    alpha += ci[k] * ci[k];
                    beta += cj[k] * cj[k];
                    gamma += ci[k] * cj[k];
                }
                if (alpha <= negligible || beta <= negligible) continue;
                if (gamma == Work(0) || std::abs(gamma) <= tol * std::sqrt(alpha * beta)) continue;
                converged = false;
                const Work zeta = (beta - alpha) / (Work(2) * gamma);
                const Work t = std::copysign(Work(1), zeta) / (std::abs(zeta) + std::sqrt(Work(1) + zeta * zeta));
                const Work c = Work(1) / std::sqrt(Work(1) + t * t);
                const Work s = c * t;
                for (std::size_t k = 0; k < p; ++k) {
                    const Work x = ci[k], y = cj[k];
                    ci[k] = c * x - s * y;
                    cj[k] = s * x + c * y;
                }
                Work* vi = &v[i * q];
                Work* vj = &v[j * q];
                for (std::size_t k = 0; k < q; ++k) {
                    const Work x = vi[k], y = vj[k];
                    vi[k] = c * x - s * y;
                    vj[k] = s * x + c * y;
                }
            }
        }
    }
    std::vector<Work> sv(q);
    for (std::size_t j = 0; j < q; ++j) {
        Work n = Work(0);
        for (std::size_t k = 0; k < p; ++k) n += w[j * p + k] * w[j * p + k];
        sv[j] = std::sqrt(n);
    }
    if (!converged) {
        Work smax = Work(0), smin = std::numeric_limits<Work>::infinity();
        for (Work x : sv) {
            smax = std::max(smax, x);
            smin = std::min(smin, x);
        }
        std::ostringstream os;
        os << "Jacobi SVD did not converge after " << max_sweeps << " sweeps on a " << p << "x" << q
           << " matrix (estimated condition "
           << static_cast<double>(smin > 0 ? smax / smin : std::numeric_limits<Work>::infinity()) << ")";
        fail(ErrorKind::Numeric, os.str());
    }

    std::vector<std::size_t> order(q);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return sv[x] > sv[y]; });
    out.sweeps = sweep;
    out.u.assign(p * q, Work(0));
    out.v.assign(q * q, Work(0));
    out.s.resize(q);
    for (std::size_t jj = 0; jj < q; ++jj) {
        const std::size_t j = order[jj];
        out.s[jj] = sv[j];
        for (std::size_t k = 0; k < p; ++k) out.u[jj * p + k] = sv[j] > Work(0) ? w[j * p + k] / sv[j] : Work(0);
        for (std::size_t k = 0; k < q; ++k) out.v[jj * q + k] = v[j * q + k];
    }
    return out;
}

template <typename T>
WMat<T> pinv_work(const WMat<T>& a) {
    using Work = T;
    const bool wide = a.r < a.c;
    const WorkSvd<T> w = jacobi_work(wide ? a.t() : a, 60);
    // Tall B = U S V^T gives B+ = V S^-1 U^T (q x p); for wide A = B^T, A+ = (B+)^T.
    const Work cutoff = w.s.empty() ? Work(0) : static_cast<Work>(kPinvRelativeCutoff) * w.s.front();
    WMat<T> bp(w.q, w.p);
    for (std::size_t k = 0; k < w.q; ++k) {
        if (!(w.s[k] > cutoff)) continue;
        const Work inv = Work(1) / w.s[k];
        for (std::size_t i = 0; i < w.q; ++i) {
            const Work vik = w.v[k * w.q + i] * inv;
            for (std::size_t j = 0; j < w.p; ++j) bp(i, j) += vik * w.u[k * w.p + j];
        }
    }
    return wide ? bp.t() : bp;
}

template <typename T>
WMat<T> pinv_pullback_work(const WMat<T>& a, const WMat<T>& p, const WMat<T>& g) {
    const WMat<T> pt = p.t(), gt = g.t();
    WMat<T> out = pt * g * pt;
    for (T& x : out.d) x = -x;
    const WMat<T> t2 = complement(a * p) * gt * (p * pt);
    const WMat<T> t3 = (pt * p) * gt * complement(p * a);
    for (std::size_t i = 0; i < out.d.size(); ++i) out.d[i] += t2.d[i] + t3.d[i];
    return out;
}

#define GFOCAL_INSTANTIATE(T)                                                          \
    template struct WMat<T>;                                                           \
    template WMat<T> operator*(const WMat<T>&, const WMat<T>&);                        \
    template WMat<T> complement(const WMat<T>&);                                       \
    template WorkSvd<T> jacobi_work(const WMat<T>&, int);                              \
    template WMat<T> pinv_work(const WMat<T>&);                                        \
    template WMat<T> pinv_pullback_work(const WMat<T>&, const WMat<T>&, const WMat<T>&);
GFOCAL_INSTANTIATE(double)
GFOCAL_INSTANTIATE(long double)
#undef GFOCAL_INSTANTIATE

}  // namespace detail

using WMat = detail::LMat;

Svd jacobi_svd(const Tensor& a_in, int max_sweeps) {
    require_rank(a_in, 2, "svd");
    const bool wide = a_in.rows() < a_in.cols();
    const detail::WorkSvd<long double> w = detail::jacobi_work(WMat(wide ? a_in.transposed() : a_in), max_sweeps);
    Svd out;
    out.sweeps = w.sweeps;
    out.u = Tensor({w.p, w.q});
    out.v = Tensor({w.q, w.q});
    out.s.resize(w.q);
    for (std::size_t j = 0; j < w.q; ++j) {
        out.s[j] = static_cast<double>(w.s[j]);
        for (std::size_t k = 0; k < w.p; ++k) out.u.at(k, j) = static_cast<double>(w.u[j * w.p + k]);
        for (std::size_t k = 0; k < w.q; ++k) out.v.at(k, j) = static_cast<double>(w.v[j * w.q + k]);
    }
    if (wide) std::swap(out.u, out.v);
    return out;
}

Tensor pinv_plain(const Tensor& a) {
    require_rank(a, 2, "pinv");
    return detail::pinv_work(WMat(a)).to_tensor(a.dtype());
}

Tensor pinv_apply_plain(const Tensor& a, const Tensor& x) {
    require_rank(a, 2, "pinv_apply");
    require_rank(x, 2, "pinv_apply");
    if (x.rows() != a.rows()) fail(ErrorKind::Dimension, "pinv_apply: row counts of a and x differ");
    return (detail::pinv_work(WMat(a)) * WMat(x)).to_tensor(promote(a.dtype(), x.dtype()));
}

Tensor pinv_backward(const Tensor& a, const Tensor& g) {
    const WMat aw(a);
    return detail::pinv_pullback_work(aw, detail::pinv_work(aw), WMat(g)).to_tensor();
}

void pinv_apply_backward(const Tensor& a, const Tensor& x, const Tensor& g, Tensor* ga, Tensor* gx) {
    const WMat aw(a);
    const WMat p = detail::pinv_work(aw);
    const WMat gw(g);
    if (gx != nullptr) *gx = (p.t() * gw).to_tensor();
    if (ga != nullptr) *ga = detail::pinv_pullback_work(aw, p, gw * WMat(x).t()).to_tensor();
}

}  // namespace gfocal
