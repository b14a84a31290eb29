// Copyright 2026 The bitro Authors
// SPDX-License-Identifier: Apache-2.0

#include "bitro/numerics/ops.hpp"

#include <algorithm>
#include <cmath>

#include "bitro/error.hpp"
#include "bitro/rng.hpp"
#include "bitro/simd/kernels.hpp"

namespace bitro::ad {
namespace {

void require_matrix(const Var& a, const char* op) {
    if (a.value().rank() != 2)
        throw DimensionError(std::string(op) + ": expected a matrix, got shape " + shape_str(a.shape()));
}

void require_same(const Var& a, const Var& b, const char* op) {
    if (a.shape() != b.shape())
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
}

void require_row_of(const Var& a, const Var& row, const char* op) {
    if (row.value().size() != a.cols())
        throw DimensionError(std::string(op) + ": row of " + std::to_string(row.value().size()) +
                             " values does not match " + std::to_string(a.cols()) + " columns");
}

}  // namespace

double softplus_value(double x) {
    if (x > 30.0) return x;
    if (x < -30.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

Var matmul(Var a, Var b) {
    require_matrix(a, "matmul");
    require_matrix(b, "matmul");
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    if (b.rows() != k)
        throw DimensionError("matmul: inner extents differ, " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()));
    const auto& kr = simd::active();
    Tensor out(Shape{m, n});
    simd::gemm_nn(kr, m, k, n, a.value().data().data(), b.value().data().data(), out.data().data());
    Tape& t = a.tape();
    if (!t.tracks({a, b})) return t.push_constant(std::move(out));
    return t.push(std::move(out), [ia = a.id(), ib = b.id(), m, k, n](Tape& t, std::size_t self) {
        const auto& kr = simd::active();
        const double* g = t.grad(self).data().data();
        if (t.requires_grad(ia))  // dA = G B^T
            simd::gemm_nt(kr, m, n, k, g, t.value(ib).data().data(), t.grad_accum(ia).data().data());
        if (t.requires_grad(ib))  // dB = A^T G
            simd::gemm_tn(kr, m, k, n, t.value(ia).data().data(), g, t.grad_accum(ib).data().data());
    });
}

Var matmul_nt(Var a, Var b) {
    require_matrix(a, "matmul_nt");
    require_matrix(b, "matmul_nt");
    const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
    if (b.cols() != k)
        throw DimensionError("matmul_nt: inner extents differ, " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()) + "^T");
    const auto& kr = simd::active();
    Tensor out(Shape{m, n});
    simd::gemm_nt(kr, m, k, n, a.value().data().data(), b.value().data().data(), out.data().data());
    Tape& t = a.tape();
    if (!t.tracks({a, b})) return t.push_constant(std::move(out));
    return t.push(std::move(out), [ia = a.id(), ib = b.id(), m, k, n](Tape& t, std::size_t self) {
        const auto& kr = simd::active();
        const double* g = t.grad(self).data().data();
        if (t.requires_grad(ia))  // dA = G B
            simd::gemm_nn(kr, m, n, k, g, t.value(ib).data().data(), t.grad_accum(ia).data().data());
        if (t.requires_grad(ib))  // dB = G^T A
            simd::gemm_tn(kr, m, n, k, g, t.value(ia).data().data(), t.grad_accum(ib).data().data());
    });
}

Var transpose(Var a) {
    require_matrix(a, "transpose");
    Tape& t = a.tape();
    Tensor out = a.value().transposed();
    if (!t.tracks({a})) return t.push_constant(std::move(out));
    return t.push(std::move(out), [ia = a.id()](Tape& t, std::size_t self) {
        const Tensor gt = t.grad(self).transposed();
        auto& ga = t.grad_accum(ia);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gt[i];
    });
}

Var add(Var a, Var b) {
    require_same(a, b, "add");
    Tape& t = a.tape();
    Tensor out = a.value();
    simd::active().axpy(1.0, b.value().data().data(), out.data().data(), out.size());
    if (!t.tracks({a, b})) return t.push_constant(std::move(out));
    return t.push(std::move(out), [ia = a.id(), ib = b.id()](Tape& t, std::size_t self) {
        const auto& kr = simd::active();
        const Tensor& g = t.grad(self);
        if (t.requires_grad(ia)) kr.axpy(1.0, g.data().data(), t.grad_accum(ia).data().data(), g.size());
        if (t.requires_grad(ib)) kr.axpy(1.0, g.data().data(), t.grad_accum(ib).data().data(), g.size());
    });
}

Var sub(Var a, Var b) {
    require_same(a, b, "sub");
    Tape& t = a.tape();
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
    if (!t.tracks({a, b})) return t.push_constant(std::move(out));
    return t.push(std::move(out), [ia = a.id(), ib = b.id()](Tape& t, std::size_t self) {
        const auto& kr = simd::active();
        const Tensor& g = t.grad(self);
        if (t.requires_grad(ia)) kr.axpy(1.0, g.data().data(), t.grad_accum(ia).data().data(), g.size());
        if (t.requires_grad(ib)) kr.axpy(-1.0, g.data().data(), t.grad_accum(ib).data().data(), g.size());
    });
}

Var mul(Var a, Var b) {
    require_same(a, b, "mul");
    Tape& t = a.tape();
    Tensor out(a.shape());
    simd::active().mul(a.value().data().data(), b.value().data().data(), out.data().data(), out.size());
    if (!t.tracks({a, b})) return t.push_constant(std::move(out));
    return t.push(std::move(out), [ia = a.id(), ib = b.id()](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        if (t.requires_grad(ia)) {
            auto& ga = t.grad_accum(ia);
            const Tensor& bv = t.value(ib);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
        }
        if (t.requires_grad(ib)) {
            auto& gb = t.grad_accum(ib);
            const Tensor& av = t.value(ia);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
        }
    });
}

Var scale(Var a, double s) {
    Tape& t = a.tape();
    Tensor out = a.value();
    for (double& v : out.data()) v *= s;
    if (!t.tracks({a})) return t.push_constant(std::move(out));
    return t.push(std::move(out), [ia = a.id(), s](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        simd::active().axpy(s, g.data().data(), t.grad_accum(ia).data().data(), g.size());
    });
}

Var add_row(Var a, Var row) {
    require_matrix(a, "add_row");
    require_row_of(a, row, "add_row");
    Tape& t = a.tape();
    Tensor out = a.value();
    const std::size_t m = a.rows(), n = a.cols();
    const double* r = row.value().data().data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] += r[j];
    if (!t.tracks({a, row})) return t.push_constant(std::move(out));
    return t.push(std::move(out), [ia = a.id(), ir = row.id(), m, n](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        if (t.requires_grad(ia)) simd::active().axpy(1.0, g.data().data(), t.grad_accum(ia).data().data(), g.size());
        if (t.requires_grad(ir)) {
            auto& gr = t.grad_accum(ir);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) gr[j] += g[i * n + j];
        }
    });
}

Var sub_row(Var a, Var row) {
    require_matrix(a, "sub_row");
    require_row_of(a, row, "sub_row");
    Tape& t = a.tape();
    Tensor out = a.value();
    const std::size_t m = a.rows(), n = a.cols();
    const double* r = row.value().data().data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] -= r[j];
    if (!t.tracks({a, row})) return t.push_constant(std::move(out));
    return t.push(std::move(out), [ia = a.id(), ir = row.id(), m, n](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        if (t.requires_grad(ia)) simd::active().axpy(1.0, g.data().data(), t.grad_accum(ia).data().data(), g.size());
        if (t.requires_grad(ir)) {
            auto& gr = t.grad_accum(ir);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) gr[j] -= g[i * n + j];
        }
    });
}

Var mul_row(Var a, Var row) {
    require_matrix(a, "mul_row");
    require_row_of(a, row, "mul_row");
    Tape& t = a.tape();
    Tensor out = a.value();
    const std::size_t m = a.rows(), n = a.cols();
    const double* r = row.value().data().data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] *= r[j];
    if (!t.tracks({a, row})) return t.push_constant(std::move(out));
    return t.push(std::move(out), [ia = a.id(), ir = row.id(), m, n](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        const Tensor& av = t.value(ia);
        const Tensor& rv = t.value(ir);
        if (t.requires_grad(ia)) {
            auto& ga = t.grad_accum(ia);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[i * n + j] * rv[j];
        }
        if (t.requires_grad(ir)) {
            auto& gr = t.grad_accum(ir);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) gr[j] += g[i * n + j] * av[i * n + j];
        }
    });
}

Var sum(Var a) {
    Tape& t = a.tape();
    Tensor out = Tensor::scalar(simd::active().sum(a.value().data().data(), a.value().size()));
    if (!t.tracks({a})) return t.push_constant(std::move(out));
    return t.push(std::move(out), [ia = a.id()](Tape& t, std::size_t self) {
        const double g = t.grad(self)[0];
        for (double& v : t.grad_accum(ia).data()) v += g;
    });
}

Var mean(Var a) {
    const double n = static_cast<double>(a.value().size());
    if (n == 0) throw ContractError("mean of an empty tensor");
    return scale(sum(a), 1.0 / n);
}

Var sum_rows(Var a) {
    require_matrix(a, "sum_rows");
    Tape& t = a.tape();
    const std::size_t m = a.rows(), n = a.cols();
    Tensor out(Shape{1, n});
    for (std::size_t i = 0; i < m; ++i)
        simd::active().axpy(1.0, a.value().data().data() + i * n, out.data().data(), n);
    if (!t.tracks({a})) return t.push_constant(std::move(out));
    return t.push(std::move(out), [ia = a.id(), m, n](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        auto& ga = t.grad_accum(ia);
        for (std::size_t i = 0; i < m; ++i)
            simd::active().axpy(1.0, g.data().data(), ga.data().data() + i * n, n);
    });
}

Var mean_rows(Var a) {
    if (a.rows() == 0) throw ContractError("mean_rows of an empty matrix");
    return scale(sum_rows(a), 1.0 / static_cast<double>(a.rows()));
}

Var square(Var a) { return mul(a, a); }

Var relu(Var a) {
    Tape& t = a.tape();
    Tensor out = a.value();
    for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
    if (!t.tracks({a})) return t.push_constant(std::move(out));
    return t.push(std::move(out), [ia = a.id()](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        const Tensor& x = t.value(ia);
        auto& ga = t.grad_accum(ia);
        for (std::size_t i = 0; i < g.size(); ++i)
            if (x[i] > 0.0) ga[i] += g[i];
    });
}

Var leaky_relu(Var a, double slope) {
    Tape& t = a.tape();
    Tensor out = a.value();
    for (double& v : out.data()) v = v > 0.0 ? v : slope * v;
    if (!t.tracks({a})) return t.push_constant(std::move(out));
    return t.push(std::move(out), [ia = a.id(), slope](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        const Tensor& x = t.value(ia);
        auto& ga = t.grad_accum(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += x[i] > 0.0 ? g[i] : slope * g[i];
    });
}

Var softplus(Var a) {
    Tape& t = a.tape();
    Tensor out = a.value();
    for (double& v : out.data()) v = softplus_value(v);
    if (!t.tracks({a})) return t.push_constant(std::move(out));
    return t.push(std::move(out), [ia = a.id()](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        const Tensor& x = t.value(ia);
        auto& ga = t.grad_accum(ia);
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double sig = x[i] >= 0.0 ? 1.0 / (1.0 + std::exp(-x[i]))
                                           : std::exp(x[i]) / (1.0 + std::exp(x[i]));
            ga[i] += g[i] * sig;
        }
    });
}

Var softmax_rows(Var a) {
    require_matrix(a, "softmax_rows");
    Tape& t = a.tape();
    const std::size_t m = a.rows(), n = a.cols();
    Tensor out = a.value();
    for (std::size_t i = 0; i < m; ++i) {
        double* r = out.data().data() + i * n;
        double mx = r[0];
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, r[j]);
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            r[j] = std::exp(r[j] - mx);
            s += r[j];
        }
        const double inv = 1.0 / s;
        for (std::size_t j = 0; j < n; ++j) r[j] *= inv;
    }
    if (!t.tracks({a})) return t.push_constant(std::move(out));
    return t.push(std::move(out), [ia = a.id(), m, n](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        const Tensor& y = t.value(self);
        auto& ga = t.grad_accum(ia);
        const auto& kr = simd::active();
        for (std::size_t i = 0; i < m; ++i) {
            const double* gi = g.data().data() + i * n;
            const double* yi = y.data().data() + i * n;
            const double d = kr.dot(gi, yi, n);
            double* out = ga.data().data() + i * n;
            for (std::size_t j = 0; j < n; ++j) out[j] += yi[j] * (gi[j] - d);
        }
    });
}

Var layer_norm_rows(Var a, double eps) {
    require_matrix(a, "layer_norm_rows");
    if (a.cols() < 1) throw DimensionError("layer_norm_rows: rows must have at least one value");
    Tape& t = a.tape();
    const std::size_t m = a.rows(), n = a.cols();
    Tensor out = a.value();
    std::vector<double> inv_sd(m);
    std::vector<char> floored(m);
    for (std::size_t i = 0; i < m; ++i) {
        double* r = out.data().data() + i * n;
        double mu = 0.0;
        for (std::size_t j = 0; j < n; ++j) mu += r[j];
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) var += (r[j] - mu) * (r[j] - mu);
        var /= static_cast<double>(n);
        floored[i] = var <= eps;
        inv_sd[i] = 1.0 / std::sqrt(std::max(var, eps));
        for (std::size_t j = 0; j < n; ++j) r[j] = (r[j] - mu) * inv_sd[i];
    }
    if (!t.tracks({a})) return t.push_constant(std::move(out));
    return t.push(std::move(out), [ia = a.id(), m, n, inv_sd = std::move(inv_sd),
                                   floored = std::move(floored)](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        const Tensor& y = t.value(self);
        auto& ga = t.grad_accum(ia);
        const double dn = static_cast<double>(n);
        for (std::size_t i = 0; i < m; ++i) {
            const double* gi = g.data().data() + i * n;
            const double* yi = y.data().data() + i * n;
            double gmean = 0.0, gy = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                gmean += gi[j];
                gy += gi[j] * yi[j];
            }
            gmean /= dn;
            gy /= dn;
            double* out = ga.data().data() + i * n;
            if (floored[i]) {
                for (std::size_t j = 0; j < n; ++j) out[j] += inv_sd[i] * (gi[j] - gmean);
            } else {
                for (std::size_t j = 0; j < n; ++j) out[j] += inv_sd[i] * (gi[j] - gmean - yi[j] * gy);
            }
        }
    });
}

Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw ContractError("concat_cols of nothing");
    const std::size_t m = parts[0].rows();
    std::vector<std::size_t> widths;
    std::size_t total = 0;
    bool any = false;
    Tape& t = parts[0].tape();
    for (const Var& p : parts) {
        require_matrix(p, "concat_cols");
        if (p.rows() != m) throw DimensionError("concat_cols: row counts differ");
        widths.push_back(p.cols());
        total += p.cols();
        any = any || t.tracks({p});
    }
    Tensor out(Shape{m, total});
    std::size_t off = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const Tensor& v = parts[k].value();
        for (std::size_t i = 0; i < m; ++i)
            std::copy_n(v.data().data() + i * widths[k], widths[k], out.data().data() + i * total + off);
        off += widths[k];
    }
    if (!any) return t.push_constant(std::move(out));
    std::vector<std::size_t> ids;
    for (const Var& p : parts) ids.push_back(p.id());
    return t.push(std::move(out), [ids = std::move(ids), widths = std::move(widths), m, total](Tape& t,
                                                                                              std::size_t self) {
        const Tensor& g = t.grad(self);
        std::size_t off = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
            if (t.requires_grad(ids[k])) {
                auto& gk = t.grad_accum(ids[k]);
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < widths[k]; ++j) gk[i * widths[k] + j] += g[i * total + off + j];
            }
            off += widths[k];
        }
    });
}

Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw ContractError("concat_rows of nothing");
    const std::size_t n = parts[0].cols();
    std::size_t total = 0;
    bool any = false;
    Tape& t = parts[0].tape();
    std::vector<std::size_t> heights;
    for (const Var& p : parts) {
        require_matrix(p, "concat_rows");
        if (p.cols() != n) throw DimensionError("concat_rows: column counts differ");
        heights.push_back(p.rows());
        total += p.rows();
        any = any || t.tracks({p});
    }
    std::vector<double> data;
    data.reserve(total * n);
    for (const Var& p : parts) data.insert(data.end(), p.value().data().begin(), p.value().data().end());
    Tensor out(Shape{total, n}, std::move(data));
    if (!any) return t.push_constant(std::move(out));
    std::vector<std::size_t> ids;
    for (const Var& p : parts) ids.push_back(p.id());
    return t.push(std::move(out), [ids = std::move(ids), heights = std::move(heights), n](Tape& t,
                                                                                         std::size_t self) {
        const Tensor& g = t.grad(self);
        std::size_t off = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
            const std::size_t len = heights[k] * n;
            if (t.requires_grad(ids[k]))
                simd::active().axpy(1.0, g.data().data() + off, t.grad_accum(ids[k]).data().data(), len);
            off += len;
        }
    });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
    require_matrix(a, "slice_cols");
    if (begin > end || end > a.cols())
        throw DimensionError("slice_cols: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                             ") outside " + std::to_string(a.cols()) + " columns");
    Tape& t = a.tape();
    const std::size_t m = a.rows(), n = a.cols(), w = end - begin;
    Tensor out(Shape{m, w});
    for (std::size_t i = 0; i < m; ++i)
        std::copy_n(a.value().data().data() + i * n + begin, w, out.data().data() + i * w);
    if (!t.tracks({a})) return t.push_constant(std::move(out));
    return t.push(std::move(out), [ia = a.id(), m, n, w, begin](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        auto& ga = t.grad_accum(ia);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < w; ++j) ga[i * n + begin + j] += g[i * w + j];
    });
}

Var slice_rows(Var a, std::size_t begin, std::size_t end) {
    require_matrix(a, "slice_rows");
    if (begin > end || end > a.rows()) throw DimensionError("slice_rows: range outside matrix");
    Tape& t = a.tape();
    const std::size_t n = a.cols();
    std::vector<double> data(a.value().data().begin() + static_cast<std::ptrdiff_t>(begin * n),
                             a.value().data().begin() + static_cast<std::ptrdiff_t>(end * n));
    Tensor out(Shape{end - begin, n}, std::move(data));
    if (!t.tracks({a})) return t.push_constant(std::move(out));
    return t.push(std::move(out), [ia = a.id(), n, begin](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        simd::active().axpy(1.0, g.data().data(), t.grad_accum(ia).data().data() + begin * n, g.size());
    });
}

Var gather_rows(Var a, std::span<const std::size_t> rows) {
    require_matrix(a, "gather_rows");
    Tape& t = a.tape();
    const std::size_t n = a.cols(), m = a.rows();
    Tensor out(Shape{rows.size(), n});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= m) throw DimensionError("gather_rows: index " + std::to_string(rows[i]) + " out of range");
        std::copy_n(a.value().data().data() + rows[i] * n, n, out.data().data() + i * n);
    }
    if (!t.tracks({a})) return t.push_constant(std::move(out));
    return t.push(std::move(out), [ia = a.id(), idx = std::vector<std::size_t>(rows.begin(), rows.end()), n](
                                      Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        auto& ga = t.grad_accum(ia);
        for (std::size_t i = 0; i < idx.size(); ++i)
            simd::active().axpy(1.0, g.data().data() + i * n, ga.data().data() + idx[i] * n, n);
    });
}

Var reshape(Var a, Shape shape) {
    Tape& t = a.tape();
    Tensor out = a.value().reshaped(std::move(shape));
    if (!t.tracks({a})) return t.push_constant(std::move(out));
    return t.push(std::move(out), [ia = a.id()](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        simd::active().axpy(1.0, g.data().data(), t.grad_accum(ia).data().data(), g.size());
    });
}

Var dropout(Var a, double p, Rng& rng) {
    if (p <= 0.0) return a;
    if (p >= 1.0) throw ContractError("dropout probability must be < 1");
    Tensor mask(a.shape());
    const double keep = 1.0 / (1.0 - p);
    for (double& v : mask.data()) v = rng.uniform() < p ? 0.0 : keep;
    return mul(a, a.tape().constant(std::move(mask)));
}

}  // namespace bitro::ad
