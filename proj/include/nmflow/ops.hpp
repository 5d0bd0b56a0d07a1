// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstring>

#include <Eigen/Core>
#include <cmath>
#include <string>

#include "nmflow/tensor.hpp"

namespace nmflow {

namespace detail {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Map = Eigen::Map<EMat>;
using CMap = Eigen::Map<const EMat>;

inline CMap cmap(const std::vector<double>& v, std::size_t r, std::size_t c) {
    return CMap(v.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}
inline Map map(std::vector<double>& v, std::size_t r, std::size_t c) {
    return Map(v.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

// Product kernels pick FMA/scalar tail splits from the destination address,
// so writing straight through a Map over arbitrarily placed vector storage
// makes low-order result bits depend on where the allocator put the buffer.
// Evaluating into an Eigen-owned (consistently aligned) temporary first and
// then copying/adding element-wise keeps every run bit-identical.
template <class Expr>
inline void store_product(double* dst, const Expr& e) {
    EMat tmp = e;
    std::memcpy(dst, tmp.data(), sizeof(double) * static_cast<std::size_t>(tmp.size()));
}
template <class Expr>
inline void add_product(double* dst, const Expr& e) {
    EMat tmp = e;
    const double* s = tmp.data();
    const std::size_t n = static_cast<std::size_t>(tmp.size());
    for (std::size_t i = 0; i < n; ++i) dst[i] += s[i];
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic
// ---------------------------------------------------------------------------

// add(a, b): same shape, or b rank-1 matching a's last dimension (row
// broadcast, used for biases).
inline Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape() == b.shape()) {
        std::vector<double> out(a.data());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.data()[i];
        Tensor pa = a, pb = b;
        return detail::make_op(a.shape(), std::move(out), {a, b}, [pa, pb](TensorImpl& self) mutable {
            if (pa.requires_grad()) {
                auto& ga = pa.grad();
                for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
            }
            if (pb.requires_grad()) {
                auto& gb = pb.grad();
                for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += self.grad[i];
            }
        });
    }
    if (b.rank() == 1 && a.rank() >= 1 && a.shape().back() == b.dim(0)) {
        const std::size_t cols = b.dim(0);
        const std::size_t rows = a.numel() / cols;
        std::vector<double> out(a.data());
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += b.data()[c];
        Tensor pa = a, pb = b;
        return detail::make_op(a.shape(), std::move(out), {a, b},
                               [pa, pb, rows, cols](TensorImpl& self) mutable {
                                   if (pa.requires_grad()) {
                                       auto& ga = pa.grad();
                                       for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
                                   }
                                   if (pb.requires_grad()) {
                                       auto& gb = pb.grad();
                                       for (std::size_t r = 0; r < rows; ++r)
                                           for (std::size_t c = 0; c < cols; ++c)
                                               gb[c] += self.grad[r * cols + c];
                                   }
                               });
    }
    throw ShapeError("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "sub");
    std::vector<double> out(a.data());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.data()[i];
    Tensor pa = a, pb = b;
    return detail::make_op(a.shape(), std::move(out), {a, b}, [pa, pb](TensorImpl& self) mutable {
        if (pa.requires_grad()) {
            auto& ga = pa.grad();
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
        }
        if (pb.requires_grad()) {
            auto& gb = pb.grad();
            for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= self.grad[i];
        }
    });
}

inline Tensor scale(const Tensor& a, double s) {
    std::vector<double> out(a.data());
    for (double& x : out) x *= s;
    Tensor pa = a;
    return detail::make_op(a.shape(), std::move(out), {a}, [pa, s](TensorImpl& self) mutable {
        if (!pa.requires_grad()) return;
        auto& ga = pa.grad();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += s * self.grad[i];
    });
}

inline Tensor hadamard(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "hadamard");
    std::vector<double> out(a.data());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.data()[i];
    Tensor pa = a, pb = b;
    return detail::make_op(a.shape(), std::move(out), {a, b}, [pa, pb](TensorImpl& self) mutable {
        if (pa.requires_grad()) {
            auto& ga = pa.grad();
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i] * pb.data()[i];
        }
        if (pb.requires_grad()) {
            auto& gb = pb.grad();
            for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += self.grad[i] * pa.data()[i];
        }
    });
}

// Masked forward with a straight-through backward: the upstream gradient
// passes to `w` unchanged, as if the mask were not there. `mask` gets no
// gradient.
inline Tensor ste_mask(const Tensor& w, const Tensor& mask) {
    detail::require_same_shape(w, mask, "ste_mask");
    std::vector<double> out(w.data());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask.data()[i];
    Tensor pw = w;
    return detail::make_op(w.shape(), std::move(out), {w}, [pw](TensorImpl& self) mutable {
        if (!pw.requires_grad()) return;
        auto& gw = pw.grad();
        for (std::size_t i = 0; i < gw.size(); ++i) gw[i] += self.grad[i];
    });
}

// ---------------------------------------------------------------------------
// Matrix products (Eigen-backed kernels)
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
        throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    const std::size_t r = a.dim(0), k = a.dim(1), c = b.dim(1);
    std::vector<double> out(r * c);
    detail::store_product(out.data(), detail::cmap(a.data(), r, k) * detail::cmap(b.data(), k, c));
    Tensor pa = a, pb = b;
    return detail::make_op({r, c}, std::move(out), {a, b}, [pa, pb, r, k, c](TensorImpl& self) mutable {
        auto g = detail::cmap(self.grad, r, c);
        if (pa.requires_grad())
            detail::add_product(pa.grad().data(), g * detail::cmap(pb.data(), k, c).transpose());
        if (pb.requires_grad())
            detail::add_product(pb.grad().data(), detail::cmap(pa.data(), r, k).transpose() * g);
    });
}

// y = x * W^T (+ bias). Weights are stored [out_features, in_features] so the
// reduction axis of each row is contiguous; N:M blocks run along it.
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
    if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(1))
        throw ShapeError("linear: incompatible shapes " + shape_str(x.shape()) + " vs weight " +
                         shape_str(w.shape()));
    const std::size_t rows = x.dim(0), in = x.dim(1), out_f = w.dim(0);
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != out_f))
        throw ShapeError("linear: bias shape " + shape_str(bias.shape()) + " does not match out dim " +
                         std::to_string(out_f));
    std::vector<double> out(rows * out_f);
    detail::store_product(out.data(), detail::cmap(x.data(), rows, in) *
                                          detail::cmap(w.data(), out_f, in).transpose());
    if (bias.defined())
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < out_f; ++c) out[r * out_f + c] += bias.data()[c];

    std::vector<Tensor> parents = {x, w};
    if (bias.defined()) parents.push_back(bias);
    Tensor px = x, pw = w, pbias = bias;
    return detail::make_op({rows, out_f}, std::move(out), std::move(parents),
                           [px, pw, pbias, rows, in, out_f](TensorImpl& self) mutable {
                               auto g = detail::cmap(self.grad, rows, out_f);
                               if (px.requires_grad())
                                   detail::add_product(px.grad().data(),
                                                       g * detail::cmap(pw.data(), out_f, in));
                               if (pw.requires_grad())
                                   detail::add_product(
                                       pw.grad().data(),
                                       g.transpose() * detail::cmap(px.data(), rows, in));
                               if (pbias.defined() && pbias.requires_grad()) {
                                   auto& gb = pbias.grad();
                                   for (std::size_t r = 0; r < rows; ++r)
                                       for (std::size_t c = 0; c < out_f; ++c)
                                           gb[c] += self.grad[r * out_f + c];
                               }
                           });
}

inline Tensor linear(const Tensor& x, const Tensor& w) { return linear(x, w, Tensor()); }

// Batched matmul over the leading dimension: [n,r,k]·[n,k,c] -> [n,r,c]; with
// transpose_b, [n,r,k]·[n,c,k] -> [n,r,c].
inline Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b = false) {
    if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0))
        throw ShapeError("bmm: incompatible shapes " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    const std::size_t n = a.dim(0), r = a.dim(1), k = a.dim(2);
    const std::size_t c = transpose_b ? b.dim(1) : b.dim(2);
    const std::size_t bk = transpose_b ? b.dim(2) : b.dim(1);
    if (bk != k)
        throw ShapeError("bmm: inner dimensions disagree " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    std::vector<double> out(n * r * c);
    for (std::size_t i = 0; i < n; ++i) {
        detail::CMap ai(a.data().data() + i * r * k, r, k);
        double* oi = out.data() + i * r * c;
        if (transpose_b) {
            detail::CMap bi(b.data().data() + i * c * k, c, k);
            detail::store_product(oi, ai * bi.transpose());
        } else {
            detail::CMap bi(b.data().data() + i * k * c, k, c);
            detail::store_product(oi, ai * bi);
        }
    }
    Tensor pa = a, pb = b;
    return detail::make_op({n, r, c}, std::move(out), {a, b},
                           [pa, pb, n, r, k, c, transpose_b](TensorImpl& self) mutable {
                               for (std::size_t i = 0; i < n; ++i) {
                                   detail::CMap g(self.grad.data() + i * r * c, r, c);
                                   detail::CMap ai(pa.data().data() + i * r * k, r, k);
                                   if (transpose_b) {
                                       detail::CMap bi(pb.data().data() + i * c * k, c, k);
                                       if (pa.requires_grad())
                                           detail::add_product(pa.grad().data() + i * r * k,
                                                               g * bi);
                                       if (pb.requires_grad())
                                           detail::add_product(pb.grad().data() + i * c * k,
                                                               g.transpose() * ai);
                                   } else {
                                       detail::CMap bi(pb.data().data() + i * k * c, k, c);
                                       if (pa.requires_grad())
                                           detail::add_product(pa.grad().data() + i * r * k,
                                                               g * bi.transpose());
                                       if (pb.requires_grad())
                                           detail::add_product(pb.grad().data() + i * k * c,
                                                               ai.transpose() * g);
                                   }
                               }
                           });
}

// ---------------------------------------------------------------------------
// Nonlinearities
// ---------------------------------------------------------------------------

inline Tensor relu(const Tensor& a) {
    std::vector<double> out(a.data());
    for (double& x : out) x = x > 0.0 ? x : 0.0;
    Tensor pa = a;
    return detail::make_op(a.shape(), std::move(out), {a}, [pa](TensorImpl& self) mutable {
        if (!pa.requires_grad()) return;
        auto& ga = pa.grad();
        for (std::size_t i = 0; i < ga.size(); ++i)
            if (pa.data()[i] > 0.0) ga[i] += self.grad[i];
    });
}

namespace detail {
constexpr double kGeluC0 = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluC1 = 0.044715;
}  // namespace detail

// tanh-approximation GELU; the backward rule differentiates this exact form.
inline Tensor gelu(const Tensor& a) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        double x = a.data()[i];
        double t = std::tanh(detail::kGeluC0 * (x + detail::kGeluC1 * x * x * x));
        out[i] = 0.5 * x * (1.0 + t);
    }
    Tensor pa = a;
    return detail::make_op(a.shape(), std::move(out), {a}, [pa](TensorImpl& self) mutable {
        if (!pa.requires_grad()) return;
        auto& ga = pa.grad();
        for (std::size_t i = 0; i < ga.size(); ++i) {
            double x = pa.data()[i];
            double u = detail::kGeluC0 * (x + detail::kGeluC1 * x * x * x);
            double t = std::tanh(u);
            double du = detail::kGeluC0 * (1.0 + 3.0 * detail::kGeluC1 * x * x);
            double d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
            ga[i] += self.grad[i] * d;
        }
    });
}

// Softmax over the last axis, max-stabilized.
inline Tensor softmax_lastdim(const Tensor& a) {
    if (a.rank() < 1) throw ShapeError("softmax: rank-0 input");
    const std::size_t cols = a.shape().back();
    const std::size_t rows = a.numel() / cols;
    std::vector<double> out(a.numel());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* x = a.data().data() + r * cols;
        double* y = out.data() + r * cols;
        double m = x[0];
        for (std::size_t c = 1; c < cols; ++c) m = std::max(m, x[c]);
        double sum = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            y[c] = std::exp(x[c] - m);
            sum += y[c];
        }
        for (std::size_t c = 0; c < cols; ++c) y[c] /= sum;
    }
    Tensor pa = a;
    return detail::make_op(a.shape(), std::move(out), {a}, [pa, rows, cols](TensorImpl& self) mutable {
        if (!pa.requires_grad()) return;
        auto& ga = pa.grad();
        for (std::size_t r = 0; r < rows; ++r) {
            const double* y = self.data.data() + r * cols;
            const double* g = self.grad.data() + r * cols;
            double dot = 0.0;
            for (std::size_t c = 0; c < cols; ++c) dot += g[c] * y[c];
            for (std::size_t c = 0; c < cols; ++c) ga[r * cols + c] += (g[c] - dot) * y[c];
        }
    });
}

// Layer norm over the last axis with affine parameters. Population variance;
// eps guards zero-variance rows.
inline Tensor layernorm_lastdim(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                                double eps = 1e-5) {
    if (eps <= 0.0) throw ConfigError("layernorm: eps must be > 0, got " + std::to_string(eps));
    const std::size_t cols = x.shape().back();
    const std::size_t rows = x.numel() / cols;
    if (gamma.rank() != 1 || gamma.dim(0) != cols || beta.rank() != 1 || beta.dim(0) != cols)
        throw ShapeError("layernorm: affine params " + shape_str(gamma.shape()) + "/" +
                         shape_str(beta.shape()) + " do not match feature dim " + std::to_string(cols));

    std::vector<double> out(x.numel());
    auto xhat = std::make_shared<std::vector<double>>(x.numel());
    auto inv_std = std::make_shared<std::vector<double>>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xi = x.data().data() + r * cols;
        double mean = 0.0;
        for (std::size_t c = 0; c < cols; ++c) mean += xi[c];
        mean /= static_cast<double>(cols);
        double var = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            double d = xi[c] - mean;
            var += d * d;
        }
        var /= static_cast<double>(cols);
        double inv = 1.0 / std::sqrt(var + eps);
        (*inv_std)[r] = inv;
        for (std::size_t c = 0; c < cols; ++c) {
            double h = (xi[c] - mean) * inv;
            (*xhat)[r * cols + c] = h;
            out[r * cols + c] = gamma.data()[c] * h + beta.data()[c];
        }
    }
    Tensor px = x, pg = gamma, pb = beta;
    return detail::make_op(
        x.shape(), std::move(out), {x, gamma, beta},
        [px, pg, pb, xhat, inv_std, rows, cols](TensorImpl& self) mutable {
            const double n = static_cast<double>(cols);
            for (std::size_t r = 0; r < rows; ++r) {
                const double* g = self.grad.data() + r * cols;
                const double* h = xhat->data() + r * cols;
                if (pg.requires_grad() || pb.requires_grad()) {
                    auto& gg = pg.grad();
                    auto& gb = pb.grad();
                    for (std::size_t c = 0; c < cols; ++c) {
                        gg[c] += g[c] * h[c];
                        gb[c] += g[c];
                    }
                }
                if (px.requires_grad()) {
                    double sum_gh = 0.0, sum_ghh = 0.0;
                    for (std::size_t c = 0; c < cols; ++c) {
                        double gh = g[c] * pg.data()[c];
                        sum_gh += gh;
                        sum_ghh += gh * h[c];
                    }
                    auto& gx = px.grad();
                    double inv = (*inv_std)[r];
                    for (std::size_t c = 0; c < cols; ++c) {
                        double gh = g[c] * pg.data()[c];
                        gx[r * cols + c] += inv * (gh - sum_gh / n - h[c] * sum_ghh / n);
                    }
                }
            }
        });
}

// ---------------------------------------------------------------------------
// Shape manipulation (all copies; no stride views)
// ---------------------------------------------------------------------------

inline Tensor reshape(const Tensor& a, Shape new_shape) {
    if (numel(new_shape) != a.numel())
        throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                         shape_str(new_shape));
    Tensor pa = a;
    return detail::make_op(std::move(new_shape), std::vector<double>(a.data()), {a},
                           [pa](TensorImpl& self) mutable {
                               if (!pa.requires_grad()) return;
                               auto& ga = pa.grad();
                               for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
                           });
}

inline Tensor transpose(const Tensor& a) {
    if (a.rank() != 2) throw ShapeError("transpose: expects rank-2, got " + shape_str(a.shape()));
    const std::size_t r = a.dim(0), c = a.dim(1);
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a.data()[i * c + j];
    Tensor pa = a;
    return detail::make_op({c, r}, std::move(out), {a}, [pa, r, c](TensorImpl& self) mutable {
        if (!pa.requires_grad()) return;
        auto& ga = pa.grad();
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += self.grad[j * r + i];
    });
}

// [a,b,c,d] -> [a,c,b,d]; own inverse. Used to regroup attention heads.
inline Tensor permute0213(const Tensor& t) {
    if (t.rank() != 4) throw ShapeError("permute0213: expects rank-4, got " + shape_str(t.shape()));
    const std::size_t A = t.dim(0), B = t.dim(1), C = t.dim(2), D = t.dim(3);
    std::vector<double> out(t.numel());
    for (std::size_t a = 0; a < A; ++a)
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t c = 0; c < C; ++c) {
                const double* src = t.data().data() + ((a * B + b) * C + c) * D;
                double* dst = out.data() + ((a * C + c) * B + b) * D;
                std::copy(src, src + D, dst);
            }
    Tensor pt = t;
    return detail::make_op({A, C, B, D}, std::move(out), {t}, [pt, A, B, C, D](TensorImpl& self) mutable {
        if (!pt.requires_grad()) return;
        auto& g = pt.grad();
        for (std::size_t a = 0; a < A; ++a)
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t c = 0; c < C; ++c) {
                    const double* src = self.grad.data() + ((a * C + c) * B + b) * D;
                    double* dst = g.data() + ((a * B + b) * C + c) * D;
                    for (std::size_t d = 0; d < D; ++d) dst[d] += src[d];
                }
    });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

namespace detail {

inline Tensor reduce_axis(const Tensor& a, std::size_t axis, bool mean) {
    if (axis >= a.rank())
        throw ShapeError("reduce: axis " + std::to_string(axis) + " out of range for " +
                         shape_str(a.shape()));
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= a.dim(i);
    for (std::size_t i = axis + 1; i < a.rank(); ++i) inner *= a.dim(i);
    const std::size_t n = a.dim(axis);
    const double w = mean ? 1.0 / static_cast<double>(n) : 1.0;

    Shape out_shape;
    for (std::size_t i = 0; i < a.rank(); ++i)
        if (i != axis) out_shape.push_back(a.dim(i));
    if (out_shape.empty()) out_shape.push_back(1);

    std::vector<double> out(outer * inner, 0.0);
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t k = 0; k < n; ++k) {
            const double* src = a.data().data() + (o * n + k) * inner;
            double* dst = out.data() + o * inner;
            for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
        }
    if (mean)
        for (double& x : out) x *= w;

    Tensor pa = a;
    return detail::make_op(std::move(out_shape), std::move(out), {a},
                           [pa, outer, inner, n, w](TensorImpl& self) mutable {
                               if (!pa.requires_grad()) return;
                               auto& ga = pa.grad();
                               for (std::size_t o = 0; o < outer; ++o)
                                   for (std::size_t k = 0; k < n; ++k) {
                                       double* dst = ga.data() + (o * n + k) * inner;
                                       const double* src = self.grad.data() + o * inner;
                                       for (std::size_t i = 0; i < inner; ++i) dst[i] += w * src[i];
                                   }
                           });
}

inline Tensor reduce_all(const Tensor& a, bool mean) {
    const std::size_t n = a.numel();
    const double w = mean ? 1.0 / static_cast<double>(n) : 1.0;
    double acc = 0.0;
    for (double x : a.data()) acc += x;
    Tensor pa = a;
    return detail::make_op({1}, {acc * w}, {a}, [pa, w](TensorImpl& self) mutable {
        if (!pa.requires_grad()) return;
        auto& ga = pa.grad();
        const double g = self.grad[0] * w;
        for (double& x : ga) x += g;
    });
}

}  // namespace detail

inline Tensor reduce_sum(const Tensor& a) { return detail::reduce_all(a, false); }
inline Tensor reduce_mean(const Tensor& a) { return detail::reduce_all(a, true); }
inline Tensor reduce_sum(const Tensor& a, std::size_t axis) { return detail::reduce_axis(a, axis, false); }
inline Tensor reduce_mean(const Tensor& a, std::size_t axis) { return detail::reduce_axis(a, axis, true); }

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

// Mean negative log-softmax of the true class, max-stabilized.
inline Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    if (logits.rank() != 2)
        throw ShapeError("cross_entropy: logits must be rank-2, got " + shape_str(logits.shape()));
    const std::size_t b = logits.dim(0), c = logits.dim(1);
    if (labels.size() != b)
        throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for batch " +
                         std::to_string(b));
    for (std::size_t i = 0; i < b; ++i)
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c)
            throw ConfigError("cross_entropy: label " + std::to_string(labels[i]) + " at row " +
                              std::to_string(i) + " out of range [0," + std::to_string(c) + ")");

    double loss = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        const double* x = logits.data().data() + i * c;
        double m = x[0];
        for (std::size_t j = 1; j < c; ++j) m = std::max(m, x[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < c; ++j) sum += std::exp(x[j] - m);
        loss += m + std::log(sum) - x[labels[i]];
    }
    loss /= static_cast<double>(b);

    Tensor pl = logits;
    return detail::make_op({1}, {loss}, {logits}, [pl, labels, b, c](TensorImpl& self) mutable {
        if (!pl.requires_grad()) return;
        auto& gl = pl.grad();
        const double g0 = self.grad[0] / static_cast<double>(b);
        for (std::size_t i = 0; i < b; ++i) {
            const double* x = pl.data().data() + i * c;
            double m = x[0];
            for (std::size_t j = 1; j < c; ++j) m = std::max(m, x[j]);
            double sum = 0.0;
            for (std::size_t j = 0; j < c; ++j) sum += std::exp(x[j] - m);
            for (std::size_t j = 0; j < c; ++j) {
                double p = std::exp(x[j] - m) / sum;
                gl[i * c + j] += g0 * (p - (static_cast<std::size_t>(labels[i]) == j ? 1.0 : 0.0));
            }
        }
    });
}

}  // namespace nmflow
