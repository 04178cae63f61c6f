// SPDX-FileCopyrightText: © 2026 The wscod Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "wscod/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "wscod/fft.hpp"

namespace wscod {
namespace {

using ArrayPtr = std::shared_ptr<Array>;

ArrayPtr make_array(Shape shape, double fill = 0.0) { return std::make_shared<Array>(std::move(shape), fill); }

void require(bool cond, const std::string& what) {
    if (!cond) {
        throw ShapeError(what);
    }
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
    require(t.rank() == rank, std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                                  shape_str(t.shape()));
}

double clamp_denominator(double d) { return d >= 0.0 ? std::max(d, kNumericEps) : std::min(d, -kNumericEps); }

double sigmoid_scalar(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// C[m x n] += A[m x k] * B[k x n], dense row-major. Four rows of B are folded
// into each pass over a row of C so the inner loop stays a plain vector update.
void gemm_acc(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* ar = a + i * k;
        double* cr = c + i * n;
        std::size_t p = 0;
        for (; p + 4 <= k; p += 4) {
            const double s0 = ar[p];
            const double s1 = ar[p + 1];
            const double s2 = ar[p + 2];
            const double s3 = ar[p + 3];
            const double* b0 = b + p * n;
            const double* b1 = b0 + n;
            const double* b2 = b1 + n;
            const double* b3 = b2 + n;
            for (std::size_t j = 0; j < n; ++j) {
                cr[j] += s0 * b0[j] + s1 * b1[j] + s2 * b2[j] + s3 * b3[j];
            }
        }
        for (; p < k; ++p) {
            const double s = ar[p];
            const double* br = b + p * n;
            for (std::size_t j = 0; j < n; ++j) {
                cr[j] += s * br[j];
            }
        }
    }
}

// Row-major [m x n] -> [n x m].
std::vector<double> transposed(const double* a, std::size_t m, std::size_t n) {
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            out[j * m + i] = a[i * n + j];
        }
    }
    return out;
}

// Zero-padded patch matrix of a C x H x W map for an odd k x k kernel:
// row (c, ky, kx), column (y, x) holds x[c, y + ky - k/2, x + kx - k/2].
std::vector<double> im2col(const double* x, std::size_t c, std::size_t h, std::size_t w, std::size_t k) {
    const std::size_t hw = h * w;
    std::vector<double> col(c * k * k * hw, 0.0);
    const auto pad = static_cast<std::ptrdiff_t>(k / 2);
    const auto H = static_cast<std::ptrdiff_t>(h);
    const auto W = static_cast<std::ptrdiff_t>(w);
    for (std::size_t ci = 0; ci < c; ++ci) {
        for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx) {
                const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - pad;
                const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
                double* row = col.data() + ((ci * k + ky) * k + kx) * hw;
                const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -dx);
                const std::ptrdiff_t x1 = std::min<std::ptrdiff_t>(W, W - dx);
                for (std::ptrdiff_t y = std::max<std::ptrdiff_t>(0, -dy); y < std::min<std::ptrdiff_t>(H, H - dy); ++y) {
                    const double* src = x + (ci * h + static_cast<std::size_t>(y + dy)) * w + dx;
                    double* dst = row + static_cast<std::size_t>(y) * w;
                    for (std::ptrdiff_t xx = x0; xx < x1; ++xx) {
                        dst[xx] = src[xx];
                    }
                }
            }
        }
    }
    return col;
}

// Adjoint of im2col: scatters patch-matrix gradients back onto the map.
void col2im_acc(const double* col, std::size_t c, std::size_t h, std::size_t w, std::size_t k, double* x) {
    const std::size_t hw = h * w;
    const auto pad = static_cast<std::ptrdiff_t>(k / 2);
    const auto H = static_cast<std::ptrdiff_t>(h);
    const auto W = static_cast<std::ptrdiff_t>(w);
    for (std::size_t ci = 0; ci < c; ++ci) {
        for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx) {
                const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - pad;
                const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
                const double* row = col + ((ci * k + ky) * k + kx) * hw;
                const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -dx);
                const std::ptrdiff_t x1 = std::min<std::ptrdiff_t>(W, W - dx);
                for (std::ptrdiff_t y = std::max<std::ptrdiff_t>(0, -dy); y < std::min<std::ptrdiff_t>(H, H - dy); ++y) {
                    double* dst = x + (ci * h + static_cast<std::size_t>(y + dy)) * w + dx;
                    const double* src = row + static_cast<std::size_t>(y) * w;
                    for (std::ptrdiff_t xx = x0; xx < x1; ++xx) {
                        dst[xx] += src[xx];
                    }
                }
            }
        }
    }
}

}  // namespace

Tensor elementwise(UnaryOp op, const Tensor& a) {
    const auto x = a.values();
    auto out = make_array(a.shape());
    auto& y = out->data;
    for (std::size_t i = 0; i < x.size(); ++i) {
        switch (op) {
            case UnaryOp::Neg: y[i] = -x[i]; break;
            case UnaryOp::Sigmoid: y[i] = sigmoid_scalar(x[i]); break;
            case UnaryOp::Relu: y[i] = x[i] > 0.0 ? x[i] : 0.0; break;
            case UnaryOp::Log: y[i] = std::log(std::max(x[i], kNumericEps)); break;
            case UnaryOp::Exp: y[i] = std::exp(x[i]); break;
            case UnaryOp::Abs: y[i] = std::abs(x[i]); break;
            case UnaryOp::Sqrt: y[i] = std::sqrt(std::max(x[i], 0.0)); break;
            case UnaryOp::Square: y[i] = x[i] * x[i]; break;
        }
    }
    return Tape::apply(out, {a}, [a, out, op](std::span<const double> g, GradChannel& ch) {
        const auto x = a.values();
        const auto& y = out->data;
        auto ga = ch.slot(a);
        for (std::size_t i = 0; i < g.size(); ++i) {
            double d = 0.0;
            switch (op) {
                case UnaryOp::Neg: d = -1.0; break;
                case UnaryOp::Sigmoid: d = y[i] * (1.0 - y[i]); break;
                case UnaryOp::Relu: d = x[i] > 0.0 ? 1.0 : 0.0; break;
                case UnaryOp::Log: d = x[i] > kNumericEps ? 1.0 / x[i] : 0.0; break;
                case UnaryOp::Exp: d = y[i]; break;
                case UnaryOp::Abs: d = x[i] > 0.0 ? 1.0 : (x[i] < 0.0 ? -1.0 : 0.0); break;
                case UnaryOp::Sqrt: d = 0.5 / std::max(y[i], kNumericEps); break;
                case UnaryOp::Square: d = 2.0 * x[i]; break;
            }
            ga[i] += g[i] * d;
        }
    });
}

Tensor elementwise(BinaryOp op, const Tensor& a, const Tensor& b) {
    const bool same = a.shape() == b.shape();
    const bool b_scalar = !same && b.numel() == 1;
    const bool a_scalar = !same && !b_scalar && a.numel() == 1;
    require(same || a_scalar || b_scalar,
            "elementwise: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const Shape shape = a_scalar ? b.shape() : a.shape();
    const std::size_t n = shape_numel(shape);
    const auto av = a.values();
    const auto bv = b.values();
    auto at = [a_scalar, av](std::size_t i) { return a_scalar ? av[0] : av[i]; };
    auto bt = [b_scalar, bv](std::size_t i) { return b_scalar ? bv[0] : bv[i]; };
    auto out = make_array(shape);
    auto& y = out->data;
    for (std::size_t i = 0; i < n; ++i) {
        switch (op) {
            case BinaryOp::Add: y[i] = at(i) + bt(i); break;
            case BinaryOp::Sub: y[i] = at(i) - bt(i); break;
            case BinaryOp::Mul: y[i] = at(i) * bt(i); break;
            case BinaryOp::Div: y[i] = at(i) / clamp_denominator(bt(i)); break;
        }
    }
    return Tape::apply(out, {a, b}, [a, b, op, a_scalar, b_scalar](std::span<const double> g, GradChannel& ch) {
        const auto av = a.values();
        const auto bv = b.values();
        auto at = [a_scalar, av](std::size_t i) { return a_scalar ? av[0] : av[i]; };
        auto bt = [b_scalar, bv](std::size_t i) { return b_scalar ? bv[0] : bv[i]; };
        if (a.requires_grad()) {
            auto ga = ch.slot(a);
            for (std::size_t i = 0; i < g.size(); ++i) {
                double d = 1.0;
                if (op == BinaryOp::Mul) {
                    d = bt(i);
                } else if (op == BinaryOp::Div) {
                    d = 1.0 / clamp_denominator(bt(i));
                }
                ga[a_scalar ? 0 : i] += g[i] * d;
            }
        }
        if (b.requires_grad()) {
            auto gb = ch.slot(b);
            for (std::size_t i = 0; i < g.size(); ++i) {
                double d = 1.0;
                switch (op) {
                    case BinaryOp::Add: d = 1.0; break;
                    case BinaryOp::Sub: d = -1.0; break;
                    case BinaryOp::Mul: d = at(i); break;
                    case BinaryOp::Div: {
                        const double den = bt(i);
                        d = std::abs(den) > kNumericEps ? -at(i) / (den * den) : 0.0;
                        break;
                    }
                }
                gb[b_scalar ? 0 : i] += g[i] * d;
            }
        }
    });
}

Tensor elementwise(BinaryOp op, const Tensor& a, double b) {
    const auto x = a.values();
    auto out = make_array(a.shape());
    auto& y = out->data;
    const double den = clamp_denominator(b);
    for (std::size_t i = 0; i < x.size(); ++i) {
        switch (op) {
            case BinaryOp::Add: y[i] = x[i] + b; break;
            case BinaryOp::Sub: y[i] = x[i] - b; break;
            case BinaryOp::Mul: y[i] = x[i] * b; break;
            case BinaryOp::Div: y[i] = x[i] / den; break;
        }
    }
    double d = 1.0;
    if (op == BinaryOp::Mul) {
        d = b;
    } else if (op == BinaryOp::Div) {
        d = 1.0 / den;
    }
    return Tape::apply(out, {a}, [a, d](std::span<const double> g, GradChannel& ch) {
        auto ga = ch.slot(a);
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i] * d;
        }
    });
}

Tensor pow(const Tensor& a, double exponent) {
    if (exponent == 0.0) {
        return Tensor(Array(a.shape(), 1.0));
    }
    const auto x = a.values();
    auto out = make_array(a.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        out->data[i] = std::pow(x[i], exponent);
    }
    return Tape::apply(out, {a}, [a, exponent](std::span<const double> g, GradChannel& ch) {
        const auto x = a.values();
        auto ga = ch.slot(a);
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i] * exponent * std::pow(x[i], exponent - 1.0);
        }
    });
}

Tensor reduce(ReduceOp op, const Tensor& x, const std::vector<std::size_t>& axes) {
    require(!axes.empty(), "reduce: empty axis set");
    const auto& in_shape = x.shape();
    std::vector<bool> reduced(in_shape.size(), false);
    for (auto ax : axes) {
        require(ax < in_shape.size(), "reduce: axis " + std::to_string(ax) + " invalid for " + shape_str(in_shape));
        require(!reduced[ax], "reduce: repeated axis " + std::to_string(ax));
        reduced[ax] = true;
    }
    Shape out_shape;
    std::size_t count = 1;
    for (std::size_t i = 0; i < in_shape.size(); ++i) {
        if (reduced[i]) {
            count *= in_shape[i];
        } else {
            out_shape.push_back(in_shape[i]);
        }
    }
    // out_stride[i]: stride of input axis i within the output (0 if reduced)
    std::vector<std::size_t> out_stride(in_shape.size(), 0);
    std::size_t s = 1;
    for (std::size_t i = in_shape.size(); i-- > 0;) {
        if (!reduced[i]) {
            out_stride[i] = s;
            s *= in_shape[i];
        }
    }
    // map[flat input index] -> flat output index
    auto index_map = std::make_shared<std::vector<std::size_t>>(x.numel());
    {
        std::vector<std::size_t> counter(in_shape.size(), 0);
        for (std::size_t flat = 0; flat < x.numel(); ++flat) {
            std::size_t o = 0;
            for (std::size_t i = 0; i < in_shape.size(); ++i) {
                o += counter[i] * out_stride[i];
            }
            (*index_map)[flat] = o;
            for (std::size_t i = in_shape.size(); i-- > 0;) {
                if (++counter[i] < in_shape[i]) {
                    break;
                }
                counter[i] = 0;
            }
        }
    }
    const double scale = op == ReduceOp::Mean ? 1.0 / static_cast<double>(count) : 1.0;
    auto out = make_array(out_shape);
    const auto xv = x.values();
    for (std::size_t i = 0; i < xv.size(); ++i) {
        out->data[(*index_map)[i]] += xv[i];
    }
    if (scale != 1.0) {
        for (auto& v : out->data) {
            v *= scale;
        }
    }
    return Tape::apply(out, {x}, [x, index_map, scale](std::span<const double> g, GradChannel& ch) {
        auto gx = ch.slot(x);
        for (std::size_t i = 0; i < gx.size(); ++i) {
            gx[i] += g[(*index_map)[i]] * scale;
        }
    });
}

Tensor sum(const Tensor& x) {
    auto out = make_array(Shape{});
    for (double v : x.values()) {
        out->data[0] += v;
    }
    return Tape::apply(out, {x}, [x](std::span<const double> g, GradChannel& ch) {
        auto gx = ch.slot(x);
        for (auto& v : gx) {
            v += g[0];
        }
    });
}

Tensor mean(const Tensor& x) {
    require(x.numel() > 0, "mean: empty tensor");
    return sum(x) * (1.0 / static_cast<double>(x.numel()));
}

Tensor global_avg_pool(const Tensor& x) {
    require_rank(x, 3, "global_avg_pool");
    return reduce(ReduceOp::Mean, x, {1, 2});
}

Tensor dot(const Tensor& a, const Tensor& b) { return sum(a * b); }

Tensor logsumexp(const Tensor& x) {
    require(x.numel() > 0, "logsumexp: empty tensor");
    double m = -std::numeric_limits<double>::infinity();
    for (double v : x.values()) {
        m = std::max(m, v);
    }
    return log(sum(exp(x - m))) + m;
}

Tensor linear(const Tensor& x, const Tensor& weight, const std::optional<Tensor>& bias) {
    require_rank(weight, 2, "linear weight");
    require(x.rank() >= 1, "linear: input must have at least one axis");
    const std::size_t a = weight.dim(1);
    const std::size_t b = weight.dim(0);
    require(x.shape().back() == a,
            "linear: input " + shape_str(x.shape()) + " does not match weight " + shape_str(weight.shape()));
    if (bias) {
        require(bias->shape() == Shape{b}, "linear: bias shape " + shape_str(bias->shape()));
    }
    const std::size_t rows = x.numel() / a;
    Shape out_shape = x.shape();
    out_shape.back() = b;
    auto out = make_array(out_shape);
    if (bias) {
        const auto bv = bias->values();
        for (std::size_t n = 0; n < rows; ++n) {
            std::copy(bv.begin(), bv.end(), out->data.begin() + static_cast<std::ptrdiff_t>(n * b));
        }
    }
    const auto wt = transposed(weight.values().data(), b, a);
    gemm_acc(rows, a, b, x.values().data(), wt.data(), out->data.data());
    std::vector<Tensor> inputs{x, weight};
    if (bias) {
        inputs.push_back(*bias);
    }
    return Tape::apply(out, inputs, [x, weight, bias, a, b, rows](std::span<const double> g, GradChannel& ch) {
        if (x.requires_grad()) {
            gemm_acc(rows, b, a, g.data(), weight.values().data(), ch.slot(x).data());
        }
        if (weight.requires_grad()) {
            const auto gt = transposed(g.data(), rows, b);
            gemm_acc(b, rows, a, gt.data(), x.values().data(), ch.slot(weight).data());
        }
        if (bias && bias->requires_grad()) {
            auto gb = ch.slot(*bias);
            for (std::size_t n = 0; n < rows; ++n) {
                for (std::size_t o = 0; o < b; ++o) {
                    gb[o] += g[n * b + o];
                }
            }
        }
    });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "matmul lhs");
    require_rank(b, 2, "matmul rhs");
    const std::size_t m = a.dim(0);
    const std::size_t k = a.dim(1);
    const std::size_t n = b.dim(1);
    require(b.dim(0) == k, "matmul: inner dimensions differ " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    auto out = make_array(Shape{m, n});
    gemm_acc(m, k, n, a.values().data(), b.values().data(), out->data.data());
    return Tape::apply(out, {a, b}, [a, b, m, k, n](std::span<const double> g, GradChannel& ch) {
        if (a.requires_grad()) {
            const auto bt = transposed(b.values().data(), k, n);
            gemm_acc(m, n, k, g.data(), bt.data(), ch.slot(a).data());
        }
        if (b.requires_grad()) {
            const auto at = transposed(a.values().data(), m, k);
            gemm_acc(k, m, n, at.data(), g.data(), ch.slot(b).data());
        }
    });
}

Tensor transpose(const Tensor& a) {
    require_rank(a, 2, "transpose");
    const std::size_t m = a.dim(0);
    const std::size_t n = a.dim(1);
    auto out = make_array(Shape{n, m});
    const auto av = a.values();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            out->data[j * m + i] = av[i * n + j];
        }
    }
    return Tape::apply(out, {a}, [a, m, n](std::span<const double> g, GradChannel& ch) {
        auto ga = ch.slot(a);
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                ga[i * n + j] += g[j * m + i];
            }
        }
    });
}

Tensor softmax_rows(const Tensor& x) {
    require_rank(x, 2, "softmax_rows");
    const std::size_t m = x.dim(0);
    const std::size_t n = x.dim(1);
    auto out = make_array(x.shape());
    const auto xv = x.values();
    for (std::size_t i = 0; i < m; ++i) {
        const double* xr = xv.data() + i * n;
        double* yr = out->data.data() + i * n;
        const double mx = *std::max_element(xr, xr + n);
        double total = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            yr[j] = std::exp(xr[j] - mx);
            total += yr[j];
        }
        for (std::size_t j = 0; j < n; ++j) {
            yr[j] /= total;
        }
    }
    return Tape::apply(out, {x}, [x, out, m, n](std::span<const double> g, GradChannel& ch) {
        auto gx = ch.slot(x);
        for (std::size_t i = 0; i < m; ++i) {
            const double* yr = out->data.data() + i * n;
            const double* gr = g.data() + i * n;
            double inner = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                inner += gr[j] * yr[j];
            }
            for (std::size_t j = 0; j < n; ++j) {
                gx[i * n + j] += yr[j] * (gr[j] - inner);
            }
        }
    });
}

Tensor layer_norm_rows(const Tensor& x, double eps) {
    require_rank(x, 2, "layer_norm_rows");
    const std::size_t m = x.dim(0);
    const std::size_t n = x.dim(1);
    auto out = make_array(x.shape());
    auto inv_std = std::make_shared<std::vector<double>>(m);
    const auto xv = x.values();
    for (std::size_t i = 0; i < m; ++i) {
        const double* xr = xv.data() + i * n;
        double mu = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            mu += xr[j];
        }
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            var += (xr[j] - mu) * (xr[j] - mu);
        }
        var /= static_cast<double>(n);
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[i] = is;
        for (std::size_t j = 0; j < n; ++j) {
            out->data[i * n + j] = (xr[j] - mu) * is;
        }
    }
    return Tape::apply(out, {x}, [x, out, inv_std, m, n](std::span<const double> g, GradChannel& ch) {
        auto gx = ch.slot(x);
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t i = 0; i < m; ++i) {
            const double* yr = out->data.data() + i * n;
            const double* gr = g.data() + i * n;
            double g_mean = 0.0;
            double gy_mean = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                g_mean += gr[j];
                gy_mean += gr[j] * yr[j];
            }
            g_mean *= inv_n;
            gy_mean *= inv_n;
            for (std::size_t j = 0; j < n; ++j) {
                gx[i * n + j] += (*inv_std)[i] * (gr[j] - g_mean - yr[j] * gy_mean);
            }
        }
    });
}

Tensor reshape(const Tensor& x, Shape shape) {
    require(shape_numel(shape) == x.numel(),
            "reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    auto out = std::make_shared<Array>(std::move(shape), std::vector<double>(x.values().begin(), x.values().end()));
    return Tape::apply(out, {x}, [x](std::span<const double> g, GradChannel& ch) { ch.accumulate(x, g); });
}

Tensor concat(const std::vector<Tensor>& parts) {
    require(!parts.empty(), "concat: no inputs");
    Shape tail(parts[0].shape().begin() + (parts[0].rank() ? 1 : 0), parts[0].shape().end());
    require(parts[0].rank() >= 1, "concat: inputs need a leading axis");
    std::size_t lead = 0;
    for (const auto& p : parts) {
        require(p.rank() == parts[0].rank() && Shape(p.shape().begin() + 1, p.shape().end()) == tail,
                "concat: trailing shapes differ " + shape_str(p.shape()) + " vs " + shape_str(parts[0].shape()));
        lead += p.dim(0);
    }
    Shape shape{lead};
    shape.insert(shape.end(), tail.begin(), tail.end());
    auto out = make_array(shape);
    std::size_t offset = 0;
    for (const auto& p : parts) {
        std::copy(p.values().begin(), p.values().end(), out->data.begin() + static_cast<std::ptrdiff_t>(offset));
        offset += p.numel();
    }
    return Tape::apply(out, parts, [parts](std::span<const double> g, GradChannel& ch) {
        std::size_t offset = 0;
        for (const auto& p : parts) {
            ch.accumulate(p, g.subspan(offset, p.numel()));
            offset += p.numel();
        }
    });
}

Tensor slice(const Tensor& x, std::size_t begin, std::size_t count) {
    require(x.rank() >= 1 && begin + count <= x.dim(0),
            "slice: range [" + std::to_string(begin) + ", " + std::to_string(begin + count) + ") outside " +
                shape_str(x.shape()));
    Shape shape = x.shape();
    shape[0] = count;
    const std::size_t inner = x.numel() / x.dim(0);
    const auto xv = x.values();
    auto out = std::make_shared<Array>(
        shape, std::vector<double>(xv.begin() + static_cast<std::ptrdiff_t>(begin * inner),
                                   xv.begin() + static_cast<std::ptrdiff_t>((begin + count) * inner)));
    return Tape::apply(out, {x}, [x, begin, inner](std::span<const double> g, GradChannel& ch) {
        auto gx = ch.slot(x);
        for (std::size_t i = 0; i < g.size(); ++i) {
            gx[begin * inner + i] += g[i];
        }
    });
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, const std::optional<Tensor>& bias) {
    require_rank(input, 3, "conv2d input");
    require_rank(kernel, 4, "conv2d kernel");
    const std::size_t cin = input.dim(0);
    const std::size_t h = input.dim(1);
    const std::size_t w = input.dim(2);
    const std::size_t cout = kernel.dim(0);
    const std::size_t k = kernel.dim(2);
    require(kernel.dim(1) == cin, "conv2d: kernel expects " + std::to_string(kernel.dim(1)) +
                                      " input channels, input has " + std::to_string(cin));
    require(kernel.dim(3) == k && k % 2 == 1, "conv2d: kernel must be square with odd size, got " +
                                                  shape_str(kernel.shape()));
    if (bias) {
        require(bias->shape() == Shape{cout}, "conv2d: bias shape " + shape_str(bias->shape()));
    }
    const std::size_t hw = h * w;
    const std::size_t taps = cin * k * k;

    auto out = make_array(Shape{cout, h, w});
    if (bias) {
        for (std::size_t co = 0; co < cout; ++co) {
            std::fill_n(out->data.begin() + static_cast<std::ptrdiff_t>(co * hw), hw, bias->values()[co]);
        }
    }
    {
        const auto xv = input.values();
        if (k == 1) {
            gemm_acc(cout, taps, hw, kernel.values().data(), xv.data(), out->data.data());
        } else {
            const auto col = im2col(xv.data(), cin, h, w, k);
            gemm_acc(cout, taps, hw, kernel.values().data(), col.data(), out->data.data());
        }
    }

    std::vector<Tensor> inputs{input, kernel};
    if (bias) {
        inputs.push_back(*bias);
    }
    return Tape::apply(out, inputs, [=](std::span<const double> g, GradChannel& ch) {
        if (input.requires_grad()) {
            const auto kt = transposed(kernel.values().data(), cout, taps);
            auto gx = ch.slot(input);
            if (k == 1) {
                gemm_acc(taps, cout, hw, kt.data(), g.data(), gx.data());
            } else {
                std::vector<double> gcol(taps * hw, 0.0);
                gemm_acc(taps, cout, hw, kt.data(), g.data(), gcol.data());
                col2im_acc(gcol.data(), cin, h, w, k, gx.data());
            }
        }
        if (kernel.requires_grad()) {
            // gk^T = col * g^T keeps the large patch matrix in its natural layout.
            const auto xv = input.values();
            const auto gt = transposed(g.data(), cout, hw);
            std::vector<double> gkt(taps * cout, 0.0);
            if (k == 1) {
                gemm_acc(taps, hw, cout, xv.data(), gt.data(), gkt.data());
            } else {
                const auto col = im2col(xv.data(), cin, h, w, k);
                gemm_acc(taps, hw, cout, col.data(), gt.data(), gkt.data());
            }
            auto gk = ch.slot(kernel);
            for (std::size_t t = 0; t < taps; ++t) {
                for (std::size_t co = 0; co < cout; ++co) {
                    gk[co * taps + t] += gkt[t * cout + co];
                }
            }
        }
        if (bias && bias->requires_grad()) {
            auto gb = ch.slot(*bias);
            for (std::size_t co = 0; co < cout; ++co) {
                double acc = 0.0;
                for (std::size_t i = 0; i < hw; ++i) {
                    acc += g[co * hw + i];
                }
                gb[co] += acc;
            }
        }
    });
}

Tensor avg_pool2d(const Tensor& x, std::size_t factor) {
    require_rank(x, 3, "avg_pool2d");
    const std::size_t c = x.dim(0);
    const std::size_t h = x.dim(1);
    const std::size_t w = x.dim(2);
    require(factor >= 1 && h % factor == 0 && w % factor == 0,
            "avg_pool2d: factor " + std::to_string(factor) + " does not divide " + shape_str(x.shape()));
    const std::size_t oh = h / factor;
    const std::size_t ow = w / factor;
    const double scale = 1.0 / static_cast<double>(factor * factor);
    auto out = make_array(Shape{c, oh, ow});
    const auto xv = x.values();
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t xx = 0; xx < w; ++xx) {
                out->data[(ch * oh + y / factor) * ow + xx / factor] += xv[(ch * h + y) * w + xx] * scale;
            }
        }
    }
    return Tape::apply(out, {x}, [x, c, h, w, oh, ow, factor, scale](std::span<const double> g, GradChannel& chn) {
        auto gx = chn.slot(x);
        for (std::size_t ch = 0; ch < c; ++ch) {
            for (std::size_t y = 0; y < h; ++y) {
                for (std::size_t xx = 0; xx < w; ++xx) {
                    gx[(ch * h + y) * w + xx] += g[(ch * oh + y / factor) * ow + xx / factor] * scale;
                }
            }
        }
    });
}

Tensor upsample_nearest(const Tensor& x, std::size_t factor) {
    require_rank(x, 3, "upsample_nearest");
    require(factor >= 1, "upsample_nearest: factor must be positive");
    const std::size_t c = x.dim(0);
    const std::size_t h = x.dim(1);
    const std::size_t w = x.dim(2);
    const std::size_t oh = h * factor;
    const std::size_t ow = w * factor;
    auto out = make_array(Shape{c, oh, ow});
    const auto xv = x.values();
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t y = 0; y < oh; ++y) {
            for (std::size_t xx = 0; xx < ow; ++xx) {
                out->data[(ch * oh + y) * ow + xx] = xv[(ch * h + y / factor) * w + xx / factor];
            }
        }
    }
    return Tape::apply(out, {x}, [x, c, h, w, oh, ow, factor](std::span<const double> g, GradChannel& chn) {
        auto gx = chn.slot(x);
        for (std::size_t ch = 0; ch < c; ++ch) {
            for (std::size_t y = 0; y < oh; ++y) {
                for (std::size_t xx = 0; xx < ow; ++xx) {
                    gx[(ch * h + y / factor) * w + xx / factor] += g[(ch * oh + y) * ow + xx];
                }
            }
        }
    });
}

namespace {

// out[i] = x[source[i]]; the adjoint scatters back. Used for pure re-layouts.
Tensor permute_entries(const Tensor& x, Shape out_shape, std::vector<std::size_t> source) {
    auto out = make_array(std::move(out_shape));
    const auto xv = x.values();
    for (std::size_t i = 0; i < source.size(); ++i) {
        out->data[i] = xv[source[i]];
    }
    auto idx = std::make_shared<const std::vector<std::size_t>>(std::move(source));
    return Tape::apply(out, {x}, [x, idx](std::span<const double> g, GradChannel& chn) {
        auto gx = chn.slot(x);
        const auto& src = *idx;
        for (std::size_t i = 0; i < src.size(); ++i) {
            gx[src[i]] += g[i];
        }
    });
}

}  // namespace

Tensor depth_to_space(const Tensor& x, std::size_t factor) {
    require_rank(x, 3, "depth_to_space");
    const std::size_t ff = factor * factor;
    require(factor >= 1 && x.dim(0) % ff == 0,
            "depth_to_space: " + std::to_string(ff) + " does not divide the channels of " + shape_str(x.shape()));
    const std::size_t c = x.dim(0) / ff;
    const std::size_t h = x.dim(1);
    const std::size_t w = x.dim(2);
    const std::size_t oh = h * factor;
    const std::size_t ow = w * factor;
    std::vector<std::size_t> source(c * oh * ow);
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t y = 0; y < oh; ++y) {
            for (std::size_t xx = 0; xx < ow; ++xx) {
                const std::size_t in_ch = ch * ff + (y % factor) * factor + xx % factor;
                source[(ch * oh + y) * ow + xx] = (in_ch * h + y / factor) * w + xx / factor;
            }
        }
    }
    return permute_entries(x, Shape{c, oh, ow}, std::move(source));
}

Tensor space_to_depth(const Tensor& x, std::size_t factor) {
    require_rank(x, 3, "space_to_depth");
    require(factor >= 1 && x.dim(1) % factor == 0 && x.dim(2) % factor == 0,
            "space_to_depth: factor " + std::to_string(factor) + " does not divide " + shape_str(x.shape()));
    const std::size_t c = x.dim(0);
    const std::size_t h = x.dim(1);
    const std::size_t w = x.dim(2);
    const std::size_t ff = factor * factor;
    const std::size_t oh = h / factor;
    const std::size_t ow = w / factor;
    std::vector<std::size_t> source(c * ff * oh * ow);
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t xx = 0; xx < w; ++xx) {
                const std::size_t out_ch = ch * ff + (y % factor) * factor + xx % factor;
                source[(out_ch * oh + y / factor) * ow + xx / factor] = (ch * h + y) * w + xx;
            }
        }
    }
    return permute_entries(x, Shape{c * ff, oh, ow}, std::move(source));
}

Tensor scale_channels(const Tensor& x, const Tensor& gate) {
    require_rank(x, 3, "scale_channels");
    require(gate.shape() == Shape{x.dim(0)},
            "scale_channels: gate " + shape_str(gate.shape()) + " does not match " + shape_str(x.shape()));
    const std::size_t c = x.dim(0);
    const std::size_t plane = x.dim(1) * x.dim(2);
    auto out = make_array(x.shape());
    const auto xv = x.values();
    const auto gv = gate.values();
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t i = 0; i < plane; ++i) {
            out->data[ch * plane + i] = xv[ch * plane + i] * gv[ch];
        }
    }
    return Tape::apply(out, {x, gate}, [x, gate, c, plane](std::span<const double> g, GradChannel& chn) {
        const auto xv = x.values();
        const auto gv = gate.values();
        if (x.requires_grad()) {
            auto gx = chn.slot(x);
            for (std::size_t ch = 0; ch < c; ++ch) {
                for (std::size_t i = 0; i < plane; ++i) {
                    gx[ch * plane + i] += g[ch * plane + i] * gv[ch];
                }
            }
        }
        if (gate.requires_grad()) {
            auto gg = chn.slot(gate);
            for (std::size_t ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (std::size_t i = 0; i < plane; ++i) {
                    acc += g[ch * plane + i] * xv[ch * plane + i];
                }
                gg[ch] += acc;
            }
        }
    });
}

Tensor mul_spatial(const Tensor& x, const Tensor& map) {
    require_rank(x, 3, "mul_spatial");
    require(map.shape() == Shape{x.dim(1), x.dim(2)},
            "mul_spatial: map " + shape_str(map.shape()) + " does not match " + shape_str(x.shape()));
    const std::size_t c = x.dim(0);
    const std::size_t plane = x.dim(1) * x.dim(2);
    auto out = make_array(x.shape());
    const auto xv = x.values();
    const auto mv = map.values();
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t i = 0; i < plane; ++i) {
            out->data[ch * plane + i] = xv[ch * plane + i] * mv[i];
        }
    }
    return Tape::apply(out, {x, map}, [x, map, c, plane](std::span<const double> g, GradChannel& chn) {
        const auto xv = x.values();
        const auto mv = map.values();
        if (x.requires_grad()) {
            auto gx = chn.slot(x);
            for (std::size_t ch = 0; ch < c; ++ch) {
                for (std::size_t i = 0; i < plane; ++i) {
                    gx[ch * plane + i] += g[ch * plane + i] * mv[i];
                }
            }
        }
        if (map.requires_grad()) {
            auto gm = chn.slot(map);
            for (std::size_t ch = 0; ch < c; ++ch) {
                for (std::size_t i = 0; i < plane; ++i) {
                    gm[i] += g[ch * plane + i] * xv[ch * plane + i];
                }
            }
        }
    });
}

namespace {

struct PlaneDims {
    std::size_t planes;
    std::size_t h;
    std::size_t w;
};

PlaneDims plane_dims(const Shape& s, const char* op) {
    require(s.size() == 3, std::string(op) + ": expected C x H x W, got " + shape_str(s));
    require(s[1] >= 1 && s[2] >= 1, std::string(op) + ": empty spatial dims");
    return {s[0], s[1], s[2]};
}

// Computes the transform of (re, im) with `scale` applied to the output.
std::pair<ArrayPtr, ArrayPtr> transform_pair(std::span<const double> re, std::span<const double> im, const Shape& shape,
                                             dft::Direction dir, double scale) {
    const auto d = plane_dims(shape, "dft");
    auto r = make_array(shape);
    auto i = make_array(shape);
    std::copy(re.begin(), re.end(), r->data.begin());
    if (!im.empty()) {
        std::copy(im.begin(), im.end(), i->data.begin());
    }
    dft::transform(r->data, i->data, d.planes, d.h, d.w, dir);
    if (scale != 1.0) {
        for (auto& v : r->data) v *= scale;
        for (auto& v : i->data) v *= scale;
    }
    return {r, i};
}

// Adds the adjoint of a linear complex map to (xr, xi). `g_is_imag` tells
// whether the incoming gradient belongs to the real or the imaginary output.
void complex_adjoint(const Tensor& xr, const std::optional<Tensor>& xi, std::span<const double> g, bool g_is_imag,
                     dft::Direction adjoint_dir, double scale, GradChannel& ch) {
    const bool need_r = xr.requires_grad();
    const bool need_i = xi && xi->requires_grad();
    if (!need_r && !need_i) {
        return;
    }
    std::vector<double> zero(g.size(), 0.0);
    auto [pr, pi] = g_is_imag ? transform_pair(zero, g, xr.shape(), adjoint_dir, scale)
                              : transform_pair(g, zero, xr.shape(), adjoint_dir, scale);
    if (need_r) {
        ch.accumulate(xr, pr->data);
    }
    if (need_i) {
        ch.accumulate(*xi, pi->data);
    }
}

ComplexTensor record_transform(const Tensor& xr, const std::optional<Tensor>& xi, dft::Direction dir) {
    const auto d = plane_dims(xr.shape(), dir == dft::Direction::Forward ? "fft2" : "ifft2");
    if (xi) {
        require(xi->shape() == xr.shape(), "complex tensor parts differ in shape");
    }
    const double n = static_cast<double>(d.h * d.w);
    const bool inverse = dir == dft::Direction::Inverse;
    const double scale = inverse ? 1.0 / n : 1.0;
    auto [yr, yi] = transform_pair(xr.values(), xi ? xi->values() : std::span<const double>{}, xr.shape(), dir, scale);
    // Forward Y = F X has adjoint conj(F) = unnormalized inverse.
    // Inverse Y = conj(F) X / N has adjoint F / N.
    const auto adj_dir = inverse ? dft::Direction::Forward : dft::Direction::Inverse;
    const double adj_scale = inverse ? 1.0 / n : 1.0;
    std::vector<Tensor> inputs{xr};
    if (xi) {
        inputs.push_back(*xi);
    }
    Tensor real = Tape::apply(yr, inputs, [xr, xi, adj_dir, adj_scale](std::span<const double> g, GradChannel& ch) {
        complex_adjoint(xr, xi, g, false, adj_dir, adj_scale, ch);
    });
    Tensor imag = Tape::apply(yi, inputs, [xr, xi, adj_dir, adj_scale](std::span<const double> g, GradChannel& ch) {
        complex_adjoint(xr, xi, g, true, adj_dir, adj_scale, ch);
    });
    return ComplexTensor{real, imag};
}

}  // namespace

ComplexTensor fft2(const Tensor& x) { return record_transform(x, std::nullopt, dft::Direction::Forward); }

ComplexTensor fft2(const ComplexTensor& x) { return record_transform(x.real, x.imag, dft::Direction::Forward); }

ComplexTensor ifft2(const ComplexTensor& x) { return record_transform(x.real, x.imag, dft::Direction::Inverse); }

}  // namespace wscod
