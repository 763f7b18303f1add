#include "acousticpose/autodiff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Core>

#include "acousticpose/common/error.hpp"

namespace acousticpose::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<RowMat>;
using CMapM = Eigen::Map<const RowMat>;

bool wants(const Node* n) { return n && n->requires_grad; }

Node* raw(const Tensor& t) { return t.defined() ? t.node().get() : nullptr; }

Shape broadcast_shape(const Shape& a, const Shape& b) {
    const std::size_t nd = std::max(a.size(), b.size());
    Shape out(nd, 1);
    for (std::size_t i = 0; i < nd; ++i) {
        const std::size_t da = i < nd - a.size() ? 1 : a[i - (nd - a.size())];
        const std::size_t db = i < nd - b.size() ? 1 : b[i - (nd - b.size())];
        if (da != db && da != 1 && db != 1) {
            throw DimensionError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
        }
        out[i] = std::max(da, db);
    }
    return out;
}

// Offset into `in` for every element of `out` under broadcasting.
std::vector<std::size_t> broadcast_index(const Shape& out, const Shape& in) {
    const std::size_t nd = out.size();
    std::vector<std::size_t> stride(nd, 0);
    std::size_t s = 1;
    for (std::size_t i = in.size(); i-- > 0;) {
        const std::size_t o = i + (nd - in.size());
        stride[o] = in[i] == 1 ? 0 : s;
        s *= in[i];
    }
    const std::size_t n = numel(out);
    std::vector<std::size_t> idx(n);
    std::vector<std::size_t> counter(nd, 0);
    std::size_t off = 0;
    for (std::size_t e = 0; e < n; ++e) {
        idx[e] = off;
        for (std::size_t d = nd; d-- > 0;) {
            ++counter[d];
            off += stride[d];
            if (counter[d] < out[d]) break;
            off -= stride[d] * counter[d];
            counter[d] = 0;
        }
    }
    return idx;
}

template <class F, class DA, class DB>
Tensor binary(const Tensor& a, const Tensor& b, F f, DA da, DB db, const char* op) {
    const Shape shape = broadcast_shape(a.shape(), b.shape());
    const std::size_t n = numel(shape);
    std::vector<std::size_t> ia, ib;
    if (a.shape() != shape) ia = broadcast_index(shape, a.shape());
    if (b.shape() != shape) ib = broadcast_index(shape, b.shape());
    const auto av = a.data(), bv = b.data();
    std::vector<double> out(n);
    for (std::size_t e = 0; e < n; ++e) out[e] = f(av[ia.empty() ? e : ia[e]], bv[ib.empty() ? e : ib[e]]);

    Node* pa = raw(a);
    Node* pb = raw(b);
    return make_result(
        shape, std::move(out), {a, b},
        [pa, pb, ia = std::move(ia), ib = std::move(ib), da, db](Node& o) {
            const auto& g = o.grad;
            const auto& x = pa->value;
            const auto& y = pb->value;
            const std::size_t n = g.size();
            if (wants(pa)) {
                auto& gx = pa->grad_buffer();
                for (std::size_t e = 0; e < n; ++e) {
                    const std::size_t i = ia.empty() ? e : ia[e];
                    gx[i] += da(x[i], y[ib.empty() ? e : ib[e]], g[e]);
                }
            }
            if (wants(pb)) {
                auto& gy = pb->grad_buffer();
                for (std::size_t e = 0; e < n; ++e) {
                    const std::size_t j = ib.empty() ? e : ib[e];
                    gy[j] += db(x[ia.empty() ? e : ia[e]], y[j], g[e]);
                }
            }
        },
        op);
}

template <class F, class D>
Tensor unary(const Tensor& x, F f, D d, const char* op) {
    const auto xv = x.data();
    std::vector<double> out(xv.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
    Node* px = raw(x);
    return make_result(
        x.shape(), std::move(out), {x},
        [px, d](Node& o) {
            auto& gx = px->grad_buffer();
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += o.grad[i] * d(px->value[i], o.value[i]);
        },
        op);
}

void require_dim(const Tensor& t, std::size_t d, const char* what) {
    if (t.dim() != d) {
        throw DimensionError(std::string(what) + " expects a " + std::to_string(d) + "-D tensor, got " +
                             shape_str(t.shape()));
    }
}

struct AxisView {
    std::size_t outer, len, inner;
};

AxisView axis_view(const Shape& s, std::size_t axis) {
    if (axis >= s.size()) throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
    AxisView v{1, s[axis], 1};
    for (std::size_t i = 0; i < axis; ++i) v.outer *= s[i];
    for (std::size_t i = axis + 1; i < s.size(); ++i) v.inner *= s[i];
    return v;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, [](double x, double y) { return x + y; }, [](double, double, double g) { return g; },
        [](double, double, double g) { return g; }, "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, [](double x, double y) { return x - y; }, [](double, double, double g) { return g; },
        [](double, double, double g) { return -g; }, "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, [](double x, double y) { return x * y; }, [](double, double y, double g) { return g * y; },
        [](double x, double, double g) { return g * x; }, "mul");
}

Tensor scale(const Tensor& a, double s) {
    return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; }, "scale");
}

Tensor add_scalar(const Tensor& a, double s) {
    return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; }, "add_scalar");
}

Tensor relu(const Tensor& x) {
    return unary(
        x, [](double v) { return v > 0.0 || std::isnan(v) ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; }, "relu");
}

Tensor gelu(const Tensor& x) {
    return unary(
        x, [](double v) { return 0.5 * v * (1.0 + std::erf(v / std::numbers::sqrt2)); },
        [](double v, double) {
            const double pdf = std::exp(-0.5 * v * v) / std::sqrt(2.0 * std::numbers::pi);
            return 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2)) + v * pdf;
        },
        "gelu");
}

Tensor exp(const Tensor& x) {
    return unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; }, "exp");
}

Tensor log(const Tensor& x) {
    return unary(x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; }, "log");
}

Tensor sum(const Tensor& x) {
    double s = 0.0;
    for (double v : x.data()) s += v;
    Node* px = raw(x);
    return make_result(
        {}, {s}, {x},
        [px](Node& o) {
            auto& gx = px->grad_buffer();
            for (auto& g : gx) g += o.grad[0];
        },
        "sum");
}

Tensor mean(const Tensor& x) {
    if (x.numel() == 0) throw EmptyInputError("mean of an empty tensor");
    return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor mse(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw DimensionError("mse shapes " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const auto d = sub(a, b);
    return mean(mul(d, d));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.dim() < 2 || b.dim() < 2) throw DimensionError("matmul needs operands of rank >= 2");
    const std::size_t m = a.size(a.dim() - 2), k = a.size(a.dim() - 1);
    const std::size_t k2 = b.size(b.dim() - 2), n = b.size(b.dim() - 1);
    if (k != k2) throw DimensionError("matmul inner dims " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    const bool shared = b.dim() == 2;
    if (!shared && (b.dim() != a.dim() || !std::equal(a.shape().begin(), a.shape().end() - 2, b.shape().begin()))) {
        throw DimensionError("matmul batch dims " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    const std::size_t batch = a.numel() / (m * k);
    Shape shape(a.shape().begin(), a.shape().end() - 2);
    shape.push_back(m);
    shape.push_back(n);
    std::vector<double> out(batch * m * n);
    if (shared) {
        MapM(out.data(), batch * m, n).noalias() = CMapM(a.data().data(), batch * m, k) * CMapM(b.data().data(), k, n);
    } else {
        for (std::size_t i = 0; i < batch; ++i) {
            MapM(out.data() + i * m * n, m, n).noalias() =
                CMapM(a.data().data() + i * m * k, m, k) * CMapM(b.data().data() + i * k * n, k, n);
        }
    }
    Node* pa = raw(a);
    Node* pb = raw(b);
    return make_result(
        shape, std::move(out), {a, b},
        [pa, pb, shared, batch, m, k, n](Node& o) {
            const double* g = o.grad.data();
            if (shared) {
                if (wants(pa)) {
                    MapM(pa->grad_buffer().data(), batch * m, k).noalias() +=
                        CMapM(g, batch * m, n) * CMapM(pb->value.data(), k, n).transpose();
                }
                if (wants(pb)) {
                    MapM(pb->grad_buffer().data(), k, n).noalias() +=
                        CMapM(pa->value.data(), batch * m, k).transpose() * CMapM(g, batch * m, n);
                }
                return;
            }
            for (std::size_t i = 0; i < batch; ++i) {
                if (wants(pa)) {
                    MapM(pa->grad_buffer().data() + i * m * k, m, k).noalias() +=
                        CMapM(g + i * m * n, m, n) * CMapM(pb->value.data() + i * k * n, k, n).transpose();
                }
                if (wants(pb)) {
                    MapM(pb->grad_buffer().data() + i * k * n, k, n).noalias() +=
                        CMapM(pa->value.data() + i * m * k, m, k).transpose() * CMapM(g + i * m * n, m, n);
                }
            }
        },
        "matmul");
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (numel(shape) != x.numel()) {
        throw DimensionError("cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
    }
    Node* px = raw(x);
    return make_result(
        std::move(shape), std::vector<double>(x.data().begin(), x.data().end()), {x},
        [px](Node& o) {
            auto& gx = px->grad_buffer();
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += o.grad[i];
        },
        "reshape");
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& perm) {
    const auto& in = x.shape();
    const std::size_t nd = in.size();
    if (perm.size() != nd) throw DimensionError("permute rank mismatch for " + shape_str(in));
    std::vector<bool> used(nd, false);
    for (auto p : perm) {
        if (p >= nd || used[p]) throw DimensionError("invalid permutation for " + shape_str(in));
        used[p] = true;
    }
    std::vector<std::size_t> in_stride(nd, 1);
    for (std::size_t i = nd; i-- > 1;) in_stride[i - 1] = in_stride[i] * in[i];
    Shape shape(nd);
    std::vector<std::size_t> stride(nd);
    for (std::size_t i = 0; i < nd; ++i) {
        shape[i] = in[perm[i]];
        stride[i] = in_stride[perm[i]];
    }
    const std::size_t n = x.numel();
    std::vector<std::size_t> src(n);
    std::vector<std::size_t> counter(nd, 0);
    std::size_t off = 0;
    for (std::size_t e = 0; e < n; ++e) {
        src[e] = off;
        for (std::size_t d = nd; d-- > 0;) {
            ++counter[d];
            off += stride[d];
            if (counter[d] < shape[d]) break;
            off -= stride[d] * counter[d];
            counter[d] = 0;
        }
    }
    std::vector<double> out(n);
    const auto xv = x.data();
    for (std::size_t e = 0; e < n; ++e) out[e] = xv[src[e]];
    Node* px = raw(x);
    return make_result(
        shape, std::move(out), {x},
        [px, src = std::move(src)](Node& o) {
            auto& gx = px->grad_buffer();
            for (std::size_t e = 0; e < src.size(); ++e) gx[src[e]] += o.grad[e];
        },
        "permute");
}

Tensor transpose(const Tensor& x, std::size_t d0, std::size_t d1) {
    std::vector<std::size_t> perm(x.dim());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    if (d0 >= perm.size() || d1 >= perm.size()) throw DimensionError("transpose axis out of range");
    std::swap(perm[d0], perm[d1]);
    return permute(x, perm);
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
    if (parts.empty()) throw EmptyInputError("concat of nothing");
    Shape shape = parts[0].shape();
    if (axis >= shape.size()) throw DimensionError("concat axis out of range");
    std::size_t total = 0;
    for (const auto& p : parts) {
        Shape s = p.shape();
        if (s.size() != shape.size()) throw DimensionError("concat rank mismatch");
        total += s[axis];
        s[axis] = shape[axis];
        if (s != shape) throw DimensionError("concat shape mismatch " + shape_str(p.shape()) + " vs " + shape_str(shape));
    }
    shape[axis] = total;
    const auto view = axis_view(shape, axis);
    std::vector<double> out(numel(shape));
    std::vector<std::size_t> starts;
    std::size_t start = 0;
    for (const auto& p : parts) {
        starts.push_back(start);
        const std::size_t len = p.size(axis);
        const auto pv = p.data();
        for (std::size_t o = 0; o < view.outer; ++o) {
            std::copy_n(pv.begin() + static_cast<std::ptrdiff_t>(o * len * view.inner), len * view.inner,
                        out.begin() + static_cast<std::ptrdiff_t>((o * total + start) * view.inner));
        }
        start += len;
    }
    std::vector<Node*> nodes;
    for (const auto& p : parts) nodes.push_back(raw(p));
    return make_result(
        shape, std::move(out), parts,
        [nodes, starts, view, total, axis](Node& o) {
            for (std::size_t i = 0; i < nodes.size(); ++i) {
                Node* p = nodes[i];
                if (!wants(p)) continue;
                const std::size_t len = p->shape[axis];
                auto& gp = p->grad_buffer();
                for (std::size_t q = 0; q < view.outer; ++q) {
                    const double* src = o.grad.data() + (q * total + starts[i]) * view.inner;
                    double* dst = gp.data() + q * len * view.inner;
                    for (std::size_t e = 0; e < len * view.inner; ++e) dst[e] += src[e];
                }
            }
        },
        "concat");
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length) {
    const auto view = axis_view(x.shape(), axis);
    if (start + length > view.len) {
        throw DimensionError("slice [" + std::to_string(start) + ", +" + std::to_string(length) + ") out of " +
                             shape_str(x.shape()));
    }
    Shape shape = x.shape();
    shape[axis] = length;
    std::vector<double> out(numel(shape));
    const auto xv = x.data();
    for (std::size_t o = 0; o < view.outer; ++o) {
        std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>((o * view.len + start) * view.inner),
                    length * view.inner, out.begin() + static_cast<std::ptrdiff_t>(o * length * view.inner));
    }
    Node* px = raw(x);
    return make_result(
        shape, std::move(out), {x},
        [px, view, start, length](Node& o) {
            auto& gx = px->grad_buffer();
            for (std::size_t q = 0; q < view.outer; ++q) {
                const double* src = o.grad.data() + q * length * view.inner;
                double* dst = gx.data() + (q * view.len + start) * view.inner;
                for (std::size_t e = 0; e < length * view.inner; ++e) dst[e] += src[e];
            }
        },
        "slice");
}

Tensor softmax(const Tensor& x) {
    if (x.dim() == 0) throw DimensionError("softmax of a scalar");
    const std::size_t len = x.shape().back();
    const std::size_t rows = x.numel() / len;
    const auto xv = x.data();
    std::vector<double> out(x.numel());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = xv.data() + r * len;
        double* y = out.data() + r * len;
        const double mx = *std::max_element(in, in + len);
        double z = 0.0;
        for (std::size_t i = 0; i < len; ++i) z += y[i] = std::exp(in[i] - mx);
        for (std::size_t i = 0; i < len; ++i) y[i] /= z;
    }
    Node* px = raw(x);
    return make_result(
        x.shape(), std::move(out), {x},
        [px, rows, len](Node& o) {
            auto& gx = px->grad_buffer();
            for (std::size_t r = 0; r < rows; ++r) {
                const double* y = o.value.data() + r * len;
                const double* g = o.grad.data() + r * len;
                double dot = 0.0;
                for (std::size_t i = 0; i < len; ++i) dot += g[i] * y[i];
                for (std::size_t i = 0; i < len; ++i) gx[r * len + i] += y[i] * (g[i] - dot);
            }
        },
        "softmax");
}

Tensor log_softmax(const Tensor& x) {
    if (x.dim() == 0) throw DimensionError("log_softmax of a scalar");
    const std::size_t len = x.shape().back();
    const std::size_t rows = x.numel() / len;
    const auto xv = x.data();
    std::vector<double> out(x.numel());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = xv.data() + r * len;
        const double mx = *std::max_element(in, in + len);
        double z = 0.0;
        for (std::size_t i = 0; i < len; ++i) z += std::exp(in[i] - mx);
        const double lse = mx + std::log(z);
        for (std::size_t i = 0; i < len; ++i) out[r * len + i] = in[i] - lse;
    }
    Node* px = raw(x);
    return make_result(
        x.shape(), std::move(out), {x},
        [px, rows, len](Node& o) {
            auto& gx = px->grad_buffer();
            for (std::size_t r = 0; r < rows; ++r) {
                const double* y = o.value.data() + r * len;
                const double* g = o.grad.data() + r * len;
                double gs = 0.0;
                for (std::size_t i = 0; i < len; ++i) gs += g[i];
                for (std::size_t i = 0; i < len; ++i) gx[r * len + i] += g[i] - std::exp(y[i]) * gs;
            }
        },
        "log_softmax");
}

Tensor l2_normalize(const Tensor& x, double eps) {
    if (x.dim() == 0) throw DimensionError("l2_normalize of a scalar");
    const std::size_t len = x.shape().back();
    const std::size_t rows = x.numel() / len;
    const auto xv = x.data();
    std::vector<double> out(x.numel()), norms(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        double s = 0.0;
        for (std::size_t i = 0; i < len; ++i) s += xv[r * len + i] * xv[r * len + i];
        norms[r] = std::sqrt(s);
        const double d = std::max(norms[r], eps);
        for (std::size_t i = 0; i < len; ++i) out[r * len + i] = xv[r * len + i] / d;
    }
    Node* px = raw(x);
    return make_result(
        x.shape(), std::move(out), {x},
        [px, rows, len, eps, norms = std::move(norms)](Node& o) {
            auto& gx = px->grad_buffer();
            for (std::size_t r = 0; r < rows; ++r) {
                const double* y = o.value.data() + r * len;
                const double* g = o.grad.data() + r * len;
                if (norms[r] <= eps) {
                    for (std::size_t i = 0; i < len; ++i) gx[r * len + i] += g[i] / eps;
                    continue;
                }
                double dot = 0.0;
                for (std::size_t i = 0; i < len; ++i) dot += g[i] * y[i];
                for (std::size_t i = 0; i < len; ++i) gx[r * len + i] += (g[i] - y[i] * dot) / norms[r];
            }
        },
        "l2_normalize");
}

Tensor layer_norm(const Tensor& x, std::size_t axis, const Tensor& gamma, const Tensor& beta, double eps) {
    const auto v = axis_view(x.shape(), axis);
    for (const Tensor* p : {&gamma, &beta}) {
        if (p->defined() && p->numel() != v.len) {
            throw DimensionError("layer_norm affine size " + std::to_string(p->numel()) + " vs axis " +
                                 std::to_string(v.len));
        }
    }
    const auto xv = x.data();
    std::vector<double> out(x.numel()), xhat(x.numel()), inv_std(v.outer * v.inner);
    for (std::size_t o = 0; o < v.outer; ++o) {
        for (std::size_t i = 0; i < v.inner; ++i) {
            const std::size_t base = o * v.len * v.inner + i;
            double m = 0.0;
            for (std::size_t c = 0; c < v.len; ++c) m += xv[base + c * v.inner];
            m /= static_cast<double>(v.len);
            double var = 0.0;
            for (std::size_t c = 0; c < v.len; ++c) var += std::pow(xv[base + c * v.inner] - m, 2);
            var /= static_cast<double>(v.len);
            const double is = 1.0 / std::sqrt(var + eps);
            inv_std[o * v.inner + i] = is;
            for (std::size_t c = 0; c < v.len; ++c) {
                const std::size_t e = base + c * v.inner;
                xhat[e] = (xv[e] - m) * is;
                const double gmul = gamma.defined() ? gamma.data()[c] : 1.0;
                const double badd = beta.defined() ? beta.data()[c] : 0.0;
                out[e] = gmul * xhat[e] + badd;
            }
        }
    }
    Node* px = raw(x);
    Node* pg = raw(gamma);
    Node* pb = raw(beta);
    return make_result(
        x.shape(), std::move(out), {x, gamma, beta},
        [px, pg, pb, v, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& o) {
            const auto& g = o.grad;
            if (wants(pg)) {
                auto& gg = pg->grad_buffer();
                for (std::size_t e = 0; e < g.size(); ++e) gg[(e / v.inner) % v.len] += g[e] * xhat[e];
            }
            if (wants(pb)) {
                auto& gb = pb->grad_buffer();
                for (std::size_t e = 0; e < g.size(); ++e) gb[(e / v.inner) % v.len] += g[e];
            }
            if (!wants(px)) return;
            auto& gx = px->grad_buffer();
            const double inv_len = 1.0 / static_cast<double>(v.len);
            for (std::size_t q = 0; q < v.outer; ++q) {
                for (std::size_t i = 0; i < v.inner; ++i) {
                    const std::size_t base = q * v.len * v.inner + i;
                    double s1 = 0.0, s2 = 0.0;
                    for (std::size_t c = 0; c < v.len; ++c) {
                        const std::size_t e = base + c * v.inner;
                        const double dh = g[e] * (pg ? pg->value[c] : 1.0);
                        s1 += dh;
                        s2 += dh * xhat[e];
                    }
                    const double is = inv_std[q * v.inner + i];
                    for (std::size_t c = 0; c < v.len; ++c) {
                        const std::size_t e = base + c * v.inner;
                        const double dh = g[e] * (pg ? pg->value[c] : 1.0);
                        gx[e] += is * (dh - inv_len * s1 - xhat[e] * inv_len * s2);
                    }
                }
            }
        },
        "layer_norm");
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, const Conv2dOptions& opt) {
    require_dim(x, 4, "conv2d input");
    require_dim(w, 4, "conv2d weight");
    const std::size_t N = x.size(0), C = x.size(1), H = x.size(2), W = x.size(3);
    const std::size_t O = w.size(0), kh = w.size(2), kw = w.size(3);
    if (w.size(1) != C) throw DimensionError("conv2d channels " + shape_str(x.shape()) + " vs " + shape_str(w.shape()));
    if (bias.defined() && bias.numel() != O) throw DimensionError("conv2d bias size");
    if (opt.stride_h == 0 || opt.stride_w == 0) throw DimensionError("conv2d stride must be positive");
    if (H + 2 * opt.pad_h < kh || W + 2 * opt.pad_w < kw) throw DimensionError("conv2d kernel larger than input");
    const std::size_t Ho = (H + 2 * opt.pad_h - kh) / opt.stride_h + 1;
    const std::size_t Wo = (W + 2 * opt.pad_w - kw) / opt.stride_w + 1;
    const std::size_t K = C * kh * kw, P = Ho * Wo, cols_w = N * P;

    // im2col over the whole batch: cols [K, N*P]; src index -1 marks padding.
    std::vector<long> src(K * P);
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t i = 0; i < kh; ++i) {
            for (std::size_t j = 0; j < kw; ++j) {
                const std::size_t row = (c * kh + i) * kw + j;
                for (std::size_t oh = 0; oh < Ho; ++oh) {
                    for (std::size_t ow = 0; ow < Wo; ++ow) {
                        const long h = static_cast<long>(oh * opt.stride_h + i) - static_cast<long>(opt.pad_h);
                        const long ww = static_cast<long>(ow * opt.stride_w + j) - static_cast<long>(opt.pad_w);
                        const bool inside = h >= 0 && ww >= 0 && h < static_cast<long>(H) && ww < static_cast<long>(W);
                        src[row * P + oh * Wo + ow] = inside ? (static_cast<long>(c * H) + h) * static_cast<long>(W) + ww : -1;
                    }
                }
            }
        }
    }
    const auto xv = x.data();
    std::vector<double> cols(K * cols_w);
    for (std::size_t r = 0; r < K; ++r) {
        for (std::size_t n = 0; n < N; ++n) {
            const double* xn = xv.data() + n * C * H * W;
            double* dst = cols.data() + r * cols_w + n * P;
            const long* s = src.data() + r * P;
            for (std::size_t p = 0; p < P; ++p) dst[p] = s[p] < 0 ? 0.0 : xn[s[p]];
        }
    }
    RowMat y = CMapM(w.data().data(), O, K) * CMapM(cols.data(), K, cols_w);
    std::vector<double> out(N * O * P);
    for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t o = 0; o < O; ++o) {
            const double b = bias.defined() ? bias.data()[o] : 0.0;
            for (std::size_t p = 0; p < P; ++p) out[(n * O + o) * P + p] = y(o, n * P + p) + b;
        }
    }
    Node* px = raw(x);
    Node* pw = raw(w);
    Node* pb = raw(bias);
    return make_result(
        {N, O, Ho, Wo}, std::move(out), {x, w, bias},
        [=, src = std::move(src), cols = std::move(cols)](Node& o) {
            RowMat g(O, cols_w);
            for (std::size_t n = 0; n < N; ++n) {
                for (std::size_t q = 0; q < O; ++q) {
                    for (std::size_t p = 0; p < P; ++p) g(q, n * P + p) = o.grad[(n * O + q) * P + p];
                }
            }
            if (wants(pb)) {
                auto& gb = pb->grad_buffer();
                for (std::size_t q = 0; q < O; ++q) gb[q] += g.row(static_cast<Eigen::Index>(q)).sum();
            }
            if (wants(pw)) {
                MapM(pw->grad_buffer().data(), O, K).noalias() += g * CMapM(cols.data(), K, cols_w).transpose();
            }
            if (wants(px)) {
                RowMat dcols = CMapM(pw->value.data(), O, K).transpose() * g;
                auto& gx = px->grad_buffer();
                for (std::size_t r = 0; r < K; ++r) {
                    for (std::size_t n = 0; n < N; ++n) {
                        double* gxn = gx.data() + n * C * H * W;
                        const long* s = src.data() + r * P;
                        for (std::size_t p = 0; p < P; ++p) {
                            if (s[p] >= 0) gxn[s[p]] += dcols(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(n * P + p));
                        }
                    }
                }
            }
        },
        "conv2d");
}

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride, std::size_t pad) {
    require_dim(x, 3, "conv1d input");
    require_dim(w, 3, "conv1d weight");
    const auto x4 = reshape(x, {x.size(0), x.size(1), 1, x.size(2)});
    const auto w4 = reshape(w, {w.size(0), w.size(1), 1, w.size(2)});
    const auto y = conv2d(x4, w4, bias, {1, stride, 0, pad});
    return reshape(y, {y.size(0), y.size(1), y.size(3)});
}

Tensor conv_transpose1d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride) {
    require_dim(x, 3, "conv_transpose1d input");
    require_dim(w, 3, "conv_transpose1d weight");
    const std::size_t N = x.size(0), C = x.size(1), L = x.size(2);
    const std::size_t O = w.size(1), k = w.size(2);
    if (w.size(0) != C) throw DimensionError("conv_transpose1d channels " + shape_str(x.shape()) + " vs " + shape_str(w.shape()));
    if (bias.defined() && bias.numel() != O) throw DimensionError("conv_transpose1d bias size");
    if (stride == 0 || L == 0) throw DimensionError("conv_transpose1d needs a positive stride and length");
    const std::size_t Lo = (L - 1) * stride + k;
    const std::size_t NL = N * L;

    RowMat xm(C, NL);
    const auto xv = x.data();
    for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t c = 0; c < C; ++c) {
            for (std::size_t l = 0; l < L; ++l) xm(c, n * L + l) = xv[(n * C + c) * L + l];
        }
    }
    RowMat cols = CMapM(w.data().data(), C, O * k).transpose() * xm;
    std::vector<double> out(N * O * Lo, 0.0);
    for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t o = 0; o < O; ++o) {
            double* dst = out.data() + (n * O + o) * Lo;
            if (bias.defined()) std::fill(dst, dst + Lo, bias.data()[o]);
            for (std::size_t j = 0; j < k; ++j) {
                for (std::size_t l = 0; l < L; ++l) dst[l * stride + j] += cols(o * k + j, n * L + l);
            }
        }
    }
    Node* px = raw(x);
    Node* pw = raw(w);
    Node* pb = raw(bias);
    return make_result(
        {N, O, Lo}, std::move(out), {x, w, bias},
        [=, xm = std::move(xm)](Node& nd) {
            RowMat g(O * k, NL);
            for (std::size_t n = 0; n < N; ++n) {
                for (std::size_t o = 0; o < O; ++o) {
                    const double* src = nd.grad.data() + (n * O + o) * Lo;
                    for (std::size_t j = 0; j < k; ++j) {
                        for (std::size_t l = 0; l < L; ++l) g(o * k + j, n * L + l) = src[l * stride + j];
                    }
                }
            }
            if (wants(pb)) {
                auto& gb = pb->grad_buffer();
                for (std::size_t n = 0; n < N; ++n) {
                    for (std::size_t o = 0; o < O; ++o) {
                        const double* src = nd.grad.data() + (n * O + o) * Lo;
                        for (std::size_t i = 0; i < Lo; ++i) gb[o] += src[i];
                    }
                }
            }
            if (wants(pw)) MapM(pw->grad_buffer().data(), C, O * k).noalias() += xm * g.transpose();
            if (wants(px)) {
                RowMat dx = CMapM(pw->value.data(), C, O * k) * g;
                auto& gx = px->grad_buffer();
                for (std::size_t n = 0; n < N; ++n) {
                    for (std::size_t c = 0; c < C; ++c) {
                        for (std::size_t l = 0; l < L; ++l) gx[(n * C + c) * L + l] += dx(c, n * L + l);
                    }
                }
            }
        },
        "conv_transpose1d");
}

std::pair<Tensor, Tensor> scaled_dot_product_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
    if (q.dim() < 2) throw DimensionError("attention needs rank >= 2");
    const double d = static_cast<double>(q.shape().back());
    const auto scores = scale(matmul(q, transpose(k, k.dim() - 2, k.dim() - 1)), 1.0 / std::sqrt(d));
    auto weights = softmax(scores);
    auto out = matmul(weights, v);
    return {out, weights};
}

}  // namespace acousticpose::ad
