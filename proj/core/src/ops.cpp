#include "vsd/ops.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <limits>

namespace vsd::tensor {

// Internal builder: computes have already produced the output payload; this
// attaches a node to the active graph when any input participates in it.
struct OpBuilder {
    using BackwardFactory = std::function<Graph::BackwardFn(const Tensor& out)>;

    static bool tracked(const Tensor& t, const Graph* g) {
        return g != nullptr && t.requires_grad() && t.graph_id() == g->id();
    }

    static Tensor make(Shape shape, std::vector<double> data,
                       std::initializer_list<const Tensor*> inputs,
                       const BackwardFactory& backward_factory) {
        Tensor out = Tensor::from_data(std::move(shape), std::move(data));
        attach(out, inputs, backward_factory);
        return out;
    }

    static Tensor make_view(Shape shape, const Tensor& src,
                            std::initializer_list<const Tensor*> inputs,
                            const BackwardFactory& backward_factory) {
        if (shape_numel(shape) != src.numel())
            throw std::invalid_argument("reshape: element count mismatch " + shape_str(shape));
        Tensor out;
        out.shape_ = std::move(shape);
        out.data_ = src.data_;
        attach(out, inputs, backward_factory);
        return out;
    }

    static Tensor constant_view(Shape shape, const Tensor& src) {
        Tensor out;
        out.shape_ = std::move(shape);
        out.data_ = src.data_;
        return out;
    }

private:
    static void attach(Tensor& out, std::initializer_list<const Tensor*> inputs,
                       const BackwardFactory& backward_factory) {
        Graph* g = Graph::active();
        if (!g) return;
        bool any = false;
        for (const Tensor* t : inputs) any = any || tracked(*t, g);
        if (!any) return;
        out.graph_ = g->id();
        out.node_ = g->add_node(out.shape_, backward_factory(out), false);
    }
};

}  // namespace vsd::tensor

namespace vsd::ops {

namespace {

using tensor::Graph;
using tensor::GradSink;
using tensor::OpBuilder;
using tensor::shape_str;

bool tracked(const Tensor& t) { return OpBuilder::tracked(t, Graph::active()); }

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
}

void require_2d(const Tensor& a, const char* op) {
    if (a.ndim() != 2) throw std::invalid_argument(std::string(op) + ": expected 2-D, got " + shape_str(a.shape()));
}

void require_4d(const Tensor& a, const char* op) {
    if (a.ndim() != 4) throw std::invalid_argument(std::string(op) + ": expected 4-D, got " + shape_str(a.shape()));
}

void axpy(double a, const double* x, double* y, int64_t n) {
    for (int64_t i = 0; i < n; ++i) y[i] += a * x[i];
}

double dot(const double* a, const double* b, int64_t n) {
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

// C(M,N) += A(M,K) B(K,N)
void gemm_nn(int64_t m_count, int64_t n_count, int64_t k_count, const double* a, const double* b,
             double* c) {
    for (int64_t m = 0; m < m_count; ++m) {
        const double* arow = a + m * k_count;
        double* crow = c + m * n_count;
        for (int64_t k = 0; k < k_count; ++k) {
            const double av = arow[k];
            if (av == 0.0) continue;
            axpy(av, b + k * n_count, crow, n_count);
        }
    }
}

// C(M,N) += A(M,K) B(N,K)^T
void gemm_nt(int64_t m_count, int64_t n_count, int64_t k_count, const double* a, const double* b,
             double* c) {
    for (int64_t m = 0; m < m_count; ++m) {
        const double* arow = a + m * k_count;
        double* crow = c + m * n_count;
        for (int64_t n = 0; n < n_count; ++n) crow[n] += dot(arow, b + n * k_count, k_count);
    }
}

// C(M,N) += A(K,M)^T B(K,N)
void gemm_tn(int64_t m_count, int64_t n_count, int64_t k_count, const double* a, const double* b,
             double* c) {
    for (int64_t k = 0; k < k_count; ++k) {
        const double* arow = a + k * m_count;
        const double* brow = b + k * n_count;
        for (int64_t m = 0; m < m_count; ++m) {
            const double av = arow[m];
            if (av == 0.0) continue;
            axpy(av, brow, c + m * n_count, n_count);
        }
    }
}

double sigmoid_value(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Tensor elementwise_unary(const Tensor& a, const std::function<double(double)>& f,
                         // dL/da as a function of (a_i, out_i, g_i)
                         const std::function<double(double, double, double)>& df) {
    const auto& ad = a.data();
    std::vector<double> out(ad.size());
    for (size_t i = 0; i < ad.size(); ++i) out[i] = f(ad[i]);
    return OpBuilder::make(a.shape(), std::move(out), {&a}, [a, df](const Tensor& result) {
        return [a, result, df](const Tensor& grad, GradSink& sink) {
            if (!a.requires_grad()) return;
            auto& ga = sink.accum(a.node_id());
            const auto& ad = a.data();
            const auto& od = result.data();
            const auto& gd = grad.data();
            for (size_t i = 0; i < gd.size(); ++i) ga[i] += df(ad[i], od[i], gd[i]);
        };
    });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    const auto& ad = a.data();
    const auto& bd = b.data();
    std::vector<double> out(ad.size());
    for (size_t i = 0; i < ad.size(); ++i) out[i] = ad[i] + bd[i];
    return OpBuilder::make(a.shape(), std::move(out), {&a, &b}, [a, b](const Tensor&) {
        return [a, b](const Tensor& grad, GradSink& sink) {
            const auto& gd = grad.data();
            if (a.requires_grad()) {
                auto& ga = sink.accum(a.node_id());
                for (size_t i = 0; i < gd.size(); ++i) ga[i] += gd[i];
            }
            if (b.requires_grad()) {
                auto& gb = sink.accum(b.node_id());
                for (size_t i = 0; i < gd.size(); ++i) gb[i] += gd[i];
            }
        };
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    const auto& ad = a.data();
    const auto& bd = b.data();
    std::vector<double> out(ad.size());
    for (size_t i = 0; i < ad.size(); ++i) out[i] = ad[i] - bd[i];
    return OpBuilder::make(a.shape(), std::move(out), {&a, &b}, [a, b](const Tensor&) {
        return [a, b](const Tensor& grad, GradSink& sink) {
            const auto& gd = grad.data();
            if (a.requires_grad()) {
                auto& ga = sink.accum(a.node_id());
                for (size_t i = 0; i < gd.size(); ++i) ga[i] += gd[i];
            }
            if (b.requires_grad()) {
                auto& gb = sink.accum(b.node_id());
                for (size_t i = 0; i < gd.size(); ++i) gb[i] -= gd[i];
            }
        };
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    const auto& ad = a.data();
    const auto& bd = b.data();
    std::vector<double> out(ad.size());
    for (size_t i = 0; i < ad.size(); ++i) out[i] = ad[i] * bd[i];
    return OpBuilder::make(a.shape(), std::move(out), {&a, &b}, [a, b](const Tensor&) {
        return [a, b](const Tensor& grad, GradSink& sink) {
            const auto& gd = grad.data();
            const auto& ad = a.data();
            const auto& bd = b.data();
            if (a.requires_grad()) {
                auto& ga = sink.accum(a.node_id());
                for (size_t i = 0; i < gd.size(); ++i) ga[i] += gd[i] * bd[i];
            }
            if (b.requires_grad()) {
                auto& gb = sink.accum(b.node_id());
                for (size_t i = 0; i < gd.size(); ++i) gb[i] += gd[i] * ad[i];
            }
        };
    });
}

Tensor neg(const Tensor& a) {
    return elementwise_unary(
        a, [](double x) { return -x; }, [](double, double, double g) { return -g; });
}

Tensor add_scalar(const Tensor& a, double s) {
    return elementwise_unary(
        a, [s](double x) { return x + s; }, [](double, double, double g) { return g; });
}

Tensor scale(const Tensor& a, double s) {
    return elementwise_unary(
        a, [s](double x) { return x * s; }, [s](double, double, double g) { return g * s; });
}

Tensor scale(const Tensor& a, const Tensor& s) {
    if (s.numel() != 1) throw std::invalid_argument("scale: multiplier must be one element");
    const double sv = s.data()[0];
    const auto& ad = a.data();
    std::vector<double> out(ad.size());
    for (size_t i = 0; i < ad.size(); ++i) out[i] = ad[i] * sv;
    return OpBuilder::make(a.shape(), std::move(out), {&a, &s}, [a, s, sv](const Tensor&) {
        return [a, s, sv](const Tensor& grad, GradSink& sink) {
            const auto& gd = grad.data();
            if (a.requires_grad()) {
                auto& ga = sink.accum(a.node_id());
                for (size_t i = 0; i < gd.size(); ++i) ga[i] += gd[i] * sv;
            }
            if (s.requires_grad()) {
                auto& gs = sink.accum(s.node_id());
                const auto& ad = a.data();
                double acc = 0.0;
                for (size_t i = 0; i < gd.size(); ++i) acc += gd[i] * ad[i];
                gs[0] += acc;
            }
        };
    });
}

Tensor exp(const Tensor& a) {
    return elementwise_unary(
        a, [](double x) { return std::exp(x); },
        [](double, double y, double g) { return g * y; });
}

Tensor log(const Tensor& a) {
    return elementwise_unary(
        a, [](double x) { return std::log(x); },
        [](double x, double, double g) { return g / x; });
}

Tensor sigmoid(const Tensor& a) {
    return elementwise_unary(
        a, [](double x) { return sigmoid_value(x); },
        [](double, double y, double g) { return g * y * (1.0 - y); });
}

Tensor silu(const Tensor& a) {
    return elementwise_unary(
        a, [](double x) { return x * sigmoid_value(x); },
        [](double x, double, double g) {
            const double s = sigmoid_value(x);
            return g * (s + x * s * (1.0 - s));
        });
}

Tensor sum(const Tensor& a) {
    double acc = 0.0;
    for (double v : a.data()) acc += v;
    return OpBuilder::make({}, {acc}, {&a}, [a](const Tensor&) {
        return [a](const Tensor& grad, GradSink& sink) {
            if (!a.requires_grad()) return;
            const double g = grad.data()[0];
            auto& ga = sink.accum(a.node_id());
            for (auto& v : ga) v += g;
        };
    });
}

Tensor mean(const Tensor& a) {
    const double inv = 1.0 / static_cast<double>(a.numel());
    double acc = 0.0;
    for (double v : a.data()) acc += v;
    return OpBuilder::make({}, {acc * inv}, {&a}, [a, inv](const Tensor&) {
        return [a, inv](const Tensor& grad, GradSink& sink) {
            if (!a.requires_grad()) return;
            const double g = grad.data()[0] * inv;
            auto& ga = sink.accum(a.node_id());
            for (auto& v : ga) v += g;
        };
    });
}

Tensor mse(const Tensor& a, const Tensor& b) {
    const Tensor d = sub(a, b);
    return mean(mul(d, d));
}

Tensor reshape(const Tensor& a, Shape shape) {
    return OpBuilder::make_view(std::move(shape), a, {&a}, [a](const Tensor&) {
        return [a](const Tensor& grad, GradSink& sink) {
            if (!a.requires_grad()) return;
            auto& ga = sink.accum(a.node_id());
            const auto& gd = grad.data();
            for (size_t i = 0; i < gd.size(); ++i) ga[i] += gd[i];
        };
    });
}

Tensor detach(const Tensor& a) { return OpBuilder::constant_view(a.shape(), a); }

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_2d(a, "matmul");
    require_2d(b, "matmul");
    const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k)
        throw std::invalid_argument("matmul: inner dimensions " + shape_str(a.shape()) + " x " +
                                    shape_str(b.shape()));
    std::vector<double> out(static_cast<size_t>(m * n), 0.0);
    gemm_nn(m, n, k, a.data().data(), b.data().data(), out.data());
    return OpBuilder::make({m, n}, std::move(out), {&a, &b}, [a, b, m, n, k](const Tensor&) {
        return [a, b, m, n, k](const Tensor& grad, GradSink& sink) {
            const double* g = grad.data().data();
            if (a.requires_grad()) {
                auto& ga = sink.accum(a.node_id());
                gemm_nt(m, k, n, g, b.data().data(), ga.data());
            }
            if (b.requires_grad()) {
                auto& gb = sink.accum(b.node_id());
                gemm_tn(k, n, m, a.data().data(), g, gb.data());
            }
        };
    });
}

Tensor transpose(const Tensor& a) {
    require_2d(a, "transpose");
    const int64_t m = a.dim(0), n = a.dim(1);
    const auto& ad = a.data();
    std::vector<double> out(ad.size());
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) out[static_cast<size_t>(j * m + i)] = ad[static_cast<size_t>(i * n + j)];
    return OpBuilder::make({n, m}, std::move(out), {&a}, [a, m, n](const Tensor&) {
        return [a, m, n](const Tensor& grad, GradSink& sink) {
            if (!a.requires_grad()) return;
            auto& ga = sink.accum(a.node_id());
            const auto& gd = grad.data();
            for (int64_t j = 0; j < n; ++j)
                for (int64_t i = 0; i < m; ++i)
                    ga[static_cast<size_t>(i * n + j)] += gd[static_cast<size_t>(j * m + i)];
        };
    });
}

Tensor softmax_rows(const Tensor& a) {
    require_2d(a, "softmax_rows");
    const int64_t rows = a.dim(0), cols = a.dim(1);
    const auto& ad = a.data();
    std::vector<double> out(ad.size());
    for (int64_t r = 0; r < rows; ++r) {
        const double* x = ad.data() + r * cols;
        double* y = out.data() + r * cols;
        double mx = x[0];
        for (int64_t c = 1; c < cols; ++c) mx = std::max(mx, x[c]);
        double z = 0.0;
        for (int64_t c = 0; c < cols; ++c) {
            y[c] = std::exp(x[c] - mx);
            z += y[c];
        }
        const double inv = 1.0 / z;
        for (int64_t c = 0; c < cols; ++c) y[c] *= inv;
    }
    return OpBuilder::make(a.shape(), std::move(out), {&a}, [a, rows, cols](const Tensor& result) {
        return [a, result, rows, cols](const Tensor& grad, GradSink& sink) {
            if (!a.requires_grad()) return;
            auto& ga = sink.accum(a.node_id());
            const auto& y = result.data();
            const auto& g = grad.data();
            for (int64_t r = 0; r < rows; ++r) {
                const double* yr = y.data() + r * cols;
                const double* gr = g.data() + r * cols;
                double inner = 0.0;
                for (int64_t c = 0; c < cols; ++c) inner += yr[c] * gr[c];
                double* dst = ga.data() + r * cols;
                for (int64_t c = 0; c < cols; ++c) dst[c] += yr[c] * (gr[c] - inner);
            }
        };
    });
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
    require_2d(a, "concat_rows");
    require_2d(b, "concat_rows");
    if (a.dim(1) != b.dim(1))
        throw std::invalid_argument("concat_rows: column mismatch " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
    const int64_t cols = a.dim(1);
    const auto& ad = a.data();
    const auto& bd = b.data();
    std::vector<double> out;
    out.reserve(ad.size() + bd.size());
    out.insert(out.end(), ad.begin(), ad.end());
    out.insert(out.end(), bd.begin(), bd.end());
    return OpBuilder::make({a.dim(0) + b.dim(0), cols}, std::move(out), {&a, &b}, [a, b](const Tensor&) {
        return [a, b](const Tensor& grad, GradSink& sink) {
            const auto& gd = grad.data();
            const size_t na = a.data().size();
            if (a.requires_grad()) {
                auto& ga = sink.accum(a.node_id());
                for (size_t i = 0; i < na; ++i) ga[i] += gd[i];
            }
            if (b.requires_grad()) {
                auto& gb = sink.accum(b.node_id());
                for (size_t i = 0; i < gb.size(); ++i) gb[i] += gd[na + i];
            }
        };
    });
}

Tensor take_rows(const Tensor& a, const std::vector<int64_t>& rows) {
    require_2d(a, "take_rows");
    const int64_t cols = a.dim(1);
    for (int64_t r : rows)
        if (r < 0 || r >= a.dim(0)) throw std::out_of_range("take_rows: row index out of range");
    const auto& ad = a.data();
    std::vector<double> out(rows.size() * static_cast<size_t>(cols));
    for (size_t i = 0; i < rows.size(); ++i)
        std::memcpy(out.data() + i * cols, ad.data() + rows[i] * cols, sizeof(double) * cols);
    return OpBuilder::make({static_cast<int64_t>(rows.size()), cols}, std::move(out), {&a},
                           [a, rows, cols](const Tensor&) {
                               return [a, rows, cols](const Tensor& grad, GradSink& sink) {
                                   if (!a.requires_grad()) return;
                                   auto& ga = sink.accum(a.node_id());
                                   const auto& gd = grad.data();
                                   for (size_t i = 0; i < rows.size(); ++i)
                                       axpy(1.0, gd.data() + i * cols, ga.data() + rows[i] * cols, cols);
                               };
                           });
}

Tensor embedding_lookup(const Tensor& table, const std::vector<int64_t>& ids) {
    require_2d(table, "embedding_lookup");
    return take_rows(table, ids);
}

Tensor cross_entropy_rows(const Tensor& logits, const std::vector<int64_t>& targets) {
    require_2d(logits, "cross_entropy_rows");
    const int64_t rows = logits.dim(0), cols = logits.dim(1);
    if (static_cast<int64_t>(targets.size()) != rows)
        throw std::invalid_argument("cross_entropy_rows: target count mismatch");
    for (int64_t t : targets)
        if (t < 0 || t >= cols) throw std::out_of_range("cross_entropy_rows: target class out of range");
    const auto& x = logits.data();
    double total = 0.0;
    for (int64_t r = 0; r < rows; ++r) {
        const double* xr = x.data() + r * cols;
        double mx = xr[0];
        for (int64_t c = 1; c < cols; ++c) mx = std::max(mx, xr[c]);
        double z = 0.0;
        for (int64_t c = 0; c < cols; ++c) z += std::exp(xr[c] - mx);
        total += mx + std::log(z) - xr[targets[static_cast<size_t>(r)]];
    }
    const double inv = 1.0 / static_cast<double>(rows);
    return OpBuilder::make({}, {total * inv}, {&logits}, [logits, targets, rows, cols, inv](const Tensor&) {
        return [logits, targets, rows, cols, inv](const Tensor& grad, GradSink& sink) {
            if (!logits.requires_grad()) return;
            auto& gl = sink.accum(logits.node_id());
            const double g = grad.data()[0] * inv;
            const auto& x = logits.data();
            for (int64_t r = 0; r < rows; ++r) {
                const double* xr = x.data() + r * cols;
                double* dst = gl.data() + r * cols;
                double mx = xr[0];
                for (int64_t c = 1; c < cols; ++c) mx = std::max(mx, xr[c]);
                double z = 0.0;
                for (int64_t c = 0; c < cols; ++c) z += std::exp(xr[c] - mx);
                const double invz = 1.0 / z;
                for (int64_t c = 0; c < cols; ++c) dst[c] += g * std::exp(xr[c] - mx) * invz;
                dst[targets[static_cast<size_t>(r)]] -= g;
            }
        };
    });
}

Tensor l2_normalize_rows(const Tensor& a, double eps) {
    if (a.ndim() < 1) throw std::invalid_argument("l2_normalize_rows: scalar input");
    const int64_t cols = a.dim(a.ndim() - 1);
    const int64_t rows = a.numel() / cols;
    const auto& ad = a.data();
    std::vector<double> out(ad.size());
    std::vector<double> inv_norm(static_cast<size_t>(rows));
    for (int64_t r = 0; r < rows; ++r) {
        const double* x = ad.data() + r * cols;
        const double norm = std::sqrt(dot(x, x, cols) + eps);
        const double inv = 1.0 / norm;
        inv_norm[static_cast<size_t>(r)] = inv;
        for (int64_t c = 0; c < cols; ++c) out[static_cast<size_t>(r * cols + c)] = x[c] * inv;
    }
    return OpBuilder::make(a.shape(), std::move(out), {&a},
                           [a, rows, cols, inv_norm = std::move(inv_norm)](const Tensor&) {
                               return [a, rows, cols, inv_norm](const Tensor& grad, GradSink& sink) {
                                   if (!a.requires_grad()) return;
                                   auto& ga = sink.accum(a.node_id());
                                   const auto& ad = a.data();
                                   const auto& gd = grad.data();
                                   for (int64_t r = 0; r < rows; ++r) {
                                       const double* x = ad.data() + r * cols;
                                       const double* g = gd.data() + r * cols;
                                       double* dst = ga.data() + r * cols;
                                       const double inv = inv_norm[static_cast<size_t>(r)];
                                       const double gx = dot(g, x, cols);
                                       const double inv3 = inv * inv * inv;
                                       for (int64_t c = 0; c < cols; ++c)
                                           dst[c] += g[c] * inv - x[c] * gx * inv3;
                                   }
                               };
                           });
}

Tensor rms_norm(const Tensor& a, double eps) {
    const int64_t cols = a.dim(a.ndim() - 1);
    return scale(l2_normalize_rows(a, eps * static_cast<double>(cols)),
                 std::sqrt(static_cast<double>(cols)));
}

Tensor add_channel_bias(const Tensor& a, const Tensor& bias) {
    if (bias.ndim() != 1)
        throw std::invalid_argument("add_channel_bias: bias must be 1-D, got " + shape_str(bias.shape()));
    const int64_t cols = a.dim(a.ndim() - 1);
    if (bias.dim(0) != cols)
        throw std::invalid_argument("add_channel_bias: channel mismatch " + shape_str(a.shape()) +
                                    " vs " + shape_str(bias.shape()));
    const int64_t rows = a.numel() / cols;
    const auto& ad = a.data();
    const auto& bd = bias.data();
    std::vector<double> out(ad.size());
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < cols; ++c)
            out[static_cast<size_t>(r * cols + c)] = ad[static_cast<size_t>(r * cols + c)] + bd[static_cast<size_t>(c)];
    return OpBuilder::make(a.shape(), std::move(out), {&a, &bias}, [a, bias, rows, cols](const Tensor&) {
        return [a, bias, rows, cols](const Tensor& grad, GradSink& sink) {
            const auto& gd = grad.data();
            if (a.requires_grad()) {
                auto& ga = sink.accum(a.node_id());
                for (size_t i = 0; i < gd.size(); ++i) ga[i] += gd[i];
            }
            if (bias.requires_grad()) {
                auto& gb = sink.accum(bias.node_id());
                for (int64_t r = 0; r < rows; ++r)
                    for (int64_t c = 0; c < cols; ++c) gb[static_cast<size_t>(c)] += gd[static_cast<size_t>(r * cols + c)];
            }
        };
    });
}

Tensor global_mean_channels(const Tensor& a) {
    if (a.ndim() < 2) throw std::invalid_argument("global_mean_channels: need at least 2-D");
    const int64_t cols = a.dim(a.ndim() - 1);
    const int64_t rows = a.numel() / cols;
    const double inv = 1.0 / static_cast<double>(rows);
    const auto& ad = a.data();
    std::vector<double> out(static_cast<size_t>(cols), 0.0);
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < cols; ++c) out[static_cast<size_t>(c)] += ad[static_cast<size_t>(r * cols + c)];
    for (auto& v : out) v *= inv;
    return OpBuilder::make({1, cols}, std::move(out), {&a}, [a, rows, cols, inv](const Tensor&) {
        return [a, rows, cols, inv](const Tensor& grad, GradSink& sink) {
            if (!a.requires_grad()) return;
            auto& ga = sink.accum(a.node_id());
            const auto& gd = grad.data();
            for (int64_t r = 0; r < rows; ++r)
                for (int64_t c = 0; c < cols; ++c) ga[static_cast<size_t>(r * cols + c)] += gd[static_cast<size_t>(c)] * inv;
        };
    });
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v) {
    require_2d(q, "attention");
    require_2d(k, "attention");
    require_2d(v, "attention");
    if (q.dim(1) != k.dim(1))
        throw std::invalid_argument("attention: query/key width mismatch " + shape_str(q.shape()) +
                                    " vs " + shape_str(k.shape()));
    if (k.dim(0) != v.dim(0))
        throw std::invalid_argument("attention: key/value length mismatch " + shape_str(k.shape()) +
                                    " vs " + shape_str(v.shape()));
    if (q.dim(0) < 1) throw std::invalid_argument("attention: empty query");
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(q.dim(1)));
    const Tensor scores = scale(matmul(q, transpose(k)), inv_sqrt_d);
    const Tensor weights = softmax_rows(scores);
    return matmul(weights, v);
}

Tensor temporal_conv(const Tensor& h, const Tensor& kernel) {
    require_4d(h, "temporal_conv");
    const int64_t frames = h.dim(0), height = h.dim(1), width = h.dim(2), channels = h.dim(3);
    const bool shared = kernel.ndim() == 1;
    if (!shared && kernel.ndim() != 2)
        throw std::invalid_argument("temporal_conv: kernel must be (k) or (k,C), got " +
                                    shape_str(kernel.shape()));
    const int64_t taps = kernel.dim(0);
    if (taps % 2 == 0) throw std::invalid_argument("temporal_conv: kernel size must be odd");
    if (!shared && kernel.dim(1) != channels)
        throw std::invalid_argument("temporal_conv: kernel channels " + shape_str(kernel.shape()) +
                                    " vs input " + shape_str(h.shape()));
    const int64_t radius = taps / 2;
    const int64_t plane = height * width * channels;
    const auto& hd = h.data();
    const auto& kd = kernel.data();
    std::vector<double> out(hd.size(), 0.0);
    for (int64_t f = 0; f < frames; ++f) {
        double* dst = out.data() + f * plane;
        for (int64_t j = 0; j < taps; ++j) {
            const int64_t src_f = std::clamp(f + j - radius, int64_t{0}, frames - 1);
            const double* src = hd.data() + src_f * plane;
            if (shared) {
                axpy(kd[static_cast<size_t>(j)], src, dst, plane);
            } else {
                const double* kr = kd.data() + j * channels;
                for (int64_t p = 0; p < height * width; ++p)
                    for (int64_t c = 0; c < channels; ++c)
                        dst[p * channels + c] += kr[c] * src[p * channels + c];
            }
        }
    }
    return OpBuilder::make(h.shape(), std::move(out), {&h, &kernel},
                           [h, kernel, frames, plane, taps, radius, channels, shared](const Tensor&) {
        return [h, kernel, frames, plane, taps, radius, channels, shared](const Tensor& grad, GradSink& sink) {
            const auto& gd = grad.data();
            const auto& hd = h.data();
            const auto& kd = kernel.data();
            const int64_t pixels = plane / channels;
            if (h.requires_grad()) {
                auto& gh = sink.accum(h.node_id());
                for (int64_t f = 0; f < frames; ++f) {
                    const double* g = gd.data() + f * plane;
                    for (int64_t j = 0; j < taps; ++j) {
                        const int64_t src_f = std::clamp(f + j - radius, int64_t{0}, frames - 1);
                        double* dst = gh.data() + src_f * plane;
                        if (shared) {
                            axpy(kd[static_cast<size_t>(j)], g, dst, plane);
                        } else {
                            const double* kr = kd.data() + j * channels;
                            for (int64_t p = 0; p < pixels; ++p)
                                for (int64_t c = 0; c < channels; ++c)
                                    dst[p * channels + c] += kr[c] * g[p * channels + c];
                        }
                    }
                }
            }
            if (kernel.requires_grad()) {
                auto& gk = sink.accum(kernel.node_id());
                for (int64_t f = 0; f < frames; ++f) {
                    const double* g = gd.data() + f * plane;
                    for (int64_t j = 0; j < taps; ++j) {
                        const int64_t src_f = std::clamp(f + j - radius, int64_t{0}, frames - 1);
                        const double* src = hd.data() + src_f * plane;
                        if (shared) {
                            gk[static_cast<size_t>(j)] += dot(g, src, plane);
                        } else {
                            double* kr = gk.data() + j * channels;
                            for (int64_t p = 0; p < pixels; ++p)
                                for (int64_t c = 0; c < channels; ++c)
                                    kr[c] += g[p * channels + c] * src[p * channels + c];
                        }
                    }
                }
            }
        };
    });
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias) {
    require_4d(x, "conv2d");
    require_4d(w, "conv2d weight");
    const int64_t frames = x.dim(0), height = x.dim(1), width = x.dim(2), cin = x.dim(3);
    const int64_t cout = w.dim(0), kh = w.dim(1), kw = w.dim(2);
    if (w.dim(3) != cin)
        throw std::invalid_argument("conv2d: weight channels " + shape_str(w.shape()) + " vs input " +
                                    shape_str(x.shape()));
    if (kh % 2 == 0 || kw % 2 == 0) throw std::invalid_argument("conv2d: kernel extents must be odd");
    const bool has_bias = bias.defined();
    if (has_bias && (bias.ndim() != 1 || bias.dim(0) != cout))
        throw std::invalid_argument("conv2d: bias shape " + shape_str(bias.shape()));
    const int64_t rh = kh / 2, rw = kw / 2;
    const auto& xd = x.data();
    const auto& wd = w.data();
    std::vector<double> out(static_cast<size_t>(frames * height * width * cout), 0.0);
    if (has_bias) {
        const auto& bd = bias.data();
        for (int64_t p = 0; p < frames * height * width; ++p)
            std::memcpy(out.data() + p * cout, bd.data(), sizeof(double) * cout);
    }
    for (int64_t f = 0; f < frames; ++f) {
        for (int64_t y = 0; y < height; ++y) {
            for (int64_t xc = 0; xc < width; ++xc) {
                double* dst = out.data() + ((f * height + y) * width + xc) * cout;
                for (int64_t dy = 0; dy < kh; ++dy) {
                    const int64_t yy = y + dy - rh;
                    if (yy < 0 || yy >= height) continue;
                    for (int64_t dx = 0; dx < kw; ++dx) {
                        const int64_t xx = xc + dx - rw;
                        if (xx < 0 || xx >= width) continue;
                        const double* src = xd.data() + ((f * height + yy) * width + xx) * cin;
                        const double* wrow = wd.data() + (dy * kw + dx) * cin;
                        for (int64_t co = 0; co < cout; ++co)
                            dst[co] += dot(src, wrow + co * kh * kw * cin, cin);
                    }
                }
            }
        }
    }
    return OpBuilder::make({frames, height, width, cout}, std::move(out), {&x, &w, &bias},
                           [x, w, bias, frames, height, width, cin, cout, kh, kw, rh, rw](const Tensor&) {
        return [x, w, bias, frames, height, width, cin, cout, kh, kw, rh, rw](const Tensor& grad,
                                                                               GradSink& sink) {
            const auto& gd = grad.data();
            const auto& xd = x.data();
            const auto& wd = w.data();
            const bool need_x = x.requires_grad();
            const bool need_w = w.requires_grad();
            std::vector<double>* gx = need_x ? &sink.accum(x.node_id()) : nullptr;
            std::vector<double>* gw = need_w ? &sink.accum(w.node_id()) : nullptr;
            if (bias.defined() && bias.requires_grad()) {
                auto& gb = sink.accum(bias.node_id());
                for (int64_t p = 0; p < frames * height * width; ++p)
                    for (int64_t co = 0; co < cout; ++co) gb[static_cast<size_t>(co)] += gd[static_cast<size_t>(p * cout + co)];
            }
            if (!need_x && !need_w) return;
            for (int64_t f = 0; f < frames; ++f) {
                for (int64_t y = 0; y < height; ++y) {
                    for (int64_t xc = 0; xc < width; ++xc) {
                        const double* g = gd.data() + ((f * height + y) * width + xc) * cout;
                        for (int64_t dy = 0; dy < kh; ++dy) {
                            const int64_t yy = y + dy - rh;
                            if (yy < 0 || yy >= height) continue;
                            for (int64_t dx = 0; dx < kw; ++dx) {
                                const int64_t xx = xc + dx - rw;
                                if (xx < 0 || xx >= width) continue;
                                const int64_t src_off = ((f * height + yy) * width + xx) * cin;
                                const int64_t w_off = (dy * kw + dx) * cin;
                                for (int64_t co = 0; co < cout; ++co) {
                                    const double gv = g[co];
                                    if (gv == 0.0) continue;
                                    if (need_w)
                                        axpy(gv, xd.data() + src_off,
                                             gw->data() + w_off + co * kh * kw * cin, cin);
                                    if (need_x)
                                        axpy(gv, wd.data() + w_off + co * kh * kw * cin,
                                             gx->data() + src_off, cin);
                                }
                            }
                        }
                    }
                }
            }
        };
    });
}

Tensor avg_pool_hw(const Tensor& x, int factor) {
    require_4d(x, "avg_pool_hw");
    if (factor < 1) throw std::invalid_argument("avg_pool_hw: factor must be positive");
    const int64_t frames = x.dim(0), height = x.dim(1), width = x.dim(2), channels = x.dim(3);
    if (height % factor != 0 || width % factor != 0)
        throw std::invalid_argument("avg_pool_hw: factor " + std::to_string(factor) +
                                    " does not divide spatial size " + shape_str(x.shape()));
    if (factor == 1) return reshape(x, x.shape());
    const int64_t oh = height / factor, ow = width / factor;
    const double inv = 1.0 / static_cast<double>(factor * factor);
    const auto& xd = x.data();
    std::vector<double> out(static_cast<size_t>(frames * oh * ow * channels), 0.0);
    for (int64_t f = 0; f < frames; ++f)
        for (int64_t y = 0; y < height; ++y)
            for (int64_t xc = 0; xc < width; ++xc) {
                const double* src = xd.data() + ((f * height + y) * width + xc) * channels;
                double* dst = out.data() + ((f * oh + y / factor) * ow + xc / factor) * channels;
                axpy(inv, src, dst, channels);
            }
    return OpBuilder::make({frames, oh, ow, channels}, std::move(out), {&x},
                           [x, frames, height, width, channels, factor, oh, ow, inv](const Tensor&) {
        return [x, frames, height, width, channels, factor, oh, ow, inv](const Tensor& grad, GradSink& sink) {
            if (!x.requires_grad()) return;
            auto& gx = sink.accum(x.node_id());
            const auto& gd = grad.data();
            for (int64_t f = 0; f < frames; ++f)
                for (int64_t y = 0; y < height; ++y)
                    for (int64_t xc = 0; xc < width; ++xc) {
                        const double* g = gd.data() + ((f * oh + y / factor) * ow + xc / factor) * channels;
                        double* dst = gx.data() + ((f * height + y) * width + xc) * channels;
                        axpy(inv, g, dst, channels);
                    }
        };
    });
}

Tensor upsample_nearest_hw(const Tensor& x, int factor) {
    require_4d(x, "upsample_nearest_hw");
    if (factor < 1) throw std::invalid_argument("upsample_nearest_hw: factor must be positive");
    if (factor == 1) return reshape(x, x.shape());
    const int64_t frames = x.dim(0), height = x.dim(1), width = x.dim(2), channels = x.dim(3);
    const int64_t oh = height * factor, ow = width * factor;
    const auto& xd = x.data();
    std::vector<double> out(static_cast<size_t>(frames * oh * ow * channels));
    for (int64_t f = 0; f < frames; ++f)
        for (int64_t y = 0; y < oh; ++y)
            for (int64_t xc = 0; xc < ow; ++xc) {
                const double* src = xd.data() + ((f * height + y / factor) * width + xc / factor) * channels;
                double* dst = out.data() + ((f * oh + y) * ow + xc) * channels;
                std::memcpy(dst, src, sizeof(double) * channels);
            }
    return OpBuilder::make({frames, oh, ow, channels}, std::move(out), {&x},
                           [x, frames, height, width, channels, factor, oh, ow](const Tensor&) {
        return [x, frames, height, width, channels, factor, oh, ow](const Tensor& grad, GradSink& sink) {
            if (!x.requires_grad()) return;
            auto& gx = sink.accum(x.node_id());
            const auto& gd = grad.data();
            for (int64_t f = 0; f < frames; ++f)
                for (int64_t y = 0; y < oh; ++y)
                    for (int64_t xc = 0; xc < ow; ++xc) {
                        const double* g = gd.data() + ((f * oh + y) * ow + xc) * channels;
                        double* dst = gx.data() + ((f * height + y / factor) * width + xc / factor) * channels;
                        axpy(1.0, g, dst, channels);
                    }
        };
    });
}

namespace {

struct PatchLayout {
    int64_t frames, height, width, channels;
    int64_t pf, ph, pw;
    int64_t bf, by, bx;    // block grid
    int64_t rows, cols;

    static PatchLayout of(const Shape& fhwc, int pf, int ph, int pw) {
        if (fhwc.size() != 4) throw std::invalid_argument("patchify3d: expected F,H,W,C shape");
        PatchLayout l{};
        l.frames = fhwc[0];
        l.height = fhwc[1];
        l.width = fhwc[2];
        l.channels = fhwc[3];
        l.pf = pf;
        l.ph = ph;
        l.pw = pw;
        if (pf < 1 || ph < 1 || pw < 1) throw std::invalid_argument("patchify3d: patch extents must be positive");
        if (l.frames % pf != 0 || l.height % ph != 0 || l.width % pw != 0)
            throw std::invalid_argument("patchify3d: patch does not tile " + shape_str(fhwc));
        l.bf = l.frames / pf;
        l.by = l.height / ph;
        l.bx = l.width / pw;
        l.rows = l.bf * l.by * l.bx;
        l.cols = pf * ph * pw * l.channels;
        return l;
    }

    // flat offset into the F,H,W,C volume for (row, col)
    int64_t volume_offset(int64_t row, int64_t col) const {
        const int64_t bx_i = row % bx;
        const int64_t by_i = (row / bx) % by;
        const int64_t bf_i = row / (bx * by);
        const int64_t c = col % channels;
        int64_t rest = col / channels;
        const int64_t dx = rest % pw;
        rest /= pw;
        const int64_t dy = rest % ph;
        const int64_t df = rest / ph;
        const int64_t f = bf_i * pf + df;
        const int64_t y = by_i * ph + dy;
        const int64_t x = bx_i * pw + dx;
        return ((f * height + y) * width + x) * channels + c;
    }
};

}  // namespace

Tensor patchify3d(const Tensor& x, int pf, int ph, int pw) {
    require_4d(x, "patchify3d");
    const PatchLayout l = PatchLayout::of(x.shape(), pf, ph, pw);
    const auto& xd = x.data();
    std::vector<double> out(static_cast<size_t>(l.rows * l.cols));
    for (int64_t r = 0; r < l.rows; ++r)
        for (int64_t c = 0; c < l.cols; ++c)
            out[static_cast<size_t>(r * l.cols + c)] = xd[static_cast<size_t>(l.volume_offset(r, c))];
    return OpBuilder::make({l.rows, l.cols}, std::move(out), {&x}, [x, l](const Tensor&) {
        return [x, l](const Tensor& grad, GradSink& sink) {
            if (!x.requires_grad()) return;
            auto& gx = sink.accum(x.node_id());
            const auto& gd = grad.data();
            for (int64_t r = 0; r < l.rows; ++r)
                for (int64_t c = 0; c < l.cols; ++c)
                    gx[static_cast<size_t>(l.volume_offset(r, c))] += gd[static_cast<size_t>(r * l.cols + c)];
        };
    });
}

Tensor unpatchify3d(const Tensor& rows, const Shape& fhwc, int pf, int ph, int pw) {
    require_2d(rows, "unpatchify3d");
    const PatchLayout l = PatchLayout::of(fhwc, pf, ph, pw);
    if (rows.dim(0) != l.rows || rows.dim(1) != l.cols)
        throw std::invalid_argument("unpatchify3d: rows " + shape_str(rows.shape()) +
                                    " incompatible with volume " + shape_str(fhwc));
    const auto& rd = rows.data();
    std::vector<double> out(static_cast<size_t>(tensor::shape_numel(fhwc)));
    for (int64_t r = 0; r < l.rows; ++r)
        for (int64_t c = 0; c < l.cols; ++c)
            out[static_cast<size_t>(l.volume_offset(r, c))] = rd[static_cast<size_t>(r * l.cols + c)];
    return OpBuilder::make(fhwc, std::move(out), {&rows}, [rows, l](const Tensor&) {
        return [rows, l](const Tensor& grad, GradSink& sink) {
            if (!rows.requires_grad()) return;
            auto& gr = sink.accum(rows.node_id());
            const auto& gd = grad.data();
            for (int64_t r = 0; r < l.rows; ++r)
                for (int64_t c = 0; c < l.cols; ++c)
                    gr[static_cast<size_t>(r * l.cols + c)] += gd[static_cast<size_t>(l.volume_offset(r, c))];
        };
    });
}

Tensor quantize_st(const Tensor& rows, const Tensor& codebook, std::vector<int64_t>* indices_out) {
    require_2d(rows, "quantize_st");
    require_2d(codebook, "quantize_st codebook");
    const int64_t m = rows.dim(0), d = rows.dim(1), k = codebook.dim(0);
    if (codebook.dim(1) != d)
        throw std::invalid_argument("quantize_st: code dim mismatch " + shape_str(rows.shape()) +
                                    " vs " + shape_str(codebook.shape()));
    if (k < 2) throw std::invalid_argument("quantize_st: codebook needs at least 2 entries");
    const auto& rd = rows.data();
    const auto& cd = codebook.data();
    std::vector<double> out(rd.size());
    std::vector<int64_t> indices(static_cast<size_t>(m));
    for (int64_t r = 0; r < m; ++r) {
        const double* x = rd.data() + r * d;
        int64_t best = 0;
        double best_d2 = std::numeric_limits<double>::infinity();
        for (int64_t e = 0; e < k; ++e) {
            const double* ce = cd.data() + e * d;
            double d2 = 0.0;
            for (int64_t c = 0; c < d; ++c) {
                const double diff = x[c] - ce[c];
                d2 += diff * diff;
            }
            if (d2 < best_d2) {  // strict: equidistant entries keep the lowest index
                best_d2 = d2;
                best = e;
            }
        }
        indices[static_cast<size_t>(r)] = best;
        std::memcpy(out.data() + r * d, cd.data() + best * d, sizeof(double) * d);
    }
    if (indices_out) *indices_out = indices;
    return OpBuilder::make(rows.shape(), std::move(out), {&rows}, [rows](const Tensor&) {
        return [rows](const Tensor& grad, GradSink& sink) {
            if (!rows.requires_grad()) return;
            auto& gr = sink.accum(rows.node_id());
            const auto& gd = grad.data();
            for (size_t i = 0; i < gd.size(); ++i) gr[i] += gd[i];  // straight-through
        };
    });
}

}  // namespace vsd::ops
