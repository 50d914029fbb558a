#include "sage/ad/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace sage::ad {

namespace {

Graph& graph_of(Var a, Var b) {
    if (&a.graph() != &b.graph()) throw std::invalid_argument("ops: operands belong to different graphs");
    return a.graph();
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.size() != b.size() || a.rows() != b.rows()) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                                    shape_string(b.shape()));
    }
}

double stable_sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// Elementwise unary op given f and f' evaluated from (x, y).
template <typename F, typename D>
Var unary(Var a, F f, D df) {
    Graph& g = a.graph();
    const Tensor& x = a.value();
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
    const std::size_t ia = a.id();
    return g.record(std::move(y), {ia}, [ia, df](Graph& gr, std::size_t self) {
        const auto up = gr.upstream(self);
        const Tensor& xv = gr.value(ia);
        const Tensor& yv = gr.value(self);
        auto ga = gr.grad_buffer(ia);
        for (std::size_t i = 0; i < up.size(); ++i) ga[i] += up[i] * df(xv[i], yv[i]);
    });
}

}  // namespace

std::size_t AttentionPattern::pair_count() const {
    std::size_t n = 0;
    for (const auto& row : allowed) n += row.size();
    return n;
}

Var matmul(Var a, Var b) {
    Graph& g = graph_of(a, b);
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
    if (B.rows() != k) {
        throw std::invalid_argument("matmul: inner dimensions differ " + shape_string(A.shape()) + " x " +
                                    shape_string(B.shape()));
    }
    Tensor C(Shape{m, n});
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = &C.data()[i * n];
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = A[i * k + p];
            if (aip == 0.0) continue;
            const double* brow = &B.data()[p * n];
            for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
    }
    const std::size_t ia = a.id(), ib = b.id();
    return g.record(std::move(C), {ia, ib}, [ia, ib, m, k, n](Graph& gr, std::size_t self) {
        const auto dC = gr.upstream(self);
        if (gr.requires_grad(ia)) {
            const Tensor& Bv = gr.value(ib);
            auto dA = gr.grad_buffer(ia);
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    double s = 0.0;
                    for (std::size_t j = 0; j < n; ++j) s += dC[i * n + j] * Bv[p * n + j];
                    dA[i * k + p] += s;
                }
            }
        }
        if (gr.requires_grad(ib)) {
            const Tensor& Av = gr.value(ia);
            auto dB = gr.grad_buffer(ib);
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    const double aip = Av[i * k + p];
                    if (aip == 0.0) continue;
                    for (std::size_t j = 0; j < n; ++j) dB[p * n + j] += aip * dC[i * n + j];
                }
            }
        }
    });
}

namespace {

template <typename F, typename DA, typename DB>
Var binary(const char* name, Var a, Var b, F f, DA da, DB db) {
    Graph& g = graph_of(a, b);
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    require_same_shape(name, A, B);
    Tensor C(A.shape());
    for (std::size_t i = 0; i < A.size(); ++i) C[i] = f(A[i], B[i]);
    const std::size_t ia = a.id(), ib = b.id();
    return g.record(std::move(C), {ia, ib}, [ia, ib, da, db](Graph& gr, std::size_t self) {
        const auto up = gr.upstream(self);
        const Tensor& Av = gr.value(ia);
        const Tensor& Bv = gr.value(ib);
        if (gr.requires_grad(ia)) {
            auto ga = gr.grad_buffer(ia);
            for (std::size_t i = 0; i < up.size(); ++i) ga[i] += up[i] * da(Av[i], Bv[i]);
        }
        if (gr.requires_grad(ib)) {
            auto gb = gr.grad_buffer(ib);
            for (std::size_t i = 0; i < up.size(); ++i) gb[i] += up[i] * db(Av[i], Bv[i]);
        }
    });
}

}  // namespace

Var add(Var a, Var b) {
    return binary(
        "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
        [](double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
    return binary(
        "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
        [](double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
    return binary(
        "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
        [](double x, double) { return x; });
}

Var add_row(Var a, Var b) {
    Graph& g = graph_of(a, b);
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    const std::size_t rows = A.rows(), cols = A.cols();
    if (B.size() != cols) {
        throw std::invalid_argument("add_row: row vector " + shape_string(B.shape()) + " does not match " +
                                    shape_string(A.shape()));
    }
    Tensor C(A.shape());
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) C[r * cols + c] = A[r * cols + c] + B[c];
    const std::size_t ia = a.id(), ib = b.id();
    return g.record(std::move(C), {ia, ib}, [ia, ib, rows, cols](Graph& gr, std::size_t self) {
        const auto up = gr.upstream(self);
        if (gr.requires_grad(ia)) {
            auto ga = gr.grad_buffer(ia);
            for (std::size_t i = 0; i < up.size(); ++i) ga[i] += up[i];
        }
        if (gr.requires_grad(ib)) {
            auto gb = gr.grad_buffer(ib);
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < cols; ++c) gb[c] += up[r * cols + c];
        }
    });
}

Var mul_col(Var a, Var c) {
    Graph& g = graph_of(a, c);
    const Tensor& A = a.value();
    const Tensor& Cv = c.value();
    const std::size_t rows = A.rows(), cols = A.cols();
    if (Cv.size() != rows) {
        throw std::invalid_argument("mul_col: column " + shape_string(Cv.shape()) + " does not match " +
                                    shape_string(A.shape()));
    }
    Tensor out(A.shape());
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t k = 0; k < cols; ++k) out[r * cols + k] = A[r * cols + k] * Cv[r];
    const std::size_t ia = a.id(), ic = c.id();
    return g.record(std::move(out), {ia, ic}, [ia, ic, rows, cols](Graph& gr, std::size_t self) {
        const auto up = gr.upstream(self);
        if (gr.requires_grad(ia)) {
            const Tensor& col = gr.value(ic);
            auto ga = gr.grad_buffer(ia);
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t k = 0; k < cols; ++k) ga[r * cols + k] += up[r * cols + k] * col[r];
        }
        if (gr.requires_grad(ic)) {
            const Tensor& Av = gr.value(ia);
            auto gc = gr.grad_buffer(ic);
            for (std::size_t r = 0; r < rows; ++r) {
                double s = 0.0;
                for (std::size_t k = 0; k < cols; ++k) s += up[r * cols + k] * Av[r * cols + k];
                gc[r] += s;
            }
        }
    });
}

Var affine(Var a, double s, double b) {
    return unary(a, [s, b](double x) { return s * x + b; }, [s](double, double) { return s; });
}

Var scale(Var a, double s) { return affine(a, s, 0.0); }

Var exp(Var a) {
    return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
    return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var sigmoid(Var a) {
    return unary(a, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Var log_sigmoid(Var a) {
    return unary(
        a, [](double x) { return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); },
        [](double x, double) { return 1.0 - stable_sigmoid(x); });
}

Var swish(Var a, double beta) {
    return unary(
        a, [beta](double x) { return x * stable_sigmoid(beta * x); },
        [beta](double x, double) {
            const double s = stable_sigmoid(beta * x);
            return s + beta * x * s * (1.0 - s);
        });
}

Var gelu(Var a) {
    return unary(
        a, [](double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); },
        [](double x, double) {
            const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
            const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
            return cdf + x * pdf;
        });
}

Var sum(Var a) {
    Graph& g = a.graph();
    double s = 0.0;
    for (double v : a.value().data()) s += v;
    const std::size_t ia = a.id();
    return g.record(Tensor::scalar(s), {ia}, [ia](Graph& gr, std::size_t self) {
        const double up = gr.upstream(self)[0];
        for (double& v : gr.grad_buffer(ia)) v += up;
    });
}

Var mean(Var a) {
    const std::size_t n = a.value().size();
    if (n == 0) throw std::invalid_argument("mean: empty tensor");
    return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var mean_rows(Var a) {
    Graph& g = a.graph();
    const Tensor& A = a.value();
    const std::size_t rows = A.rows(), cols = A.cols();
    if (rows == 0) throw std::invalid_argument("mean_rows: no rows");
    Tensor out(Shape{1, cols});
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) out[c] += A[r * cols + c];
    for (auto& v : out.data()) v /= static_cast<double>(rows);
    const std::size_t ia = a.id();
    return g.record(std::move(out), {ia}, [ia, rows, cols](Graph& gr, std::size_t self) {
        const auto up = gr.upstream(self);
        auto ga = gr.grad_buffer(ia);
        const double inv = 1.0 / static_cast<double>(rows);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) ga[r * cols + c] += up[c] * inv;
    });
}

Var rmsnorm(Var x, Var gamma, double eps) {
    Graph& g = graph_of(x, gamma);
    const Tensor& X = x.value();
    const Tensor& G = gamma.value();
    const std::size_t rows = X.rows(), d = X.cols();
    if (G.size() != d) {
        throw std::invalid_argument("rmsnorm: gamma " + shape_string(G.shape()) + " does not match " +
                                    shape_string(X.shape()));
    }
    if (!(eps >= 0.0)) throw std::invalid_argument("rmsnorm: eps must be non-negative");
    Tensor Y(X.shape());
    std::vector<double> inv_rms(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        double ss = 0.0;
        for (std::size_t c = 0; c < d; ++c) ss += X[r * d + c] * X[r * d + c];
        const double ms = ss / static_cast<double>(d) + eps;
        // A zero row with eps = 0 maps to zero rather than NaN.
        inv_rms[r] = ms > 0.0 ? 1.0 / std::sqrt(ms) : 0.0;
        for (std::size_t c = 0; c < d; ++c) Y[r * d + c] = X[r * d + c] * inv_rms[r] * G[c];
    }
    const std::size_t ix = x.id(), ig = gamma.id();
    return g.record(std::move(Y), {ix, ig},
                    [ix, ig, rows, d, inv_rms = std::move(inv_rms)](Graph& gr, std::size_t self) {
                        const auto up = gr.upstream(self);
                        const Tensor& Xv = gr.value(ix);
                        const Tensor& Gv = gr.value(ig);
                        if (gr.requires_grad(ig)) {
                            auto gg = gr.grad_buffer(ig);
                            for (std::size_t r = 0; r < rows; ++r)
                                for (std::size_t c = 0; c < d; ++c)
                                    gg[c] += up[r * d + c] * Xv[r * d + c] * inv_rms[r];
                        }
                        if (gr.requires_grad(ix)) {
                            auto gx = gr.grad_buffer(ix);
                            for (std::size_t r = 0; r < rows; ++r) {
                                const double ir = inv_rms[r];
                                double dot = 0.0;
                                for (std::size_t c = 0; c < d; ++c)
                                    dot += up[r * d + c] * Gv[c] * Xv[r * d + c];
                                const double coef = ir * ir * ir * dot / static_cast<double>(d);
                                for (std::size_t c = 0; c < d; ++c)
                                    gx[r * d + c] += ir * Gv[c] * up[r * d + c] - coef * Xv[r * d + c];
                            }
                        }
                    });
}

Var gather_rows(Var table, std::span<const int> ids) {
    Graph& g = table.graph();
    const Tensor& T = table.value();
    const std::size_t vocab = T.rows(), d = T.cols();
    std::vector<int> idx(ids.begin(), ids.end());
    Tensor out(Shape{idx.size(), d});
    for (std::size_t r = 0; r < idx.size(); ++r) {
        if (idx[r] < 0 || static_cast<std::size_t>(idx[r]) >= vocab) {
            throw std::invalid_argument("gather_rows: index " + std::to_string(idx[r]) + " out of range for " +
                                        std::to_string(vocab) + " rows");
        }
        std::copy_n(&T.data()[static_cast<std::size_t>(idx[r]) * d], d, &out.data()[r * d]);
    }
    const std::size_t it = table.id();
    return g.record(std::move(out), {it}, [it, d, idx = std::move(idx)](Graph& gr, std::size_t self) {
        const auto up = gr.upstream(self);
        auto gt = gr.grad_buffer(it);
        for (std::size_t r = 0; r < idx.size(); ++r)
            for (std::size_t c = 0; c < d; ++c) gt[static_cast<std::size_t>(idx[r]) * d + c] += up[r * d + c];
    });
}

Var slice_rows(Var a, std::size_t begin, std::size_t end) {
    Graph& g = a.graph();
    const Tensor& A = a.value();
    const std::size_t cols = A.cols();
    if (begin > end || end > A.rows()) throw std::invalid_argument("slice_rows: range out of bounds");
    Tensor out(Shape{end - begin, cols});
    std::copy_n(&A.data()[begin * cols], (end - begin) * cols, out.data().begin());
    const std::size_t ia = a.id();
    return g.record(std::move(out), {ia}, [ia, begin, cols](Graph& gr, std::size_t self) {
        const auto up = gr.upstream(self);
        auto ga = gr.grad_buffer(ia);
        for (std::size_t i = 0; i < up.size(); ++i) ga[begin * cols + i] += up[i];
    });
}

Var pick(Var a, std::span<const int> index) {
    Graph& g = a.graph();
    const Tensor& A = a.value();
    const std::size_t rows = A.rows(), cols = A.cols();
    if (index.size() != rows) throw std::invalid_argument("pick: one index per row required");
    std::vector<int> idx(index.begin(), index.end());
    Tensor out(Shape{rows, 1});
    for (std::size_t r = 0; r < rows; ++r) {
        if (idx[r] < 0 || static_cast<std::size_t>(idx[r]) >= cols)
            throw std::invalid_argument("pick: index out of range");
        out[r] = A[r * cols + static_cast<std::size_t>(idx[r])];
    }
    const std::size_t ia = a.id();
    return g.record(std::move(out), {ia}, [ia, cols, idx = std::move(idx)](Graph& gr, std::size_t self) {
        const auto up = gr.upstream(self);
        auto ga = gr.grad_buffer(ia);
        for (std::size_t r = 0; r < idx.size(); ++r) ga[r * cols + static_cast<std::size_t>(idx[r])] += up[r];
    });
}

Var log_softmax_rows(Var a) {
    Graph& g = a.graph();
    const Tensor& A = a.value();
    const std::size_t rows = A.rows(), cols = A.cols();
    Tensor out(A.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* x = &A.data()[r * cols];
        const double mx = *std::max_element(x, x + cols);
        double s = 0.0;
        for (std::size_t c = 0; c < cols; ++c) s += std::exp(x[c] - mx);
        const double lse = mx + std::log(s);
        for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = x[c] - lse;
    }
    const std::size_t ia = a.id();
    return g.record(std::move(out), {ia}, [ia, rows, cols](Graph& gr, std::size_t self) {
        const auto up = gr.upstream(self);
        const Tensor& Y = gr.value(self);
        auto ga = gr.grad_buffer(ia);
        for (std::size_t r = 0; r < rows; ++r) {
            double s = 0.0;
            for (std::size_t c = 0; c < cols; ++c) s += up[r * cols + c];
            for (std::size_t c = 0; c < cols; ++c)
                ga[r * cols + c] += up[r * cols + c] - std::exp(Y[r * cols + c]) * s;
        }
    });
}

Var cross_entropy(Var logits, std::span<const int> targets) {
    Graph& g = logits.graph();
    const Tensor& L = logits.value();
    const std::size_t rows = L.rows(), cols = L.cols();
    if (targets.size() != rows) throw std::invalid_argument("cross_entropy: one target per row required");
    if (rows == 0) throw std::invalid_argument("cross_entropy: no rows");
    std::vector<int> tgt(targets.begin(), targets.end());
    std::vector<double> probs(rows * cols);
    double loss = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        if (tgt[r] < 0 || static_cast<std::size_t>(tgt[r]) >= cols)
            throw std::invalid_argument("cross_entropy: target out of range");
        const double* x = &L.data()[r * cols];
        const double mx = *std::max_element(x, x + cols);
        double s = 0.0;
        for (std::size_t c = 0; c < cols; ++c) s += std::exp(x[c] - mx);
        const double lse = mx + std::log(s);
        for (std::size_t c = 0; c < cols; ++c) probs[r * cols + c] = std::exp(x[c] - lse);
        loss += lse - x[static_cast<std::size_t>(tgt[r])];
    }
    loss /= static_cast<double>(rows);
    const std::size_t il = logits.id();
    return g.record(Tensor::scalar(loss), {il},
                    [il, rows, cols, tgt = std::move(tgt), probs = std::move(probs)](Graph& gr, std::size_t self) {
                        const double up = gr.upstream(self)[0] / static_cast<double>(rows);
                        auto gl = gr.grad_buffer(il);
                        for (std::size_t r = 0; r < rows; ++r) {
                            for (std::size_t c = 0; c < cols; ++c) gl[r * cols + c] += up * probs[r * cols + c];
                            gl[r * cols + static_cast<std::size_t>(tgt[r])] -= up;
                        }
                    });
}

Var masked_attention(Var q, Var k, Var v, std::size_t num_heads, std::shared_ptr<const AttentionPattern> pattern) {
    Graph& g = graph_of(q, k);
    graph_of(q, v);
    const Tensor& Q = q.value();
    const Tensor& K = k.value();
    const Tensor& V = v.value();
    const std::size_t T = Q.rows(), d = Q.cols();
    if (K.rows() != T || V.rows() != T || K.cols() != d || V.cols() != d) {
        throw std::invalid_argument("masked_attention: q, k, v must share shape");
    }
    if (num_heads == 0 || d % num_heads != 0) {
        throw std::invalid_argument("masked_attention: width not divisible by head count");
    }
    if (!pattern || pattern->length != T || pattern->allowed.size() != T) {
        throw std::invalid_argument("masked_attention: pattern length does not match sequence");
    }
    const std::size_t dh = d / num_heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

    // probs laid out per head, per query row, over that row's allowed keys.
    std::vector<std::size_t> offset(T + 1, 0);
    for (std::size_t i = 0; i < T; ++i) {
        const auto& row = pattern->allowed[i];
        if (row.empty()) throw std::invalid_argument("masked_attention: query row with no keys");
        for (auto j : row)
            if (j > i) throw std::invalid_argument("masked_attention: pattern is not causal");
        offset[i + 1] = offset[i] + row.size();
    }
    const std::size_t pairs = offset[T];
    std::vector<double> probs(num_heads * pairs);
    Tensor out(Shape{T, d});
    for (std::size_t h = 0; h < num_heads; ++h) {
        const std::size_t c0 = h * dh;
        for (std::size_t i = 0; i < T; ++i) {
            const auto& row = pattern->allowed[i];
            double* p = &probs[h * pairs + offset[i]];
            double mx = -INFINITY;
            for (std::size_t a = 0; a < row.size(); ++a) {
                const std::size_t j = row[a];
                double s = 0.0;
                for (std::size_t c = 0; c < dh; ++c) s += Q[i * d + c0 + c] * K[j * d + c0 + c];
                p[a] = s * inv_sqrt;
                mx = std::max(mx, p[a]);
            }
            double z = 0.0;
            for (std::size_t a = 0; a < row.size(); ++a) {
                p[a] = std::exp(p[a] - mx);
                z += p[a];
            }
            for (std::size_t a = 0; a < row.size(); ++a) {
                p[a] /= z;
                const std::size_t j = row[a];
                for (std::size_t c = 0; c < dh; ++c) out[i * d + c0 + c] += p[a] * V[j * d + c0 + c];
            }
        }
    }
    const std::size_t iq = q.id(), ik = k.id(), iv = v.id();
    return g.record(
        std::move(out), {iq, ik, iv},
        [iq, ik, iv, T, d, dh, num_heads, inv_sqrt, pairs, pattern, offset = std::move(offset),
         probs = std::move(probs)](Graph& gr, std::size_t self) {
            const auto dO = gr.upstream(self);
            const Tensor& Qv = gr.value(iq);
            const Tensor& Kv = gr.value(ik);
            const Tensor& Vv = gr.value(iv);
            const bool need_q = gr.requires_grad(iq), need_k = gr.requires_grad(ik), need_v = gr.requires_grad(iv);
            std::span<double> dQ, dK, dV;
            if (need_q) dQ = gr.grad_buffer(iq);
            if (need_k) dK = gr.grad_buffer(ik);
            if (need_v) dV = gr.grad_buffer(iv);
            std::vector<double> dp;
            for (std::size_t h = 0; h < num_heads; ++h) {
                const std::size_t c0 = h * dh;
                for (std::size_t i = 0; i < T; ++i) {
                    const auto& row = pattern->allowed[i];
                    const double* p = &probs[h * pairs + offset[i]];
                    dp.assign(row.size(), 0.0);
                    double dot = 0.0;
                    for (std::size_t a = 0; a < row.size(); ++a) {
                        const std::size_t j = row[a];
                        double s = 0.0;
                        for (std::size_t c = 0; c < dh; ++c) s += dO[i * d + c0 + c] * Vv[j * d + c0 + c];
                        dp[a] = s;
                        dot += p[a] * s;
                        if (need_v)
                            for (std::size_t c = 0; c < dh; ++c) dV[j * d + c0 + c] += p[a] * dO[i * d + c0 + c];
                    }
                    for (std::size_t a = 0; a < row.size(); ++a) {
                        const double ds = p[a] * (dp[a] - dot) * inv_sqrt;
                        if (ds == 0.0) continue;
                        const std::size_t j = row[a];
                        if (need_q)
                            for (std::size_t c = 0; c < dh; ++c) dQ[i * d + c0 + c] += ds * Kv[j * d + c0 + c];
                        if (need_k)
                            for (std::size_t c = 0; c < dh; ++c) dK[j * d + c0 + c] += ds * Qv[i * d + c0 + c];
                    }
                }
            }
        });
}

}  // namespace sage::ad
