#include "sra/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

namespace sra::ag {

Tensor& Node::grad_buffer() {
    if (grad.empty()) grad = Tensor(val().shape());
    return grad;
}

double Var::item() const {
    if (value().numel() != 1) throw std::logic_error("item() on tensor of shape " + shape_string(shape()));
    return value()[0];
}

Var Tape::constant(Tensor value) {
    Node& n = nodes_.emplace_back();
    n.value = std::move(value);
    return Var(&n);
}

Var Tape::constant_ref(const Tensor& value) {
    Node& n = nodes_.emplace_back();
    n.external = &value;
    return Var(&n);
}

Var Tape::parameter(Parameter& param) {
    Node& n = nodes_.emplace_back();
    n.external = &param.value;
    n.requires_grad = recording();
    n.param = recording() ? &param : nullptr;
    return Var(&n);
}

Var Tape::make(Tensor value, std::initializer_list<Var> inputs, std::function<void(Node&)> backward) {
    Node& n = nodes_.emplace_back();
    n.value = std::move(value);
    if (recording()) {
        for (const auto& in : inputs)
            if (in.requires_grad()) n.requires_grad = true;
        if (n.requires_grad) n.backward = std::move(backward);
    }
    return Var(&n);
}

void Tape::backward(const Var& loss) {
    if (!recording()) throw std::logic_error("backward() on a no_grad tape");
    if (loss.value().numel() != 1) throw std::invalid_argument("backward() needs a single-element loss");
    if (!loss.requires_grad()) return;
    loss.node()->grad_buffer()[0] += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        Node& n = *it;
        if (n.requires_grad && n.backward && !n.grad.empty()) n.backward(n);
    }
    for (auto& n : nodes_) {
        if (!n.param || n.grad.empty()) continue;
        auto& pg = n.param->grad;
        const auto& g = n.grad;
        for (std::int64_t i = 0; i < g.numel(); ++i) pg[i] += g[i];
    }
}

namespace {

Shape with_last(const Shape& s, std::int64_t last) {
    Shape out = s;
    out.back() = last;
    return out;
}

void require_rank2_rows(const Tensor& t, std::int64_t cols, const char* op) {
    if (t.rank() < 1 || t.shape().back() != cols)
        throw std::invalid_argument(std::string(op) + ": expected trailing dimension " + std::to_string(cols) +
                                    ", got " + shape_string(t.shape()));
}

}  // namespace

Var linear(Tape& tape, const Var& x, const Var& w, const Var& b) {
    const Tensor& W = w.value();
    if (W.rank() != 2) throw std::invalid_argument("linear: weight must be rank 2");
    const std::int64_t K = W.dim(0), N = W.dim(1);
    require_rank2_rows(x.value(), K, "linear");
    if (b && (b.value().rank() != 1 || b.value().dim(0) != N))
        throw std::invalid_argument("linear: bias shape " + shape_string(b.value().shape()));

    Tensor out(with_last(x.value().shape(), N));
    auto Y = as_matrix(out, N);
    Y.noalias() = as_matrix(x.value(), K) * as_matrix(W, N);
    if (b) Y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.value().data(), N);

    Node* xn = x.node();
    Node* wn = w.node();
    Node* bn = b ? b.node() : nullptr;
    return tape.make(std::move(out), {x, w, b}, [xn, wn, bn, K, N](Node& o) {
        auto dY = as_matrix(std::as_const(o.grad), N);
        if (xn->requires_grad) as_matrix(xn->grad_buffer(), K).noalias() += dY * as_matrix(wn->val(), N).transpose();
        if (wn->requires_grad) as_matrix(wn->grad_buffer(), N).noalias() += as_matrix(xn->val(), K).transpose() * dY;
        if (bn && bn->requires_grad) {
            Eigen::Map<Eigen::RowVectorXd> db(bn->grad_buffer().data(), N);
            db += dY.colwise().sum();
        }
    });
}

Var add(Tape& tape, const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "add");
    Tensor out = a.value();
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] += b.value()[i];
    Node* an = a.node();
    Node* bn = b.node();
    return tape.make(std::move(out), {a, b}, [an, bn](Node& o) {
        for (Node* in : {an, bn}) {
            if (!in->requires_grad) continue;
            auto& g = in->grad_buffer();
            for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += o.grad[i];
        }
    });
}

Var add_repeated_rows(Tape& tape, const Var& x, const Var& block) {
    const Tensor& B = block.value();
    if (B.rank() != 2) throw std::invalid_argument("add_repeated_rows: block must be rank 2");
    const std::int64_t R = B.dim(0), D = B.dim(1);
    require_rank2_rows(x.value(), D, "add_repeated_rows");
    const std::int64_t M = x.value().numel() / D;
    if (M % R != 0) throw std::invalid_argument("add_repeated_rows: rows not divisible by block rows");
    Tensor out = x.value();
    for (std::int64_t m = 0; m < M; ++m)
        for (std::int64_t d = 0; d < D; ++d) out[m * D + d] += B[(m % R) * D + d];
    Node* xn = x.node();
    Node* bn = block.node();
    return tape.make(std::move(out), {x, block}, [xn, bn, R, D, M](Node& o) {
        if (xn->requires_grad) {
            auto& g = xn->grad_buffer();
            for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += o.grad[i];
        }
        if (bn->requires_grad) {
            auto& g = bn->grad_buffer();
            for (std::int64_t m = 0; m < M; ++m)
                for (std::int64_t d = 0; d < D; ++d) g[(m % R) * D + d] += o.grad[m * D + d];
        }
    });
}

Var scale(Tape& tape, const Var& x, double s) {
    Tensor out = x.value();
    for (auto& v : out.values()) v *= s;
    Node* xn = x.node();
    return tape.make(std::move(out), {x}, [xn, s](Node& o) {
        auto& g = xn->grad_buffer();
        for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += s * o.grad[i];
    });
}

Var add_scaled(Tape& tape, const Var& a, const Var& b, double s) {
    if (a.value().numel() != 1 || b.value().numel() != 1)
        throw std::invalid_argument("add_scaled: operands must be single-element");
    Tensor out(Shape{1}, a.value()[0] + s * b.value()[0]);
    Node* an = a.node();
    Node* bn = b.node();
    return tape.make(std::move(out), {a, b}, [an, bn, s](Node& o) {
        if (an->requires_grad) an->grad_buffer()[0] += o.grad[0];
        if (bn->requires_grad) bn->grad_buffer()[0] += s * o.grad[0];
    });
}

Var silu(Tape& tape, const Var& x) {
    Tensor out = x.value();
    for (auto& v : out.values()) v = v / (1.0 + std::exp(-v));
    Node* xn = x.node();
    return tape.make(std::move(out), {x}, [xn](Node& o) {
        auto& g = xn->grad_buffer();
        const auto& xv = xn->val();
        for (std::int64_t i = 0; i < g.numel(); ++i) {
            const double sig = 1.0 / (1.0 + std::exp(-xv[i]));
            g[i] += o.grad[i] * sig * (1.0 + xv[i] * (1.0 - sig));
        }
    });
}

Var gelu(Tape& tape, const Var& x) {
    constexpr double c = 0.7978845608028654;  // sqrt(2 / pi)
    constexpr double a = 0.044715;
    Tensor out = x.value();
    for (auto& v : out.values()) v = 0.5 * v * (1.0 + std::tanh(c * (v + a * v * v * v)));
    Node* xn = x.node();
    return tape.make(std::move(out), {x}, [xn](Node& o) {
        auto& g = xn->grad_buffer();
        const auto& xv = xn->val();
        for (std::int64_t i = 0; i < g.numel(); ++i) {
            const double v = xv[i];
            const double th = std::tanh(c * (v + a * v * v * v));
            const double d = 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * c * (1.0 + 3.0 * a * v * v);
            g[i] += o.grad[i] * d;
        }
    });
}

Var layer_norm_modulate(Tape& tape, const Var& x, const Var& shift, const Var& scale, std::int64_t tokens) {
    const Tensor& sh = shift.value();
    const Tensor& sc = scale.value();
    if (sh.rank() != 2 || !sh.same_shape(sc))
        throw std::invalid_argument("layer_norm_modulate: shift/scale must be [B, D]");
    const std::int64_t B = sh.dim(0), D = sh.dim(1);
    require_rank2_rows(x.value(), D, "layer_norm_modulate");
    const std::int64_t M = x.value().numel() / D;
    if (M != B * tokens) throw std::invalid_argument("layer_norm_modulate: rows != batch * tokens");

    constexpr double eps = 1e-6;
    Tensor out(x.value().shape());
    AlignedVector xhat(static_cast<std::size_t>(M * D));
    AlignedVector rstd(static_cast<std::size_t>(M));
    const double* xv = x.value().data();
    for (std::int64_t m = 0; m < M; ++m) {
        const double* row = xv + m * D;
        double mean = 0.0;
        for (std::int64_t d = 0; d < D; ++d) mean += row[d];
        mean /= static_cast<double>(D);
        double var = 0.0;
        for (std::int64_t d = 0; d < D; ++d) var += (row[d] - mean) * (row[d] - mean);
        var /= static_cast<double>(D);
        const double r = 1.0 / std::sqrt(var + eps);
        rstd[m] = r;
        const std::int64_t b = m / tokens;
        for (std::int64_t d = 0; d < D; ++d) {
            const double h = (row[d] - mean) * r;
            xhat[m * D + d] = h;
            out[m * D + d] = h * (1.0 + sc[b * D + d]) + sh[b * D + d];
        }
    }

    Node* xn = x.node();
    Node* shn = shift.node();
    Node* scn = scale.node();
    return tape.make(std::move(out), {x, shift, scale},
                     [xn, shn, scn, xhat = std::move(xhat), rstd = std::move(rstd), D, M, tokens](Node& o) {
                         const auto& dy = o.grad;
                         const auto& scv = scn->val();
                         if (shn->requires_grad) {
                             auto& g = shn->grad_buffer();
                             for (std::int64_t m = 0; m < M; ++m)
                                 for (std::int64_t d = 0; d < D; ++d) g[(m / tokens) * D + d] += dy[m * D + d];
                         }
                         if (scn->requires_grad) {
                             auto& g = scn->grad_buffer();
                             for (std::int64_t m = 0; m < M; ++m)
                                 for (std::int64_t d = 0; d < D; ++d)
                                     g[(m / tokens) * D + d] += dy[m * D + d] * xhat[m * D + d];
                         }
                         if (xn->requires_grad) {
                             auto& g = xn->grad_buffer();
                             AlignedVector dh(static_cast<std::size_t>(D));
                             for (std::int64_t m = 0; m < M; ++m) {
                                 const std::int64_t b = m / tokens;
                                 double mean_dh = 0.0, mean_dh_h = 0.0;
                                 for (std::int64_t d = 0; d < D; ++d) {
                                     dh[d] = dy[m * D + d] * (1.0 + scv[b * D + d]);
                                     mean_dh += dh[d];
                                     mean_dh_h += dh[d] * xhat[m * D + d];
                                 }
                                 mean_dh /= static_cast<double>(D);
                                 mean_dh_h /= static_cast<double>(D);
                                 for (std::int64_t d = 0; d < D; ++d)
                                     g[m * D + d] += rstd[m] * (dh[d] - mean_dh - xhat[m * D + d] * mean_dh_h);
                             }
                         }
                     });
}

Var gated_add(Tape& tape, const Var& x, const Var& gate, const Var& y, std::int64_t tokens) {
    require_same_shape(x.value(), y.value(), "gated_add");
    const Tensor& gv = gate.value();
    if (gv.rank() != 2) throw std::invalid_argument("gated_add: gate must be [B, D]");
    const std::int64_t B = gv.dim(0), D = gv.dim(1);
    require_rank2_rows(x.value(), D, "gated_add");
    const std::int64_t M = x.value().numel() / D;
    if (M != B * tokens) throw std::invalid_argument("gated_add: rows != batch * tokens");
    Tensor out = x.value();
    const auto& yv = y.value();
    for (std::int64_t m = 0; m < M; ++m)
        for (std::int64_t d = 0; d < D; ++d) out[m * D + d] += gv[(m / tokens) * D + d] * yv[m * D + d];
    Node* xn = x.node();
    Node* gn = gate.node();
    Node* yn = y.node();
    return tape.make(std::move(out), {x, gate, y}, [xn, gn, yn, D, M, tokens](Node& o) {
        const auto& dy = o.grad;
        if (xn->requires_grad) {
            auto& g = xn->grad_buffer();
            for (std::int64_t i = 0; i < M * D; ++i) g[i] += dy[i];
        }
        if (yn->requires_grad) {
            auto& g = yn->grad_buffer();
            const auto& gv = gn->val();
            for (std::int64_t m = 0; m < M; ++m)
                for (std::int64_t d = 0; d < D; ++d) g[m * D + d] += gv[(m / tokens) * D + d] * dy[m * D + d];
        }
        if (gn->requires_grad) {
            auto& g = gn->grad_buffer();
            const auto& yv = yn->val();
            for (std::int64_t m = 0; m < M; ++m)
                for (std::int64_t d = 0; d < D; ++d) g[(m / tokens) * D + d] += dy[m * D + d] * yv[m * D + d];
        }
    });
}

Var attention(Tape& tape, const Var& qkv, std::int64_t batch, std::int64_t tokens, std::int64_t heads) {
    const Tensor& in = qkv.value();
    const std::int64_t width = in.rank() ? in.shape().back() : 0;
    if (width == 0 || width % (3 * heads) != 0 || in.numel() != batch * tokens * width)
        throw std::invalid_argument("attention: expected [B, T, 3D] with D divisible by heads, got " +
                                    shape_string(in.shape()));
    const std::int64_t D = width / 3;
    const std::int64_t hd = D / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
    using Strided = Eigen::Map<const RowMatrix, 0, Eigen::OuterStride<>>;
    using StridedOut = Eigen::Map<RowMatrix, 0, Eigen::OuterStride<>>;

    Tensor out(in.rank() == 3 ? Shape{batch, tokens, D} : Shape{batch * tokens, D});
    AlignedVector probs(static_cast<std::size_t>(batch * heads * tokens * tokens));
    RowMatrix scores(tokens, tokens);
    for (std::int64_t b = 0; b < batch; ++b) {
        const double* base = in.data() + b * tokens * 3 * D;
        for (std::int64_t h = 0; h < heads; ++h) {
            Strided Q(base + h * hd, tokens, hd, Eigen::OuterStride<>(3 * D));
            Strided K(base + D + h * hd, tokens, hd, Eigen::OuterStride<>(3 * D));
            Strided V(base + 2 * D + h * hd, tokens, hd, Eigen::OuterStride<>(3 * D));
            scores.noalias() = (Q * K.transpose()) * inv_sqrt;
            Eigen::Map<RowMatrix> P(probs.data() + (b * heads + h) * tokens * tokens, tokens, tokens);
            for (std::int64_t i = 0; i < tokens; ++i) {
                const double mx = scores.row(i).maxCoeff();
                P.row(i) = (scores.row(i).array() - mx).exp().matrix();
                P.row(i) /= P.row(i).sum();
            }
            StridedOut O(out.data() + b * tokens * D + h * hd, tokens, hd, Eigen::OuterStride<>(D));
            O.noalias() = P * V;
        }
    }

    Node* qn = qkv.node();
    return tape.make(std::move(out), {qkv},
                     [qn, probs = std::move(probs), batch, tokens, heads, D, hd, inv_sqrt](Node& o) {
                         const Tensor& in = qn->val();
                         Tensor& gin = qn->grad_buffer();
                         RowMatrix dP(tokens, tokens), dS(tokens, tokens);
                         for (std::int64_t b = 0; b < batch; ++b) {
                             const double* base = in.data() + b * tokens * 3 * D;
                             double* gbase = gin.data() + b * tokens * 3 * D;
                             for (std::int64_t h = 0; h < heads; ++h) {
                                 Strided Q(base + h * hd, tokens, hd, Eigen::OuterStride<>(3 * D));
                                 Strided K(base + D + h * hd, tokens, hd, Eigen::OuterStride<>(3 * D));
                                 Strided V(base + 2 * D + h * hd, tokens, hd, Eigen::OuterStride<>(3 * D));
                                 StridedOut dQ(gbase + h * hd, tokens, hd, Eigen::OuterStride<>(3 * D));
                                 StridedOut dK(gbase + D + h * hd, tokens, hd, Eigen::OuterStride<>(3 * D));
                                 StridedOut dV(gbase + 2 * D + h * hd, tokens, hd, Eigen::OuterStride<>(3 * D));
                                 Eigen::Map<const RowMatrix> P(probs.data() + (b * heads + h) * tokens * tokens,
                                                               tokens, tokens);
                                 Strided dO(o.grad.data() + b * tokens * D + h * hd, tokens, hd,
                                            Eigen::OuterStride<>(D));
                                 dV.noalias() += P.transpose() * dO;
                                 dP.noalias() = dO * V.transpose();
                                 for (std::int64_t i = 0; i < tokens; ++i) {
                                     const double dot = P.row(i).dot(dP.row(i));
                                     dS.row(i) = (P.row(i).array() * (dP.row(i).array() - dot)).matrix();
                                 }
                                 dS *= inv_sqrt;
                                 dQ.noalias() += dS * K;
                                 dK.noalias() += dS.transpose() * Q;
                             }
                         }
                     });
}

Var columns(Tape& tape, const Var& x, std::int64_t start, std::int64_t width) {
    const Tensor& xv = x.value();
    if (xv.rank() != 2 || start < 0 || width <= 0 || start + width > xv.dim(1))
        throw std::invalid_argument("columns: range out of bounds for " + shape_string(xv.shape()));
    const std::int64_t M = xv.dim(0), K = xv.dim(1);
    Tensor out(Shape{M, width});
    for (std::int64_t m = 0; m < M; ++m)
        for (std::int64_t j = 0; j < width; ++j) out[m * width + j] = xv[m * K + start + j];
    Node* xn = x.node();
    return tape.make(std::move(out), {x}, [xn, M, K, start, width](Node& o) {
        auto& g = xn->grad_buffer();
        for (std::int64_t m = 0; m < M; ++m)
            for (std::int64_t j = 0; j < width; ++j) g[m * K + start + j] += o.grad[m * width + j];
    });
}

Var embedding(Tape& tape, const Var& table, std::span<const int> ids) {
    const Tensor& tv = table.value();
    if (tv.rank() != 2) throw std::invalid_argument("embedding: table must be rank 2");
    const std::int64_t V = tv.dim(0), D = tv.dim(1);
    const auto n = static_cast<std::int64_t>(ids.size());
    Tensor out(Shape{n, D});
    std::vector<int> rows(ids.begin(), ids.end());
    for (std::int64_t i = 0; i < n; ++i) {
        if (rows[i] < 0 || rows[i] >= V)
            throw std::out_of_range("embedding: id " + std::to_string(rows[i]) + " outside [0, " +
                                    std::to_string(V) + ")");
        std::copy_n(tv.data() + rows[i] * D, D, out.data() + i * D);
    }
    Node* tn = table.node();
    return tape.make(std::move(out), {table}, [tn, rows = std::move(rows), D](Node& o) {
        auto& g = tn->grad_buffer();
        for (std::size_t i = 0; i < rows.size(); ++i)
            for (std::int64_t d = 0; d < D; ++d) g[rows[i] * D + d] += o.grad[static_cast<std::int64_t>(i) * D + d];
    });
}

Var permute_elements(Tape& tape, const Var& x, std::vector<std::int64_t> index, Shape out_shape) {
    const Tensor& xv = x.value();
    if (static_cast<std::int64_t>(index.size()) != xv.numel() || shape_numel(out_shape) != xv.numel())
        throw std::invalid_argument("permute_elements: size mismatch");
    Tensor out(std::move(out_shape));
    for (std::size_t i = 0; i < index.size(); ++i) out[i] = xv[index[i]];
    Node* xn = x.node();
    return tape.make(std::move(out), {x}, [xn, index = std::move(index)](Node& o) {
        auto& g = xn->grad_buffer();
        for (std::size_t i = 0; i < index.size(); ++i) g[index[i]] += o.grad[i];
    });
}

Var mse(Tape& tape, const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "mse");
    const auto n = a.value().numel();
    if (n == 0) throw std::invalid_argument("mse: empty tensors");
    double s = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double d = a.value()[i] - b.value()[i];
        s += d * d;
    }
    Node* an = a.node();
    Node* bn = b.node();
    return tape.make(Tensor(Shape{1}, s / static_cast<double>(n)), {a, b}, [an, bn, n](Node& o) {
        const double k = 2.0 * o.grad[0] / static_cast<double>(n);
        const auto& av = an->val();
        const auto& bv = bn->val();
        if (an->requires_grad) {
            auto& g = an->grad_buffer();
            for (std::int64_t i = 0; i < n; ++i) g[i] += k * (av[i] - bv[i]);
        }
        if (bn->requires_grad) {
            auto& g = bn->grad_buffer();
            for (std::int64_t i = 0; i < n; ++i) g[i] -= k * (av[i] - bv[i]);
        }
    });
}

namespace {
double kernel_value(DistanceKernel k, double d, double beta) {
    switch (k) {
        case DistanceKernel::smooth_l1: {
            const double a = std::abs(d);
            return a < beta ? 0.5 * d * d / beta : a - 0.5 * beta;
        }
        case DistanceKernel::l2: return d * d;
        case DistanceKernel::l1: return std::abs(d);
    }
    return 0.0;
}

double kernel_derivative(DistanceKernel k, double d, double beta) {
    const double sign = d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0);
    switch (k) {
        case DistanceKernel::smooth_l1: return std::abs(d) < beta ? d / beta : sign;
        case DistanceKernel::l2: return 2.0 * d;
        case DistanceKernel::l1: return sign;
    }
    return 0.0;
}
}  // namespace

Var mean_distance(Tape& tape, const Var& a, const Var& b, DistanceKernel kernel, double beta) {
    require_same_shape(a.value(), b.value(), "mean_distance");
    if (kernel == DistanceKernel::smooth_l1 && !(beta > 0.0))
        throw std::invalid_argument("mean_distance: smooth_l1 beta must be positive");
    const auto n = a.value().numel();
    if (n == 0) throw std::invalid_argument("mean_distance: empty tensors");
    double s = 0.0;
    for (std::int64_t i = 0; i < n; ++i) s += kernel_value(kernel, a.value()[i] - b.value()[i], beta);
    Node* an = a.node();
    Node* bn = b.node();
    return tape.make(Tensor(Shape{1}, s / static_cast<double>(n)), {a, b}, [an, bn, n, kernel, beta](Node& o) {
        const double k = o.grad[0] / static_cast<double>(n);
        const auto& av = an->val();
        const auto& bv = bn->val();
        for (std::int64_t i = 0; i < n; ++i) {
            const double g = k * kernel_derivative(kernel, av[i] - bv[i], beta);
            if (an->requires_grad) an->grad_buffer()[i] += g;
            if (bn->requires_grad) bn->grad_buffer()[i] -= g;
        }
    });
}

}  // namespace sra::ag
