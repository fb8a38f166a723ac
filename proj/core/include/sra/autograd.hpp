#pragma once

// Minimal tape-based reverse-mode differentiation over sra::Tensor.
//
// A Tape owns every node created during one forward pass. Nodes are
// appended in evaluation order, so walking the tape backwards is a valid
// topological order for the gradient sweep. A tape in no_grad mode
// records values only; ops on it never allocate gradients, which is how
// teacher forwards are kept out of the backward pass.

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "sra/params.hpp"
#include "sra/tensor.hpp"

namespace sra::ag {

struct Node {
    Tensor value;
    const Tensor* external = nullptr;  // parameters and borrowed constants
    Tensor grad;                       // empty until first accumulation
    bool requires_grad = false;
    Parameter* param = nullptr;
    std::function<void(Node&)> backward;

    const Tensor& val() const { return external ? *external : value; }
    /// Gradient buffer, zero-initialised on first use.
    Tensor& grad_buffer();
};

class Var {
public:
    Var() = default;
    explicit Var(Node* node) : node_(node) {}

    const Tensor& value() const { return node_->val(); }
    const Shape& shape() const { return node_->val().shape(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    /// Gradient after Tape::backward; empty tensor when none flowed here.
    const Tensor& grad() const { return node_->grad; }
    Node* node() const { return node_; }
    explicit operator bool() const { return node_ != nullptr; }
    /// Value of a single-element variable.
    double item() const;

private:
    Node* node_ = nullptr;
};

class Tape {
public:
    enum class Mode { record, no_grad };

    explicit Tape(Mode mode = Mode::record) : mode_(mode) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool recording() const { return mode_ == Mode::record; }

    Var constant(Tensor value);
    /// Borrows `value`; the caller keeps it alive for the tape's lifetime.
    Var constant_ref(const Tensor& value);
    /// Leaf bound to a parameter. backward() accumulates into param.grad.
    Var parameter(Parameter& param);

    /// Creates an op output. `backward` receives the output node whose grad
    /// is populated and must accumulate into the inputs' grad buffers.
    Var make(Tensor value, std::initializer_list<Var> inputs, std::function<void(Node&)> backward);

    /// Seeds d(loss)/d(loss) = 1 and sweeps the tape in reverse.
    void backward(const Var& loss);

    std::size_t size() const { return nodes_.size(); }

private:
    Mode mode_;
    std::deque<Node> nodes_;
};

// Ops. Shapes are row-major; "rows" means every axis but the last.

/// y = x W + b. x [..., K], W [K, N], b [N] (optional).
Var linear(Tape& tape, const Var& x, const Var& w, const Var& b);
Var add(Tape& tape, const Var& a, const Var& b);
/// x [M, D] + block [R, D] repeated every R rows (M divisible by R).
Var add_repeated_rows(Tape& tape, const Var& x, const Var& block);
Var scale(Tape& tape, const Var& x, double s);
/// a + s * b for single-element a, b.
Var add_scaled(Tape& tape, const Var& a, const Var& b, double s);
Var silu(Tape& tape, const Var& x);
/// GELU, tanh approximation.
Var gelu(Tape& tape, const Var& x);
/// Layer norm without affine parameters (eps 1e-6) over the last axis,
/// followed by per-sample modulation x̂ (1 + scale) + shift.
/// x [B*T, D], shift/scale [B, D].
Var layer_norm_modulate(Tape& tape, const Var& x, const Var& shift, const Var& scale, std::int64_t tokens);
/// x + gate ⊙ y with gate [B, D] broadcast over T tokens.
Var gated_add(Tape& tape, const Var& x, const Var& gate, const Var& y, std::int64_t tokens);
/// Multi-head softmax attention from a packed q|k|v projection [B, T, 3D]
/// (or [B*T, 3D]); output has the same layout with width D.
Var attention(Tape& tape, const Var& qkv, std::int64_t batch, std::int64_t tokens, std::int64_t heads);
/// Columns [start, start + width) of a [M, K] variable.
Var columns(Tape& tape, const Var& x, std::int64_t start, std::int64_t width);
/// Rows of `table` [V, D] selected by ids -> [ids.size(), D].
Var embedding(Tape& tape, const Var& table, std::span<const int> ids);
/// out.flat[i] = x.flat[index[i]]; index must be a permutation.
Var permute_elements(Tape& tape, const Var& x, std::vector<std::int64_t> index, Shape out_shape);
/// Mean over all elements of (a - b)^2.
Var mse(Tape& tape, const Var& a, const Var& b);

enum class DistanceKernel { smooth_l1, l2, l1 };
/// Mean over all elements of kernel(a - b). smooth_l1 uses transition beta.
Var mean_distance(Tape& tape, const Var& a, const Var& b, DistanceKernel kernel, double beta);

}  // namespace sra::ag
