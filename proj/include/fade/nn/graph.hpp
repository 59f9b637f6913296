#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "fade/nn/tensor.hpp"

namespace fade::nn {

/// A learnable tensor plus its gradient and Adam moments.
template <typename Real>
struct Parameter {
    std::string name;
    Tensor<Real> value;
    Tensor<Real> grad;
    Tensor<Real> m;
    Tensor<Real> v;
    std::uint64_t steps = 0;

    Parameter() = default;
    Parameter(std::string n, Tensor<Real> init)
        : name(std::move(n)),
          value(std::move(init)),
          grad(value.shape()),
          m(value.shape()),
          v(value.shape()) {}

    void zero_grad() { grad.fill(Real(0)); }

    friend bool operator==(const Parameter&, const Parameter&) = default;
};

template <typename Real>
class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
template <typename Real>
class Var {
public:
    Var() = default;
    Var(Graph<Real>* graph, std::uint32_t id) : graph_(graph), id_(id) {}

    Graph<Real>& graph() const { return *graph_; }
    std::uint32_t id() const noexcept { return id_; }
    const Tensor<Real>& value() const;
    const Shape& shape() const { return value().shape(); }
    bool requires_grad() const;

private:
    Graph<Real>* graph_ = nullptr;
    std::uint32_t id_ = 0;
};

/// Tape of recorded operations. Backward replays the tape in exact reverse order.
template <typename Real>
class Graph {
public:
    using BackwardFn = std::function<void(Graph&, const Tensor<Real>& grad_out)>;

    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    /// Leaf without gradient.
    Var<Real> constant(Tensor<Real> value);
    /// Leaf bound to a Parameter; gradients accumulate into param.grad. Memoized per parameter.
    Var<Real> param(Parameter<Real>& p);

    /// Records an operation result. `backward` receives dLoss/dOutput.
    Var<Real> record(Tensor<Real> value, bool requires_grad, BackwardFn backward);

    const Tensor<Real>& value(std::uint32_t id) const {
        const Node& node = nodes_.at(id);
        return node.param ? node.param->value : node.value;
    }
    bool requires_grad(std::uint32_t id) const { return nodes_.at(id).requires_grad; }

    /// Gradient accumulator for a node (allocated zero on first use).
    Tensor<Real>& grad(std::uint32_t id);

    /// Seeds dLoss/dLoss = 1 and propagates. `loss` must be a scalar.
    void backward(Var<Real> loss);

    std::size_t size() const noexcept { return nodes_.size(); }
    void clear();

private:
    struct Node {
        Tensor<Real> value;
        Tensor<Real> grad;
        Parameter<Real>* param = nullptr;
        bool requires_grad = false;
        BackwardFn backward;
    };

    std::deque<Node> nodes_;
    std::unordered_map<const Parameter<Real>*, std::uint32_t> param_ids_;
};

template <typename Real>
const Tensor<Real>& Var<Real>::value() const {
    return graph_->value(id_);
}

template <typename Real>
bool Var<Real>::requires_grad() const {
    return graph_->requires_grad(id_);
}

// ---------------------------------------------------------------------------
// Operations. All treat the last axis as the feature axis and every leading
// axis as independent rows unless stated otherwise.

/// x[..., k] * w[k, n] -> [..., n]
template <typename Real>
Var<Real> matmul(Var<Real> x, Var<Real> w);

/// a[B, 1, d] (or [B, d]) times per-batch w[B, d, d]; slice b uses only w[b].
template <typename Real>
Var<Real> bmm(Var<Real> a, Var<Real> w);

/// x[B, T, C] cross-correlated along T with kernel[k, C, C_out], "same" zero
/// padding, plus bias[C_out]. k must be odd.
template <typename Real>
Var<Real> conv1d(Var<Real> x, Var<Real> kernel, Var<Real> bias);

/// Normalizes the last axis to zero mean / unit variance, then gain * . + bias.
template <typename Real>
Var<Real> layer_norm(Var<Real> x, Var<Real> gain, Var<Real> bias, Real eps = Real(1e-5));

template <typename Real>
Var<Real> gelu(Var<Real> x);
template <typename Real>
Var<Real> sigmoid(Var<Real> x);

template <typename Real>
Var<Real> add(Var<Real> a, Var<Real> b);
template <typename Real>
Var<Real> mul(Var<Real> a, Var<Real> b);
/// scalar[1] * x
template <typename Real>
Var<Real> scale(Var<Real> x, Var<Real> scalar);
/// alpha * a + (1 - alpha) * b
template <typename Real>
Var<Real> mix(Var<Real> alpha, Var<Real> a, Var<Real> b);
/// x[..., n] + bias[n]
template <typename Real>
Var<Real> add_bias(Var<Real> x, Var<Real> bias);
/// Sum of all elements -> [1].
template <typename Real>
Var<Real> sum(Var<Real> x);

template <typename Real>
Var<Real> reshape(Var<Real> x, Shape shape);
/// Columns [start, start + width) of the last axis.
template <typename Real>
Var<Real> slice_cols(Var<Real> x, std::size_t start, std::size_t width);

/// table[V, D] gathered at symbols (row-major over `shape`) -> [shape..., D].
template <typename Real>
Var<Real> embedding(Var<Real> table, std::span<const std::uint8_t> symbols, Shape shape);

/// Mean over rows of -ln softmax(logits)[target] -> [1].
template <typename Real>
Var<Real> softmax_cross_entropy(Var<Real> logits, std::span<const std::uint8_t> targets);

/// Rolling cache projection. Builds next = [cache[:, width(g):], g] and returns
/// (next * w). Only g and w receive gradients; the retained cache is history.
template <typename Real>
Var<Real> rolling_project(const Tensor<Real>& cache, Var<Real> g, Var<Real> w,
                          Tensor<Real>* next_cache);

// Plain (non-recorded) helpers shared by the ops and their callers.

constexpr double kGeluCoeff = 0.7978845608;  // sqrt(2 / pi), tanh approximation
constexpr double kGeluCubic = 0.044715;

template <typename Real>
Real gelu_scalar(Real x);
template <typename Real>
Real sigmoid_scalar(Real x);

/// Row-wise softmax, shift-by-max stabilized.
template <typename Real>
void softmax_rows(const Tensor<Real>& logits, Tensor<Real>& probs);

}  // namespace fade::nn
