#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "fade/model/config.hpp"
#include "fade/nn/adam.hpp"
#include "fade/nn/graph.hpp"

namespace fade::model {

using nn::Graph;
using nn::Parameter;
using nn::Shape;
using nn::Tensor;
using nn::Var;

/// Per-stream history x_{t-T..t-1}, row-major [streams x steps].
struct ContextWindow {
    std::uint32_t streams = 0;
    std::uint32_t steps = 0;
    std::vector<std::uint8_t> symbols;

    ContextWindow() = default;
    ContextWindow(std::uint32_t b, std::uint32_t t) : streams(b), steps(t), symbols(std::size_t(b) * t) {}

    std::uint8_t* row(std::uint32_t k) { return symbols.data() + std::size_t(k) * steps; }
    const std::uint8_t* row(std::uint32_t k) const { return symbols.data() + std::size_t(k) * steps; }
};

/// B conditional distributions over the byte alphabet.
template <typename Real>
struct ProbBatch {
    Tensor<Real> probs;  // [B, 256]

    std::size_t streams() const noexcept { return probs.rows(); }
    std::span<const Real> row(std::size_t k) const { return {probs.row(k), kAlphabet}; }
};

/// Every learnable weight plus the per-stream rolling cache.
template <typename Real>
struct ModelState {
    Parameter<Real> embedding;  // [256, D]
    Parameter<Real> input_gain, input_bias;  // LN over the flattened context, [D_h]

    // Global stream.
    Parameter<Real> cache_gate, cache_value;  // [D, D]
    Parameter<Real> cache_proj;               // [D_cache, D_h]
    Parameter<Real> cache_residual;           // lambda_m
    Tensor<Real> cache;                       // [B, 1, D_cache], not learned

    // Local stream.
    Parameter<Real> local_gain, local_bias;  // [D]
    Parameter<Real> conv_kernel;             // [k, D, D]
    Parameter<Real> conv_bias;               // [D]

    Parameter<Real> router;  // [D_h, D_h]

    // Coarse channel interaction.
    Parameter<Real> coarse_gain, coarse_bias;  // [D_h]
    Parameter<Real> down;                      // [D_h, d_h]
    Parameter<Real> up;                        // [d_h, D_h]
    Parameter<Real> memory;                    // [B, d_h, d_h], one slice per stream
    Parameter<Real> self_gate;                 // [D_h, D_h]
    Parameter<Real> coarse_residual;           // lambda_c

    // Fine refinement.
    Parameter<Real> fine_gain, fine_bias;  // [D_h]
    Parameter<Real> ffn_gate, ffn_value;   // [D_h, D_e]
    Parameter<Real> ffn_out;               // [D_e, D_h]
    Parameter<Real> out_gain, out_bias;    // [D_h]
    Parameter<Real> fine_residual;         // lambda_o

    Parameter<Real> head;       // [D_h, 256]
    Parameter<Real> head_bias;  // [256]

    /// Fresh state: seeded random weights, identity memory slices, unit
    /// residual scales, zero cache.
    static ModelState initial(const ModelConfig& cfg);

    /// All parameters in their fixed update order.
    std::vector<Parameter<Real>*> parameters();

    friend bool operator==(const ModelState&, const ModelState&) = default;
};

/// Intermediate activations of one forward pass.
template <typename Real>
struct Activations {
    Var<Real> x_emb;     // [B, T, D]
    Var<Real> x;         // [B, 1, D_h]
    Var<Real> h_global;  // [B, 1, D_h]
    Var<Real> h_local;
    Var<Real> alpha;
    Var<Real> h_mix;
    Var<Real> h_coarse;
    Var<Real> h;
    Var<Real> logits;  // [B, 1, 256]
};

// Stages of the forward pass, exposed individually for testing.

template <typename Real>
struct Embedded {
    Var<Real> x_emb;
    Var<Real> x;
};

template <typename Real>
Embedded<Real> embed(Graph<Real>& g, ModelState<Real>& s, const ContextWindow& ctx);

/// Gated feature of the newest symbol is rolled into s.cache (mutates it).
template <typename Real>
Var<Real> global_stream(Graph<Real>& g, ModelState<Real>& s, Var<Real> x, std::uint32_t embed_dim);

template <typename Real>
Var<Real> local_stream(Graph<Real>& g, ModelState<Real>& s, Var<Real> x_emb);

template <typename Real>
struct Routed {
    Var<Real> alpha;
    Var<Real> h_mix;
};

template <typename Real>
Routed<Real> route_fuse(Graph<Real>& g, ModelState<Real>& s, Var<Real> x, Var<Real> h_global,
                        Var<Real> h_local);

template <typename Real>
Var<Real> hgr_coarse(Graph<Real>& g, ModelState<Real>& s, Var<Real> h_mix, bool gated = true);

template <typename Real>
Var<Real> hgr_fine(Graph<Real>& g, ModelState<Real>& s, Var<Real> h_coarse);

/// Whole forward pass for a variant, through the output logits.
template <typename Real>
Activations<Real> forward(Graph<Real>& g, ModelState<Real>& s, const ModelConfig& cfg,
                          const ContextWindow& ctx);

struct RouterStats {
    double mean = 0;
    double min = 0;
    double max = 0;
};

/// Online predictor: predict() then train_step() once per coding step.
template <typename Real>
class Predictor {
public:
    explicit Predictor(const ModelConfig& cfg);
    Predictor(const ModelConfig& cfg, ModelState<Real> state);

    /// Copies weights, moments and cache; never the pending forward pass.
    Predictor(const Predictor& other);
    Predictor& operator=(const Predictor& other);

    const ModelConfig& config() const noexcept { return cfg_; }
    ModelState<Real>& state() noexcept { return state_; }
    const ModelState<Real>& state() const noexcept { return state_; }

    /// Forward pass for all streams. Rolls the cache; leaves the graph
    /// pending for train_step. Throws DivergenceError on non-finite values.
    const ProbBatch<Real>& predict(const ContextWindow& ctx);

    /// NLL of the pending forward pass (nats, mean over streams), backward,
    /// and one Adam step. Clears the pending pass.
    double train_step(std::span<const std::uint8_t> targets);

    /// Like train_step but leaves gradients in place and skips the update.
    double accumulate_gradients(std::span<const std::uint8_t> targets);

    /// Loss of the pending forward pass without backward.
    double pending_loss(std::span<const std::uint8_t> targets);

    const RouterStats& router_stats() const noexcept { return router_; }
    long long steps() const noexcept { return steps_; }
    bool pending() const noexcept { return pending_; }

private:
    ModelConfig cfg_;
    ModelState<Real> state_;
    std::unique_ptr<Graph<Real>> graph_;
    Var<Real> logits_;
    ProbBatch<Real> probs_;
    RouterStats router_;
    long long steps_ = 0;
    bool pending_ = false;
};

/// Arithmetic mean of per-step losses in nats.
double average_nll(std::span<const double> losses);
/// Same quantity in bits per byte.
double average_bits_per_byte(std::span<const double> losses);

extern template class Predictor<float>;
extern template class Predictor<double>;

}  // namespace fade::model
