#include "fade/model/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "fade/error.hpp"
#include "fade/nn/fpenv.hpp"

namespace fade::model {

namespace {

// Uniform in [-a, a) from the top 53 bits of the generator.
template <typename Real>
Tensor<Real> uniform(std::mt19937_64& rng, Shape shape, double a) {
    Tensor<Real> t(std::move(shape));
    for (auto& x : t.values()) {
        const double u = double(rng() >> 11) * 0x1.0p-53;
        x = Real(a * (2.0 * u - 1.0));
    }
    return t;
}

template <typename Real>
Parameter<Real> linear(std::mt19937_64& rng, const char* name, std::size_t in, std::size_t out) {
    return {name, uniform<Real>(rng, {in, out}, 1.0 / std::sqrt(double(in)))};
}

template <typename Real>
Parameter<Real> filled(const char* name, Shape shape, Real value) {
    return {name, Tensor<Real>(std::move(shape), value)};
}

}  // namespace

template <typename Real>
ModelState<Real> ModelState<Real>::initial(const ModelConfig& cfg) {
    cfg.validate();
    const std::size_t D = cfg.embed_dim, Dh = cfg.hidden_dim(), Dc = cfg.cache_dim;
    const std::size_t dh = cfg.hgr_dim, De = cfg.ffn_dim, B = cfg.batch, k = cfg.conv_kernel;
    std::mt19937_64 rng(cfg.seed);
    ModelState s;
    s.embedding = {"embedding", uniform<Real>(rng, {kAlphabet, D}, std::sqrt(3.0))};
    s.input_gain = filled<Real>("input_gain", {Dh}, 1);
    s.input_bias = filled<Real>("input_bias", {Dh}, 0);

    s.cache_gate = linear<Real>(rng, "cache_gate", D, D);
    s.cache_value = linear<Real>(rng, "cache_value", D, D);
    s.cache_proj = linear<Real>(rng, "cache_proj", Dc, Dh);
    s.cache_residual = filled<Real>("cache_residual", {1}, 1);
    s.cache = Tensor<Real>({B, 1, Dc});

    s.local_gain = filled<Real>("local_gain", {D}, 1);
    s.local_bias = filled<Real>("local_bias", {D}, 0);
    s.conv_kernel = {"conv_kernel", uniform<Real>(rng, {k, D, D}, 1.0 / std::sqrt(double(k * D)))};
    s.conv_bias = filled<Real>("conv_bias", {D}, 0);

    s.router = linear<Real>(rng, "router", Dh, Dh);

    s.coarse_gain = filled<Real>("coarse_gain", {Dh}, 1);
    s.coarse_bias = filled<Real>("coarse_bias", {Dh}, 0);
    s.down = linear<Real>(rng, "down", Dh, dh);
    s.up = linear<Real>(rng, "up", dh, Dh);
    Tensor<Real> eye({B, dh, dh});
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t i = 0; i < dh; ++i) eye[(b * dh + i) * dh + i] = Real(1);
    s.memory = {"memory", std::move(eye)};
    s.self_gate = linear<Real>(rng, "self_gate", Dh, Dh);
    s.coarse_residual = filled<Real>("coarse_residual", {1}, 1);

    s.fine_gain = filled<Real>("fine_gain", {Dh}, 1);
    s.fine_bias = filled<Real>("fine_bias", {Dh}, 0);
    s.ffn_gate = linear<Real>(rng, "ffn_gate", Dh, De);
    s.ffn_value = linear<Real>(rng, "ffn_value", Dh, De);
    s.ffn_out = linear<Real>(rng, "ffn_out", De, Dh);
    s.out_gain = filled<Real>("out_gain", {Dh}, 1);
    s.out_bias = filled<Real>("out_bias", {Dh}, 0);
    s.fine_residual = filled<Real>("fine_residual", {1}, 1);

    // Small head so the untrained model starts close to uniform.
    s.head = {"head", uniform<Real>(rng, {Dh, kAlphabet}, 0.1 / std::sqrt(double(Dh)))};
    s.head_bias = filled<Real>("head_bias", {kAlphabet}, 0);
    return s;
}

template <typename Real>
std::vector<Parameter<Real>*> ModelState<Real>::parameters() {
    return {&embedding,   &input_gain,      &input_bias,  &cache_gate,  &cache_value,
            &cache_proj,  &cache_residual,  &local_gain,  &local_bias,  &conv_kernel,
            &conv_bias,   &router,          &coarse_gain, &coarse_bias, &down,
            &up,          &memory,          &self_gate,   &coarse_residual,
            &fine_gain,   &fine_bias,       &ffn_gate,    &ffn_value,   &ffn_out,
            &out_gain,    &out_bias,        &fine_residual, &head,      &head_bias};
}

// ---------------------------------------------------------------------------
// Stages

template <typename Real>
Embedded<Real> embed(Graph<Real>& g, ModelState<Real>& s, const ContextWindow& ctx) {
    const std::size_t B = ctx.streams, T = ctx.steps;
    require(ctx.symbols.size() == B * T, ErrorCode::dimension, "embed: context size mismatch");
    const std::size_t D = s.embedding.value.dim(1);
    require(s.input_gain.value.size() == T * D, ErrorCode::dimension,
            "embed: context length does not match the model");
    Var<Real> x_emb = nn::embedding(g.param(s.embedding), ctx.symbols, {B, T});
    Var<Real> flat = nn::reshape(x_emb, {B, 1, T * D});
    Var<Real> x = nn::layer_norm(flat, g.param(s.input_gain), g.param(s.input_bias));
    return {x_emb, x};
}

template <typename Real>
Var<Real> global_stream(Graph<Real>& g, ModelState<Real>& s, Var<Real> x, std::uint32_t embed_dim) {
    const std::size_t Dh = x.value().cols(), D = embed_dim;
    Var<Real> xt = nn::slice_cols(x, Dh - D, D);
    Var<Real> feature = nn::mul(nn::gelu(nn::matmul(xt, g.param(s.cache_gate))),
                                nn::matmul(xt, g.param(s.cache_value)));
    Tensor<Real> next;
    Var<Real> proj = nn::rolling_project(s.cache, feature, g.param(s.cache_proj), &next);
    next.reshape(s.cache.shape());
    s.cache = std::move(next);
    proj = nn::reshape(proj, x.shape());
    return nn::add(nn::gelu(proj), nn::scale(x, g.param(s.cache_residual)));
}

template <typename Real>
Var<Real> local_stream(Graph<Real>& g, ModelState<Real>& s, Var<Real> x_emb) {
    const Shape& shape = x_emb.shape();
    Var<Real> n = nn::layer_norm(x_emb, g.param(s.local_gain), g.param(s.local_bias));
    Var<Real> c = nn::gelu(nn::conv1d(n, g.param(s.conv_kernel), g.param(s.conv_bias)));
    return nn::reshape(c, {shape[0], 1, shape[1] * c.value().cols()});
}

template <typename Real>
Routed<Real> route_fuse(Graph<Real>& g, ModelState<Real>& s, Var<Real> x, Var<Real> h_global,
                        Var<Real> h_local) {
    Var<Real> alpha = nn::sigmoid(nn::matmul(x, g.param(s.router)));
    return {alpha, nn::mix(alpha, h_global, h_local)};
}

template <typename Real>
Var<Real> hgr_coarse(Graph<Real>& g, ModelState<Real>& s, Var<Real> h_mix, bool gated) {
    Var<Real> n = nn::layer_norm(h_mix, g.param(s.coarse_gain), g.param(s.coarse_bias));
    Var<Real> reduced = nn::bmm(nn::matmul(n, g.param(s.down)), g.param(s.memory));
    Var<Real> h_a = nn::matmul(reduced, g.param(s.up));
    if (gated) h_a = nn::mul(h_a, nn::sigmoid(nn::matmul(h_mix, g.param(s.self_gate))));
    return nn::add(h_a, nn::scale(h_mix, g.param(s.coarse_residual)));
}

template <typename Real>
Var<Real> hgr_fine(Graph<Real>& g, ModelState<Real>& s, Var<Real> h_coarse) {
    Var<Real> n = nn::layer_norm(h_coarse, g.param(s.fine_gain), g.param(s.fine_bias));
    Var<Real> expand = nn::mul(nn::gelu(nn::matmul(n, g.param(s.ffn_gate))),
                               nn::matmul(n, g.param(s.ffn_value)));
    Var<Real> back = nn::layer_norm(nn::matmul(expand, g.param(s.ffn_out)), g.param(s.out_gain),
                                    g.param(s.out_bias));
    return nn::add(nn::gelu(back), nn::scale(h_coarse, g.param(s.fine_residual)));
}

template <typename Real>
Activations<Real> forward(Graph<Real>& g, ModelState<Real>& s, const ModelConfig& cfg,
                          const ContextWindow& ctx) {
    Activations<Real> a;
    auto [x_emb, x] = embed(g, s, ctx);
    a.x_emb = x_emb;
    a.x = x;
    const Variant v = cfg.variant;
    if (v != Variant::cnn_only) a.h_global = global_stream(g, s, x, cfg.embed_dim);
    if (v != Variant::mlp_only) a.h_local = local_stream(g, s, x_emb);
    switch (v) {
        case Variant::mlp_only:
            a.h_mix = a.h_global;
            break;
        case Variant::cnn_only:
            a.h_mix = a.h_local;
            break;
        default: {
            auto routed = route_fuse(g, s, x, a.h_global, a.h_local);
            a.alpha = routed.alpha;
            a.h_mix = routed.h_mix;
        }
    }
    a.h_coarse = a.h_mix;
    if (v == Variant::full || v == Variant::dmd_cci_gate || v == Variant::dmd_cci_nogate)
        a.h_coarse = hgr_coarse(g, s, a.h_mix, v != Variant::dmd_cci_nogate);
    a.h = v == Variant::full ? hgr_fine(g, s, a.h_coarse) : a.h_coarse;
    a.logits = nn::add_bias(nn::matmul(a.h, g.param(s.head)), g.param(s.head_bias));
    return a;
}

// ---------------------------------------------------------------------------
// Predictor

template <typename Real>
Predictor<Real>::Predictor(const ModelConfig& cfg)
    : cfg_(cfg), state_(ModelState<Real>::initial(cfg)) {}

template <typename Real>
Predictor<Real>::Predictor(const ModelConfig& cfg, ModelState<Real> state)
    : cfg_(cfg), state_(std::move(state)) {
    cfg_.validate();
}

template <typename Real>
Predictor<Real>::Predictor(const Predictor& other)
    : cfg_(other.cfg_), state_(other.state_), router_(other.router_), steps_(other.steps_) {}

template <typename Real>
Predictor<Real>& Predictor<Real>::operator=(const Predictor& other) {
    if (this != &other) {
        cfg_ = other.cfg_;
        state_ = other.state_;
        graph_.reset();
        logits_ = {};
        probs_ = {};
        router_ = other.router_;
        steps_ = other.steps_;
    }
    return *this;
}

template <typename Real>
const ProbBatch<Real>& Predictor<Real>::predict(const ContextWindow& ctx) {
    require(ctx.streams == cfg_.batch && ctx.steps == cfg_.time_steps, ErrorCode::dimension,
            "predict: context does not match the configured batch and time steps");
    nn::ScopedFlushDenormals fp;
    if (!graph_) graph_ = std::make_unique<Graph<Real>>();
    graph_->clear();
    pending_ = false;
    try {
        Activations<Real> a = forward(*graph_, state_, cfg_, ctx);
        logits_ = a.logits;
        nn::softmax_rows(a.logits.value(), probs_.probs);
        probs_.probs.reshape({cfg_.batch, kAlphabet});
        if (!probs_.probs.all_finite()) fail(ErrorCode::divergence, "non-finite probabilities");
        if (cfg_.variant != Variant::mlp_only && cfg_.variant != Variant::cnn_only) {
            const auto values = a.alpha.value().values();
            double total = 0, lo = values[0], hi = values[0];
            for (Real x : values) {
                total += double(x);
                lo = std::min(lo, double(x));
                hi = std::max(hi, double(x));
            }
            router_ = {total / double(values.size()), lo, hi};
        } else {
            const double fixed = cfg_.variant == Variant::mlp_only ? 1.0 : 0.0;
            router_ = {fixed, fixed, fixed};
        }
        pending_ = true;
    } catch (const DivergenceError&) {
        graph_.reset();
        throw;
    } catch (const Error& e) {
        graph_.reset();
        if (e.code() == ErrorCode::divergence) throw DivergenceError(steps_, e.what());
        throw;
    }
    return probs_;
}

template <typename Real>
double Predictor<Real>::pending_loss(std::span<const std::uint8_t> targets) {
    require(pending_, ErrorCode::usage, "no pending forward pass");
    require(targets.size() == cfg_.batch, ErrorCode::dimension, "one target per stream required");
    double loss = 0;
    for (std::size_t k = 0; k < targets.size(); ++k)
        loss -= std::log(double(probs_.probs.row(k)[targets[k]]));
    return loss / double(targets.size());
}

template <typename Real>
double Predictor<Real>::accumulate_gradients(std::span<const std::uint8_t> targets) {
    require(pending_, ErrorCode::usage, "train_step without a pending forward pass");
    pending_ = false;
    require(targets.size() == cfg_.batch, ErrorCode::dimension, "one target per stream required");
    nn::ScopedFlushDenormals fp;
    try {
        Var<Real> loss = nn::softmax_cross_entropy(logits_, targets);
        const double value = double(loss.value()[0]);
        graph_->backward(loss);
        for (Parameter<Real>* p : state_.parameters())
            if (!p->grad.all_finite())
                fail(ErrorCode::divergence, "non-finite gradient for " + p->name);
        return value;
    } catch (const Error& e) {
        graph_->clear();
        if (e.code() == ErrorCode::divergence) throw DivergenceError(steps_, e.what());
        throw;
    }
}

template <typename Real>
double Predictor<Real>::train_step(std::span<const std::uint8_t> targets) {
    require(pending_, ErrorCode::usage, "train_step without a pending forward pass");
    nn::ScopedFlushDenormals fp;
    auto params = state_.parameters();
    nn::zero_grad<Real>(params);
    const double loss = accumulate_gradients(targets);
    nn::adam_step<Real>(params, {cfg_.lr, cfg_.beta1, cfg_.beta2, cfg_.eps});
    graph_->clear();
    ++steps_;
    return loss;
}

double average_nll(std::span<const double> losses) {
    require(!losses.empty(), ErrorCode::usage, "average_nll: empty loss log");
    double total = 0;
    for (double l : losses) total += l;
    return total / double(losses.size());
}

double average_bits_per_byte(std::span<const double> losses) {
    return average_nll(losses) / std::numbers::ln2;
}

#define FADE_INSTANTIATE(R)                                                                   \
    template struct ModelState<R>;                                                            \
    template class Predictor<R>;                                                              \
    template Embedded<R> embed<R>(Graph<R>&, ModelState<R>&, const ContextWindow&);           \
    template Var<R> global_stream<R>(Graph<R>&, ModelState<R>&, Var<R>, std::uint32_t);       \
    template Var<R> local_stream<R>(Graph<R>&, ModelState<R>&, Var<R>);                       \
    template Routed<R> route_fuse<R>(Graph<R>&, ModelState<R>&, Var<R>, Var<R>, Var<R>);      \
    template Var<R> hgr_coarse<R>(Graph<R>&, ModelState<R>&, Var<R>, bool);                   \
    template Var<R> hgr_fine<R>(Graph<R>&, ModelState<R>&, Var<R>);                           \
    template Activations<R> forward<R>(Graph<R>&, ModelState<R>&, const ModelConfig&,         \
                                       const ContextWindow&);

FADE_INSTANTIATE(float)
FADE_INSTANTIATE(double)

#undef FADE_INSTANTIATE

}  // namespace fade::model
