#include "fade/nn/graph.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "fade/nn/gemm.hpp"

namespace fade::nn {

// ---------------------------------------------------------------------------
// Graph

template <typename Real>
Var<Real> Graph<Real>::constant(Tensor<Real> value) {
    return record(std::move(value), false, nullptr);
}

template <typename Real>
Var<Real> Graph<Real>::param(Parameter<Real>& p) {
    if (auto it = param_ids_.find(&p); it != param_ids_.end()) return Var<Real>(this, it->second);
    if (!p.value.all_finite()) fail(ErrorCode::divergence, "non-finite parameter " + p.name);
    Node node;
    node.param = &p;
    node.requires_grad = true;
    nodes_.push_back(std::move(node));
    const auto id = static_cast<std::uint32_t>(nodes_.size() - 1);
    param_ids_.emplace(&p, id);
    return Var<Real>(this, id);
}

template <typename Real>
Var<Real> Graph<Real>::record(Tensor<Real> value, bool requires_grad, BackwardFn backward) {
    if (!value.all_finite()) fail(ErrorCode::divergence, "non-finite value in forward pass");
    Node node;
    node.value = std::move(value);
    node.requires_grad = requires_grad;
    if (requires_grad) node.backward = std::move(backward);
    nodes_.push_back(std::move(node));
    return Var<Real>(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

template <typename Real>
Tensor<Real>& Graph<Real>::grad(std::uint32_t id) {
    Node& node = nodes_.at(id);
    if (node.param) return node.param->grad;
    if (node.grad.empty() && !node.value.empty()) node.grad = Tensor<Real>(node.value.shape());
    return node.grad;
}

template <typename Real>
void Graph<Real>::backward(Var<Real> loss) {
    require(loss.value().size() == 1, ErrorCode::usage, "backward requires a scalar loss");
    require(loss.requires_grad(), ErrorCode::usage, "loss does not depend on any parameter");
    grad(loss.id())[0] += Real(1);
    for (std::size_t i = nodes_.size(); i-- > 0;) {
        Node& node = nodes_[i];
        if (!node.requires_grad || !node.backward || node.grad.empty()) continue;
        node.backward(*this, node.grad);
    }
}

template <typename Real>
void Graph<Real>::clear() {
    nodes_.clear();
    param_ids_.clear();
}

// ---------------------------------------------------------------------------
// Scalar helpers

namespace {

// Polynomial expf (Cephes coefficients), written as plain arithmetic so loops
// over it vectorize. Relative error is within a few ulp on the clamped range.
inline float exp_poly(float x) {
    x = x < -87.0f ? -87.0f : x;
    x = x > 88.0f ? 88.0f : x;
    const float shifter = 12582912.0f;  // 1.5 * 2^23: adding it rounds to an integer
    const float n = (x * 1.44269504088896341f + shifter) - shifter;
    const float r = (x - n * 0.693359375f) - n * -2.12194440e-4f;
    float p = 1.9875691500e-4f;
    p = p * r + 1.3981999507e-3f;
    p = p * r + 8.3334519073e-3f;
    p = p * r + 4.1665795894e-2f;
    p = p * r + 1.6666665459e-1f;
    p = p * r + 5.0000001201e-1f;
    p = p * (r * r) + r + 1.0f;
    const std::int32_t bits = (static_cast<std::int32_t>(n) + 127) << 23;
    return p * std::bit_cast<float>(bits);
}

inline float fast_exp(float x) { return exp_poly(x); }
inline double fast_exp(double x) { return std::exp(x); }

inline float fast_tanh(float x) { return 1.0f - 2.0f / (exp_poly(2.0f * x) + 1.0f); }
inline double fast_tanh(double x) { return std::tanh(x); }

}  // namespace

template <typename Real>
Real gelu_scalar(Real x) {
    const Real c = Real(kGeluCoeff);
    const Real inner = c * (x + Real(kGeluCubic) * x * x * x);
    return Real(0.5) * x * (Real(1) + fast_tanh(inner));
}

template <typename Real>
Real sigmoid_scalar(Real x) {
    return Real(1) / (Real(1) + fast_exp(-x));
}

template <typename Real>
void softmax_rows(const Tensor<Real>& logits, Tensor<Real>& probs) {
    if (probs.shape() != logits.shape()) probs = Tensor<Real>(logits.shape());
    const std::size_t n = logits.cols();
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        const Real* in = logits.row(r);
        Real* out = probs.row(r);
        const Real mx = *std::max_element(in, in + n);
        for (std::size_t j = 0; j < n; ++j) out[j] = fast_exp(in[j] - mx);
        Real total = 0;
        for (std::size_t j = 0; j < n; ++j) total += out[j];
        const Real inv = Real(1) / total;
        for (std::size_t j = 0; j < n; ++j) out[j] *= inv;
    }
}

namespace {

template <typename Real>
bool any_grad(Var<Real> a) {
    return a.requires_grad();
}
template <typename Real, typename... Rest>
bool any_grad(Var<Real> a, Rest... rest) {
    return a.requires_grad() || any_grad(rest...);
}

template <typename Real>
void check_same(const Tensor<Real>& a, const Tensor<Real>& b, const char* op) {
    if (a.shape() != b.shape())
        fail(ErrorCode::dimension, std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                                       " vs " + shape_string(b.shape()));
}

template <typename Real>
void add_into(Tensor<Real>& dst, const Tensor<Real>& src) {
    Real* d = dst.data();
    const Real* s = src.data();
    for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

}  // namespace

// ---------------------------------------------------------------------------
// Linear algebra

template <typename Real>
Var<Real> matmul(Var<Real> x, Var<Real> w) {
    const Tensor<Real>& xv = x.value();
    const Tensor<Real>& wv = w.value();
    if (wv.rank() != 2 || xv.cols() != wv.dim(0))
        fail(ErrorCode::dimension, "matmul: " + shape_string(xv.shape()) + " x " +
                                       shape_string(wv.shape()));
    const std::size_t rows = xv.rows(), k = wv.dim(0), n = wv.dim(1);
    Shape shape = xv.shape();
    shape.back() = n;
    Tensor<Real> out(shape);
    gemm_acc(rows, n, k, xv.data(), k, wv.data(), n, out.data(), n);

    const auto xi = x.id(), wi = w.id();
    return x.graph().record(std::move(out), any_grad(x, w),
                            [xi, wi, rows, k, n](Graph<Real>& g, const Tensor<Real>& go) {
                                const Tensor<Real>& xv = g.value(xi);
                                const Tensor<Real>& wv = g.value(wi);
                                if (g.requires_grad(xi)) {
                                    std::vector<Real> wt(k * n);
                                    transpose(wv.data(), k, n, wt.data());
                                    gemm_acc(rows, k, n, go.data(), n, wt.data(), k,
                                             g.grad(xi).data(), k);
                                }
                                if (g.requires_grad(wi)) {
                                    std::vector<Real> xt(rows * k);
                                    transpose(xv.data(), rows, k, xt.data());
                                    gemm_acc(k, n, rows, xt.data(), rows, go.data(), n,
                                             g.grad(wi).data(), n);
                                }
                            });
}

template <typename Real>
Var<Real> bmm(Var<Real> a, Var<Real> w) {
    const Tensor<Real>& av = a.value();
    const Tensor<Real>& wv = w.value();
    if (wv.rank() != 3 || wv.dim(1) != wv.dim(2) || av.cols() != wv.dim(1) ||
        av.rows() != wv.dim(0))
        fail(ErrorCode::dimension,
             "bmm: " + shape_string(av.shape()) + " x " + shape_string(wv.shape()));
    const std::size_t batch = wv.dim(0), d = wv.dim(1);
    Tensor<Real> out(av.shape());
    for (std::size_t b = 0; b < batch; ++b)
        gemm_acc(1, d, d, av.row(b), d, wv.data() + b * d * d, d, out.row(b), d);

    const auto ai = a.id(), wi = w.id();
    return a.graph().record(
        std::move(out), any_grad(a, w), [ai, wi, batch, d](Graph<Real>& g, const Tensor<Real>& go) {
            const Tensor<Real>& av = g.value(ai);
            const Tensor<Real>& wv = g.value(wi);
            if (g.requires_grad(ai)) {
                Tensor<Real>& da = g.grad(ai);
                std::vector<Real> wt(d * d);
                for (std::size_t b = 0; b < batch; ++b) {
                    transpose(wv.data() + b * d * d, d, d, wt.data());
                    gemm_acc(1, d, d, go.row(b), d, wt.data(), d, da.row(b), d);
                }
            }
            if (g.requires_grad(wi)) {
                Tensor<Real>& dw = g.grad(wi);
                for (std::size_t b = 0; b < batch; ++b)
                    gemm_acc(d, d, 1, av.row(b), 1, go.row(b), d, dw.data() + b * d * d, d);
            }
        });
}

template <typename Real>
Var<Real> conv1d(Var<Real> x, Var<Real> kernel, Var<Real> bias) {
    const Tensor<Real>& xv = x.value();
    const Tensor<Real>& kv = kernel.value();
    const Tensor<Real>& bv = bias.value();
    if (xv.rank() != 3 || kv.rank() != 3 || kv.dim(1) != xv.dim(2) || bv.size() != kv.dim(2))
        fail(ErrorCode::dimension,
             "conv1d: " + shape_string(xv.shape()) + " with kernel " + shape_string(kv.shape()));
    const std::size_t width = kv.dim(0);
    if (width % 2 == 0) fail(ErrorCode::config, "conv1d: kernel width must be odd");
    const std::size_t batch = xv.dim(0), steps = xv.dim(1), cin = xv.dim(2), cout = kv.dim(2);
    const std::size_t half = width / 2, patch = width * cin;

    // im2col: row (b, t) holds x[b, t - half + kk, :] for kk = 0..width-1.
    Tensor<Real> cols({batch * steps, patch});
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t t = 0; t < steps; ++t) {
            Real* dst = cols.row(b * steps + t);
            for (std::size_t kk = 0; kk < width; ++kk) {
                const std::ptrdiff_t src_t =
                    static_cast<std::ptrdiff_t>(t + kk) - static_cast<std::ptrdiff_t>(half);
                if (src_t < 0 || src_t >= static_cast<std::ptrdiff_t>(steps)) continue;
                const Real* src = xv.data() + (b * steps + static_cast<std::size_t>(src_t)) * cin;
                std::copy(src, src + cin, dst + kk * cin);
            }
        }
    Tensor<Real> out({batch, steps, cout});
    for (std::size_t r = 0; r < batch * steps; ++r) std::copy(bv.data(), bv.data() + cout, out.row(r));
    gemm_acc(batch * steps, cout, patch, cols.data(), patch, kv.data(), cout, out.data(), cout);

    const auto xi = x.id(), ki = kernel.id(), bi = bias.id();
    return x.graph().record(
        std::move(out), any_grad(x, kernel, bias),
        [xi, ki, bi, cols = std::move(cols), batch, steps, cin, cout, width, half,
         patch](Graph<Real>& g, const Tensor<Real>& go) {
            const std::size_t rows = batch * steps;
            if (g.requires_grad(bi)) {
                Real* db = g.grad(bi).data();
                for (std::size_t r = 0; r < rows; ++r) {
                    const Real* gr = go.row(r);
                    for (std::size_t o = 0; o < cout; ++o) db[o] += gr[o];
                }
            }
            if (g.requires_grad(ki)) {
                std::vector<Real> ct(rows * patch);
                transpose(cols.data(), rows, patch, ct.data());
                gemm_acc(patch, cout, rows, ct.data(), rows, go.data(), cout, g.grad(ki).data(),
                         cout);
            }
            if (g.requires_grad(xi)) {
                const Tensor<Real>& kv = g.value(ki);
                std::vector<Real> kt(patch * cout);
                transpose(kv.data(), patch, cout, kt.data());
                std::vector<Real> dcols(rows * patch, Real(0));
                gemm_acc(rows, patch, cout, go.data(), cout, kt.data(), patch, dcols.data(), patch);
                Real* dx = g.grad(xi).data();
                for (std::size_t b = 0; b < batch; ++b)
                    for (std::size_t t = 0; t < steps; ++t) {
                        const Real* src = dcols.data() + (b * steps + t) * patch;
                        for (std::size_t kk = 0; kk < width; ++kk) {
                            const std::ptrdiff_t st = static_cast<std::ptrdiff_t>(t + kk) -
                                                      static_cast<std::ptrdiff_t>(half);
                            if (st < 0 || st >= static_cast<std::ptrdiff_t>(steps)) continue;
                            Real* dst = dx + (b * steps + static_cast<std::size_t>(st)) * cin;
                            for (std::size_t c = 0; c < cin; ++c) dst[c] += src[kk * cin + c];
                        }
                    }
            }
        });
}

template <typename Real>
Var<Real> rolling_project(const Tensor<Real>& cache, Var<Real> g, Var<Real> w,
                          Tensor<Real>* next_cache) {
    const Tensor<Real>& gv = g.value();
    const Tensor<Real>& wv = w.value();
    const std::size_t rows = cache.rows(), width = cache.cols(), block = gv.cols();
    if (gv.rows() != rows || block > width || wv.rank() != 2 || wv.dim(0) != width)
        fail(ErrorCode::dimension, "rolling_project: cache " + shape_string(cache.shape()) +
                                       ", feature " + shape_string(gv.shape()) + ", weight " +
                                       shape_string(wv.shape()));
    const std::size_t n = wv.dim(1);
    Tensor<Real> next({rows, width});
    for (std::size_t r = 0; r < rows; ++r) {
        const Real* src = cache.row(r);
        Real* dst = next.row(r);
        std::copy(src + block, src + width, dst);
        std::copy(gv.row(r), gv.row(r) + block, dst + (width - block));
    }
    Tensor<Real> out({rows, n});
    gemm_acc(rows, n, width, next.data(), width, wv.data(), n, out.data(), n);
    if (next_cache) *next_cache = next;

    const auto gi = g.id(), wi = w.id();
    return g.graph().record(
        std::move(out), any_grad(g, w),
        [gi, wi, next = std::move(next), rows, width, block, n](Graph<Real>& gr,
                                                                const Tensor<Real>& go) {
            if (gr.requires_grad(gi)) {
                // Only the appended block depends on g: rows [width - block, width) of w.
                const Tensor<Real>& wv = gr.value(wi);
                std::vector<Real> wt(block * n);
                transpose(wv.data() + (width - block) * n, block, n, wt.data());
                gemm_acc(rows, block, n, go.data(), n, wt.data(), block, gr.grad(gi).data(),
                         block);
            }
            if (gr.requires_grad(wi)) {
                std::vector<Real> nt(rows * width);
                transpose(next.data(), rows, width, nt.data());
                gemm_acc(width, n, rows, nt.data(), rows, go.data(), n, gr.grad(wi).data(), n);
            }
        });
}

// ---------------------------------------------------------------------------
// Normalization and activations

template <typename Real>
Var<Real> layer_norm(Var<Real> x, Var<Real> gain, Var<Real> bias, Real eps) {
    const Tensor<Real>& xv = x.value();
    const std::size_t n = xv.cols(), rows = xv.rows();
    if (gain.value().size() != n || bias.value().size() != n)
        fail(ErrorCode::dimension, "layer_norm: affine width does not match " +
                                       shape_string(xv.shape()));
    const Real* gv = gain.value().data();
    const Real* bv = bias.value().data();
    Tensor<Real> xhat(xv.shape());
    Tensor<Real> out(xv.shape());
    std::vector<Real> inv_std(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const Real* in = xv.row(r);
        Real mean = 0;
        for (std::size_t j = 0; j < n; ++j) mean += in[j];
        mean /= Real(n);
        Real var = 0;
        for (std::size_t j = 0; j < n; ++j) var += (in[j] - mean) * (in[j] - mean);
        var /= Real(n);
        const Real inv = Real(1) / std::sqrt(var + eps);
        inv_std[r] = inv;
        Real* xh = xhat.row(r);
        Real* o = out.row(r);
        for (std::size_t j = 0; j < n; ++j) {
            xh[j] = (in[j] - mean) * inv;
            o[j] = gv[j] * xh[j] + bv[j];
        }
    }

    const auto xi = x.id(), gi = gain.id(), bi = bias.id();
    return x.graph().record(
        std::move(out), any_grad(x, gain, bias),
        [xi, gi, bi, xhat = std::move(xhat), inv_std = std::move(inv_std), n,
         rows](Graph<Real>& g, const Tensor<Real>& go) {
            if (g.requires_grad(gi)) {
                Real* dg = g.grad(gi).data();
                for (std::size_t r = 0; r < rows; ++r) {
                    const Real* gr = go.row(r);
                    const Real* xh = xhat.row(r);
                    for (std::size_t j = 0; j < n; ++j) dg[j] += gr[j] * xh[j];
                }
            }
            if (g.requires_grad(bi)) {
                Real* db = g.grad(bi).data();
                for (std::size_t r = 0; r < rows; ++r) {
                    const Real* gr = go.row(r);
                    for (std::size_t j = 0; j < n; ++j) db[j] += gr[j];
                }
            }
            if (g.requires_grad(xi)) {
                const Real* gv = g.value(gi).data();
                Tensor<Real>& dx = g.grad(xi);
                std::vector<Real> dxh(n);
                for (std::size_t r = 0; r < rows; ++r) {
                    const Real* gr = go.row(r);
                    const Real* xh = xhat.row(r);
                    Real sum_d = 0, sum_dx = 0;
                    for (std::size_t j = 0; j < n; ++j) {
                        dxh[j] = gr[j] * gv[j];
                        sum_d += dxh[j];
                        sum_dx += dxh[j] * xh[j];
                    }
                    const Real scale = inv_std[r] / Real(n);
                    Real* d = dx.row(r);
                    for (std::size_t j = 0; j < n; ++j)
                        d[j] += scale * (Real(n) * dxh[j] - sum_d - xh[j] * sum_dx);
                }
            }
        });
}

template <typename Real>
Var<Real> gelu(Var<Real> x) {
    const Tensor<Real>& xv = x.value();
    Tensor<Real> out(xv.shape());
    for (std::size_t i = 0; i < xv.size(); ++i) out[i] = gelu_scalar(xv[i]);
    const auto xi = x.id();
    return x.graph().record(std::move(out), any_grad(x),
                            [xi](Graph<Real>& g, const Tensor<Real>& go) {
                                const Tensor<Real>& xv = g.value(xi);
                                Real* dx = g.grad(xi).data();
                                const Real c = Real(kGeluCoeff), a = Real(kGeluCubic);
                                for (std::size_t i = 0; i < xv.size(); ++i) {
                                    const Real v = xv[i];
                                    const Real t = fast_tanh(c * (v + a * v * v * v));
                                    const Real d = Real(0.5) * (Real(1) + t) +
                                                   Real(0.5) * v * (Real(1) - t * t) * c *
                                                       (Real(1) + Real(3) * a * v * v);
                                    dx[i] += go[i] * d;
                                }
                            });
}

template <typename Real>
Var<Real> sigmoid(Var<Real> x) {
    const Tensor<Real>& xv = x.value();
    Tensor<Real> out(xv.shape());
    for (std::size_t i = 0; i < xv.size(); ++i) out[i] = sigmoid_scalar(xv[i]);
    const auto xi = x.id();
    Tensor<Real> y = out;
    return x.graph().record(std::move(out), any_grad(x),
                            [xi, y = std::move(y)](Graph<Real>& g, const Tensor<Real>& go) {
                                Real* dx = g.grad(xi).data();
                                for (std::size_t i = 0; i < y.size(); ++i)
                                    dx[i] += go[i] * y[i] * (Real(1) - y[i]);
                            });
}

// ---------------------------------------------------------------------------
// Elementwise

template <typename Real>
Var<Real> add(Var<Real> a, Var<Real> b) {
    const Tensor<Real>& av = a.value();
    const Tensor<Real>& bv = b.value();
    check_same(av, bv, "add");
    Tensor<Real> out(av.shape());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
    const auto ai = a.id(), bi = b.id();
    return a.graph().record(std::move(out), any_grad(a, b),
                            [ai, bi](Graph<Real>& g, const Tensor<Real>& go) {
                                if (g.requires_grad(ai)) add_into(g.grad(ai), go);
                                if (g.requires_grad(bi)) add_into(g.grad(bi), go);
                            });
}

template <typename Real>
Var<Real> mul(Var<Real> a, Var<Real> b) {
    const Tensor<Real>& av = a.value();
    const Tensor<Real>& bv = b.value();
    check_same(av, bv, "mul");
    Tensor<Real> out(av.shape());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
    const auto ai = a.id(), bi = b.id();
    return a.graph().record(std::move(out), any_grad(a, b),
                            [ai, bi](Graph<Real>& g, const Tensor<Real>& go) {
                                const Tensor<Real>& av = g.value(ai);
                                const Tensor<Real>& bv = g.value(bi);
                                if (g.requires_grad(ai)) {
                                    Real* d = g.grad(ai).data();
                                    for (std::size_t i = 0; i < go.size(); ++i) d[i] += go[i] * bv[i];
                                }
                                if (g.requires_grad(bi)) {
                                    Real* d = g.grad(bi).data();
                                    for (std::size_t i = 0; i < go.size(); ++i) d[i] += go[i] * av[i];
                                }
                            });
}

template <typename Real>
Var<Real> scale(Var<Real> x, Var<Real> scalar) {
    const Tensor<Real>& xv = x.value();
    require(scalar.value().size() == 1, ErrorCode::dimension, "scale: factor must be a scalar");
    const Real s = scalar.value()[0];
    Tensor<Real> out(xv.shape());
    for (std::size_t i = 0; i < xv.size(); ++i) out[i] = s * xv[i];
    const auto xi = x.id(), si = scalar.id();
    return x.graph().record(std::move(out), any_grad(x, scalar),
                            [xi, si](Graph<Real>& g, const Tensor<Real>& go) {
                                const Tensor<Real>& xv = g.value(xi);
                                if (g.requires_grad(si)) {
                                    Real acc = 0;
                                    for (std::size_t i = 0; i < go.size(); ++i) acc += go[i] * xv[i];
                                    g.grad(si)[0] += acc;
                                }
                                if (g.requires_grad(xi)) {
                                    const Real s = g.value(si)[0];
                                    Real* d = g.grad(xi).data();
                                    for (std::size_t i = 0; i < go.size(); ++i) d[i] += s * go[i];
                                }
                            });
}

template <typename Real>
Var<Real> mix(Var<Real> alpha, Var<Real> a, Var<Real> b) {
    const Tensor<Real>& wv = alpha.value();
    const Tensor<Real>& av = a.value();
    const Tensor<Real>& bv = b.value();
    check_same(wv, av, "mix");
    check_same(av, bv, "mix");
    Tensor<Real> out(av.shape());
    // Written as b + alpha (a - b) so equal branches pass through exactly.
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = bv[i] + wv[i] * (av[i] - bv[i]);
    const auto wi = alpha.id(), ai = a.id(), bi = b.id();
    return a.graph().record(std::move(out), any_grad(alpha, a, b),
                            [wi, ai, bi](Graph<Real>& g, const Tensor<Real>& go) {
                                const Tensor<Real>& wv = g.value(wi);
                                if (g.requires_grad(wi)) {
                                    const Tensor<Real>& av = g.value(ai);
                                    const Tensor<Real>& bv = g.value(bi);
                                    Real* d = g.grad(wi).data();
                                    for (std::size_t i = 0; i < go.size(); ++i)
                                        d[i] += go[i] * (av[i] - bv[i]);
                                }
                                if (g.requires_grad(ai)) {
                                    Real* d = g.grad(ai).data();
                                    for (std::size_t i = 0; i < go.size(); ++i) d[i] += go[i] * wv[i];
                                }
                                if (g.requires_grad(bi)) {
                                    Real* d = g.grad(bi).data();
                                    for (std::size_t i = 0; i < go.size(); ++i)
                                        d[i] += go[i] * (Real(1) - wv[i]);
                                }
                            });
}

template <typename Real>
Var<Real> add_bias(Var<Real> x, Var<Real> bias) {
    const Tensor<Real>& xv = x.value();
    const Tensor<Real>& bv = bias.value();
    const std::size_t n = xv.cols(), rows = xv.rows();
    require(bv.size() == n, ErrorCode::dimension, "add_bias: bias width mismatch");
    Tensor<Real> out(xv.shape());
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < n; ++j) out.row(r)[j] = xv.row(r)[j] + bv[j];
    const auto xi = x.id(), bi = bias.id();
    return x.graph().record(std::move(out), any_grad(x, bias),
                            [xi, bi, n, rows](Graph<Real>& g, const Tensor<Real>& go) {
                                if (g.requires_grad(xi)) add_into(g.grad(xi), go);
                                if (g.requires_grad(bi)) {
                                    Real* d = g.grad(bi).data();
                                    for (std::size_t r = 0; r < rows; ++r)
                                        for (std::size_t j = 0; j < n; ++j) d[j] += go.row(r)[j];
                                }
                            });
}

template <typename Real>
Var<Real> sum(Var<Real> x) {
    const Tensor<Real>& xv = x.value();
    Real acc = 0;
    for (std::size_t i = 0; i < xv.size(); ++i) acc += xv[i];
    const auto xi = x.id();
    return x.graph().record(Tensor<Real>({1}, acc), any_grad(x),
                            [xi](Graph<Real>& g, const Tensor<Real>& go) {
                                Tensor<Real>& d = g.grad(xi);
                                for (std::size_t i = 0; i < d.size(); ++i) d[i] += go[0];
                            });
}

// ---------------------------------------------------------------------------
// Shape and lookup

template <typename Real>
Var<Real> reshape(Var<Real> x, Shape shape) {
    Tensor<Real> out = x.value().reshaped(std::move(shape));
    const auto xi = x.id();
    return x.graph().record(std::move(out), any_grad(x),
                            [xi](Graph<Real>& g, const Tensor<Real>& go) {
                                Tensor<Real>& d = g.grad(xi);
                                for (std::size_t i = 0; i < d.size(); ++i) d[i] += go[i];
                            });
}

template <typename Real>
Var<Real> slice_cols(Var<Real> x, std::size_t start, std::size_t width) {
    const Tensor<Real>& xv = x.value();
    const std::size_t n = xv.cols(), rows = xv.rows();
    require(start + width <= n, ErrorCode::dimension, "slice_cols: range exceeds width");
    Shape shape = xv.shape();
    shape.back() = width;
    Tensor<Real> out(shape);
    for (std::size_t r = 0; r < rows; ++r)
        std::copy(xv.row(r) + start, xv.row(r) + start + width, out.row(r));
    const auto xi = x.id();
    return x.graph().record(std::move(out), any_grad(x),
                            [xi, start, width, n, rows](Graph<Real>& g, const Tensor<Real>& go) {
                                Real* d = g.grad(xi).data();
                                for (std::size_t r = 0; r < rows; ++r)
                                    for (std::size_t j = 0; j < width; ++j)
                                        d[r * n + start + j] += go[r * width + j];
                            });
}

template <typename Real>
Var<Real> embedding(Var<Real> table, std::span<const std::uint8_t> symbols, Shape shape) {
    const Tensor<Real>& tv = table.value();
    require(tv.rank() == 2, ErrorCode::dimension, "embedding: table must be 2-D");
    require(element_count(shape) == symbols.size(), ErrorCode::dimension,
            "embedding: symbol count does not match shape");
    const std::size_t vocab = tv.dim(0), d = tv.dim(1);
    for (const auto s : symbols)
        if (s >= vocab) fail(ErrorCode::usage, "embedding: symbol out of range");
    shape.push_back(d);
    Tensor<Real> out(shape);
    for (std::size_t i = 0; i < symbols.size(); ++i)
        std::copy(tv.row(symbols[i]), tv.row(symbols[i]) + d, out.data() + i * d);
    const auto ti = table.id();
    std::vector<std::uint8_t> syms(symbols.begin(), symbols.end());
    return table.graph().record(std::move(out), any_grad(table),
                                [ti, syms = std::move(syms), d](Graph<Real>& g,
                                                                const Tensor<Real>& go) {
                                    Tensor<Real>& dt = g.grad(ti);
                                    for (std::size_t i = 0; i < syms.size(); ++i) {
                                        Real* dst = dt.row(syms[i]);
                                        const Real* src = go.data() + i * d;
                                        for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
                                    }
                                });
}

template <typename Real>
Var<Real> softmax_cross_entropy(Var<Real> logits, std::span<const std::uint8_t> targets) {
    const Tensor<Real>& lv = logits.value();
    const std::size_t rows = lv.rows(), n = lv.cols();
    require(targets.size() == rows, ErrorCode::dimension,
            "softmax_cross_entropy: one target per row required");
    Tensor<Real> probs;
    softmax_rows(lv, probs);
    Real loss = 0;
    for (std::size_t r = 0; r < rows; ++r) {
        require(targets[r] < n, ErrorCode::usage, "softmax_cross_entropy: target out of range");
        loss += -std::log(probs.row(r)[targets[r]]);
    }
    loss /= Real(rows);
    const auto li = logits.id();
    std::vector<std::uint8_t> tg(targets.begin(), targets.end());
    return logits.graph().record(
        Tensor<Real>({1}, loss), any_grad(logits),
        [li, probs = std::move(probs), tg = std::move(tg), rows, n](Graph<Real>& g,
                                                                    const Tensor<Real>& go) {
            Tensor<Real>& dl = g.grad(li);
            const Real s = go[0] / Real(rows);
            for (std::size_t r = 0; r < rows; ++r) {
                const Real* p = probs.row(r);
                Real* d = dl.row(r);
                for (std::size_t j = 0; j < n; ++j) d[j] += s * p[j];
                d[tg[r]] -= s;
            }
        });
}

// ---------------------------------------------------------------------------
// Instantiations

#define FADE_INSTANTIATE(R)                                                                   \
    template class Graph<R>;                                                                  \
    template R gelu_scalar<R>(R);                                                             \
    template R sigmoid_scalar<R>(R);                                                          \
    template void softmax_rows<R>(const Tensor<R>&, Tensor<R>&);                              \
    template Var<R> matmul<R>(Var<R>, Var<R>);                                                \
    template Var<R> bmm<R>(Var<R>, Var<R>);                                                   \
    template Var<R> conv1d<R>(Var<R>, Var<R>, Var<R>);                                        \
    template Var<R> rolling_project<R>(const Tensor<R>&, Var<R>, Var<R>, Tensor<R>*);         \
    template Var<R> layer_norm<R>(Var<R>, Var<R>, Var<R>, R);                                 \
    template Var<R> gelu<R>(Var<R>);                                                          \
    template Var<R> sigmoid<R>(Var<R>);                                                       \
    template Var<R> add<R>(Var<R>, Var<R>);                                                   \
    template Var<R> mul<R>(Var<R>, Var<R>);                                                   \
    template Var<R> scale<R>(Var<R>, Var<R>);                                                 \
    template Var<R> mix<R>(Var<R>, Var<R>, Var<R>);                                           \
    template Var<R> add_bias<R>(Var<R>, Var<R>);                                              \
    template Var<R> sum<R>(Var<R>);                                                           \
    template Var<R> reshape<R>(Var<R>, Shape);                                                \
    template Var<R> slice_cols<R>(Var<R>, std::size_t, std::size_t);                          \
    template Var<R> embedding<R>(Var<R>, std::span<const std::uint8_t>, Shape);               \
    template Var<R> softmax_cross_entropy<R>(Var<R>, std::span<const std::uint8_t>);

FADE_INSTANTIATE(float)
FADE_INSTANTIATE(double)

#undef FADE_INSTANTIATE

}  // namespace fade::nn
