#pragma once

// Central finite-difference gradient oracle shared by the unit and acceptance
// tests. Everything runs in double precision.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "fade/nn/graph.hpp"

namespace fade::testing {

struct GradReport {
    double max_rel_error = 0;
    std::string worst;  // "param[index]"
    std::size_t checked = 0;
};

inline double relative_error(double analytic, double numeric) {
    const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    return std::abs(analytic - numeric) / scale;
}

/// `build(graph, state)` records a scalar loss. `params(state)` lists the
/// parameters to perturb. The state is copied for every evaluation, so builds
/// that mutate non-learned state (the rolling cache) are handled.
template <typename State>
GradReport gradcheck(const State& base,
                     const std::function<nn::Var<double>(nn::Graph<double>&, State&)>& build,
                     const std::function<std::vector<nn::Parameter<double>*>(State&)>& params,
                     double h = 1e-4, std::size_t max_per_param = 24) {
    State s = base;
    std::vector<nn::Parameter<double>*> ps = params(s);
    for (auto* p : ps) p->zero_grad();
    {
        nn::Graph<double> g;
        g.backward(build(g, s));
    }
    auto eval = [&](std::size_t pi, std::size_t idx, double delta) {
        State t = base;
        auto tp = params(t);
        tp[pi]->value[idx] += delta;
        nn::Graph<double> g;
        return build(g, t).value()[0];
    };
    GradReport report;
    for (std::size_t pi = 0; pi < ps.size(); ++pi) {
        const std::size_t n = ps[pi]->value.size();
        const std::size_t stride = std::max<std::size_t>(1, n / max_per_param);
        for (std::size_t idx = 0; idx < n; idx += stride) {
            const double numeric = (eval(pi, idx, h) - eval(pi, idx, -h)) / (2 * h);
            const double analytic = ps[pi]->grad[idx];
            const double err = relative_error(analytic, numeric);
            ++report.checked;
            if (err > report.max_rel_error) {
                report.max_rel_error = err;
                report.worst = ps[pi]->name + "[" + std::to_string(idx) + "]";
            }
        }
    }
    return report;
}

/// Fixed random projection so every output element gets a distinct upstream gradient.
inline nn::Var<double> project_to_scalar(nn::Var<double> out, unsigned seed) {
    nn::Tensor<double> w(out.shape());
    unsigned state = seed * 2654435761u + 1;
    for (auto& x : w.values()) {
        state = state * 1664525u + 1013904223u;
        x = double(state >> 8) / double(1u << 24) - 0.5;
    }
    auto c = out.graph().constant(std::move(w));
    return nn::sum(nn::mul(out, c));
}

}  // namespace fade::testing
