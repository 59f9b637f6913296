#pragma once

#include <span>

#include "fade/nn/graph.hpp"

namespace fade::nn {

struct AdamOptions {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// One bias-corrected Adam update of every parameter, in the order given.
/// Gradients are left untouched; call zero_grad before the next backward.
template <typename Real>
void adam_step(std::span<Parameter<Real>* const> params, const AdamOptions& opt);

template <typename Real>
void zero_grad(std::span<Parameter<Real>* const> params);

}  // namespace fade::nn
