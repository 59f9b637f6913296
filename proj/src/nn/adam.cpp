#include "fade/nn/adam.hpp"

#include <cmath>

namespace fade::nn {

template <typename Real>
void adam_step(std::span<Parameter<Real>* const> params, const AdamOptions& opt) {
    const Real b1 = Real(opt.beta1), b2 = Real(opt.beta2), eps = Real(opt.eps);
    for (Parameter<Real>* p : params) {
        ++p->steps;
        const double t = static_cast<double>(p->steps);
        // Bias corrections folded into the step size.
        const Real step = Real(opt.lr / (1.0 - std::pow(opt.beta1, t)));
        const Real v_corr = Real(1.0 / (1.0 - std::pow(opt.beta2, t)));
        Real* w = p->value.data();
        Real* m = p->m.data();
        Real* v = p->v.data();
        const Real* g = p->grad.data();
        const std::size_t n = p->value.size();
        for (std::size_t i = 0; i < n; ++i) {
            m[i] = b1 * m[i] + (Real(1) - b1) * g[i];
            v[i] = b2 * v[i] + (Real(1) - b2) * g[i] * g[i];
            w[i] -= step * m[i] / (std::sqrt(v[i] * v_corr) + eps);
        }
    }
}

template <typename Real>
void zero_grad(std::span<Parameter<Real>* const> params) {
    for (Parameter<Real>* p : params) p->zero_grad();
}

template void adam_step<float>(std::span<Parameter<float>* const>, const AdamOptions&);
template void adam_step<double>(std::span<Parameter<double>* const>, const AdamOptions&);
template void zero_grad<float>(std::span<Parameter<float>* const>);
template void zero_grad<double>(std::span<Parameter<double>* const>);

}  // namespace fade::nn
