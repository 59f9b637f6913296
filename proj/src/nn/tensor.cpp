#include "fade/nn/tensor.hpp"

#include <bit>
#include <cstdint>
#include <numeric>
#include <type_traits>

namespace fade::nn {

std::size_t element_count(const Shape& shape) noexcept {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

template <typename Real>
bool Tensor<Real>::all_finite() const noexcept {
    // A value is non-finite iff its exponent bits are all ones. Integer
    // compares keep the loop vectorizable.
    using Bits = std::conditional_t<sizeof(Real) == 4, std::uint32_t, std::uint64_t>;
    constexpr Bits mask = sizeof(Real) == 4 ? Bits(0x7f800000u) : Bits(0x7ff0000000000000ull);
    Bits bad = 0;
    for (const Real x : data_) bad |= Bits((std::bit_cast<Bits>(x) & mask) == mask);
    return bad == 0;
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace fade::nn
