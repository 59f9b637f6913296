#pragma once

#include <algorithm>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "fade/error.hpp"

namespace fade::nn {

using Shape = std::vector<std::size_t>;

std::size_t element_count(const Shape& shape) noexcept;
std::string shape_string(const Shape& shape);

/// Dense row-major tensor. Value semantics; the last axis is contiguous.
template <typename Real>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape, Real fill = Real(0))
        : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

    Tensor(Shape shape, std::vector<Real> data) : shape_(std::move(shape)), data_(std::move(data)) {
        require(data_.size() == element_count(shape_), ErrorCode::dimension,
                "tensor data length does not match shape");
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    /// Size of the last axis.
    std::size_t cols() const noexcept { return shape_.empty() ? 1 : shape_.back(); }
    /// Product of all axes except the last.
    std::size_t rows() const noexcept { return cols() == 0 ? 0 : data_.size() / cols(); }

    Real* data() noexcept { return data_.data(); }
    const Real* data() const noexcept { return data_.data(); }
    std::span<Real> values() noexcept { return data_; }
    std::span<const Real> values() const noexcept { return data_; }
    Real* row(std::size_t r) noexcept { return data_.data() + r * cols(); }
    const Real* row(std::size_t r) const noexcept { return data_.data() + r * cols(); }

    Real& operator[](std::size_t i) noexcept { return data_[i]; }
    const Real& operator[](std::size_t i) const noexcept { return data_[i]; }

    void fill(Real v) noexcept { std::fill(data_.begin(), data_.end(), v); }

    /// Same data, new shape with an equal element count.
    Tensor reshaped(Shape shape) const& {
        Tensor out = *this;
        out.reshape(std::move(shape));
        return out;
    }
    void reshape(Shape shape) {
        require(element_count(shape) == data_.size(), ErrorCode::dimension,
                "reshape changes element count");
        shape_ = std::move(shape);
    }

    bool all_finite() const noexcept;

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    Shape shape_;
    std::vector<Real> data_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace fade::nn
