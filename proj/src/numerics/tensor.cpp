// Copyright 2026 The bitro Authors
// SPDX-License-Identifier: Apache-2.0

#include "bitro/numerics/tensor.hpp"

#include <cmath>
#include <sstream>

#include "bitro/error.hpp"

namespace bitro {

std::size_t shape_product(const Shape& s) noexcept {
    std::size_t p = 1;
    for (auto e : s) p *= e;
    return p;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_product(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_product(shape_) != data_.size())
        throw DimensionError("tensor shape " + shape_str(shape_) + " holds " +
                             std::to_string(shape_product(shape_)) + " values, got " +
                             std::to_string(data_.size()));
}

Tensor Tensor::from(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw DimensionError("ragged matrix literal");
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor(Shape{r, c}, std::move(data));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
    return Tensor(Shape{values.size()}, std::vector<double>(values));
}

Tensor Tensor::row(std::span<const double> values) {
    return Tensor(Shape{1, values.size()}, std::vector<double>(values.begin(), values.end()));
}

double Tensor::item() const {
    if (data_.size() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape_));
    return data_[0];
}

bool Tensor::all_finite() const noexcept {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_product(shape) != data_.size())
        throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    return Tensor(std::move(shape), data_);
}

Tensor Tensor::transposed() const {
    const std::size_t r = rows(), c = cols();
    Tensor t(Shape{c, r});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) t.data_[j * r + i] = data_[i * c + j];
    return t;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw DimensionError("shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace bitro
