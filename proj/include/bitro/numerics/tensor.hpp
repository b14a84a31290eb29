// Copyright 2026 The bitro Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace bitro {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);

/// Dense row-major tensor of doubles, rank 0 to 2 in practice.
///
/// A rank-1 tensor behaves as a 1 x n row for the matrix accessors.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }
    static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0) {
        return Tensor(Shape{rows, cols}, fill);
    }
    /// Nested-list literal, e.g. Tensor::from({{1, 2}, {3, 4}}).
    static Tensor from(std::initializer_list<std::initializer_list<double>> rows);
    static Tensor vector(std::initializer_list<double> values);
    static Tensor row(std::span<const double> values);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::size_t rows() const noexcept { return shape_.size() == 2 ? shape_[0] : 1; }
    std::size_t cols() const noexcept {
        return shape_.size() == 2 ? shape_[1] : (shape_.size() == 1 ? shape_[0] : 1);
    }

    std::span<const double> data() const noexcept { return data_; }
    std::span<double> data() noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    double operator[](std::size_t i) const { return data_[i]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }

    std::span<const double> row_span(std::size_t r) const {
        return std::span<const double>(data_).subspan(r * cols(), cols());
    }
    std::span<double> row_span(std::size_t r) {
        return std::span<double>(data_).subspan(r * cols(), cols());
    }

    double item() const;
    bool all_finite() const noexcept;
    Tensor reshaped(Shape shape) const;
    Tensor transposed() const;

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    Shape shape_;
    std::vector<double> data_;
};

std::size_t shape_product(const Shape& s) noexcept;

/// Element-wise maximum absolute difference; DimensionError on shape mismatch.
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace bitro
