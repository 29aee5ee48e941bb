// Copyright 2026 The DAEM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace daem {

/// Dense row-major tensor of 64-bit floats. Most of the model works on rank-2
/// tensors (rows = tokens or nodes, cols = features); rank-1 tensors are
/// treated as a single row.
class Tensor {
 public:
  Tensor() = default;

  /// Zero-filled tensor of the given shape.
  explicit Tensor(std::vector<std::size_t> shape);

  /// Takes ownership of `data`; throws kShape if the sizes disagree and
  /// kNumerical if any entry is NaN or infinite.
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor zeros(std::size_t rows, std::size_t cols) {
    return Tensor({rows, cols});
  }
  static Tensor vector(std::size_t n) { return Tensor({n}); }
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor filled(std::vector<std::size_t> shape, double value);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  /// Leading dimension for rank 2, 1 for rank 1.
  std::size_t rows() const;
  /// Trailing dimension.
  std::size_t cols() const;

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols(), cols()}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols(), cols()};
  }

  bool all_finite() const;
  void fill(double value);
  Tensor zeros_like() const { return Tensor(shape_); }

  /// Elementwise in-place helpers used by the optimizer and gradient
  /// accumulation.
  Tensor& operator+=(const Tensor& other);
  Tensor& operator*=(double s);

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  std::string shape_string() const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

/// C = A·B. Every output element accumulates its inner products in ascending
/// inner-index order starting from zero, so results are bit-identical to the
/// textbook triple loop.
Tensor matmul(const Tensor& a, const Tensor& b);
/// C = A·Bᵀ with the same accumulation order.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
/// C = Aᵀ·B with the same accumulation order.
Tensor matmul_tn(const Tensor& a, const Tensor& b);

Tensor transpose(const Tensor& a);

/// Adds `bias` (length cols) to every row.
void add_row_bias(Tensor& x, const Tensor& bias);
/// Column sums, i.e. the gradient of a row-broadcast bias.
Tensor column_sums(const Tensor& x);

double dot(std::span<const double> a, std::span<const double> b);
double squared_norm(std::span<const double> a);

}  // namespace daem
