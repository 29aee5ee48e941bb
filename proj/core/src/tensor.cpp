// Copyright 2026 The DAEM Authors
// SPDX-License-Identifier: Apache-2.0

#include "daem/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "daem/error.hpp"

namespace daem {

namespace {

std::size_t element_count(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

void require_matrix(const Tensor& t, const char* what) {
  require(t.rank() == 2, ErrorKind::kShape,
          std::string(what) + ": expected rank-2 tensor, got " + t.shape_string());
}

// Register-blocked kernel for C = A·B with A (m×k), B (k×n), all row-major.
// Each accumulator starts at zero and adds a[i][p]*b[p][j] for p = 0..k-1, in
// order, so the vectorised block and the scalar edges round identically.
void gemm_rowmajor(const double* a, const double* b, double* c, std::size_t m,
                   std::size_t k, std::size_t n) {
  // Every output element is a plain ascending-p sum, so results match the
  // naive triple loop bit for bit. 4×32 blocks over a packed B panel keep the
  // accumulators in vector registers.
  constexpr std::size_t kR = 4;
  constexpr std::size_t kC = 32;
  const std::size_t m_main = m - m % kR;
  const std::size_t n_main = n - n % kC;
  std::vector<double> panel(k * kC);

  for (std::size_t j = 0; j < n_main; j += kC) {
    for (std::size_t p = 0; p < k; ++p)
      std::copy_n(b + p * n + j, kC, panel.data() + p * kC);
    for (std::size_t i = 0; i < m_main; i += kR) {
      double acc[kR][kC] = {};
      for (std::size_t p = 0; p < k; ++p) {
        const double* brow = panel.data() + p * kC;
        for (std::size_t r = 0; r < kR; ++r) {
          const double av = a[(i + r) * k + p];
          for (std::size_t s = 0; s < kC; ++s) acc[r][s] += av * brow[s];
        }
      }
      for (std::size_t r = 0; r < kR; ++r)
        std::copy_n(acc[r], kC, c + (i + r) * n + j);
    }
    for (std::size_t i = m_main; i < m; ++i) {
      double acc[kC] = {};
      for (std::size_t p = 0; p < k; ++p) {
        const double av = a[i * k + p];
        const double* brow = panel.data() + p * kC;
        for (std::size_t s = 0; s < kC; ++s) acc[s] += av * brow[s];
      }
      std::copy_n(acc, kC, c + i * n + j);
    }
  }
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = n_main; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] = acc;
    }
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(element_count(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  require(element_count(shape_) == data_.size(), ErrorKind::kShape,
          "tensor data length " + std::to_string(data_.size()) +
              " does not match shape " + shape_string());
  require(all_finite(), ErrorKind::kNumerical, "tensor contains non-finite values");
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    require(row.size() == c, ErrorKind::kShape, "ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

Tensor Tensor::filled(std::vector<std::size_t> shape, double value) {
  Tensor t(std::move(shape));
  t.fill(value);
  return t;
}

std::size_t Tensor::rows() const {
  if (shape_.empty()) return 0;
  return shape_.size() == 1 ? 1 : shape_[0];
}

std::size_t Tensor::cols() const { return shape_.empty() ? 0 : shape_.back(); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

Tensor& Tensor::operator+=(const Tensor& other) {
  require(same_shape(other), ErrorKind::kShape,
          "tensor add: " + shape_string() + " vs " + other.shape_string());
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

std::string Tensor::shape_string() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
  os << ']';
  return os.str();
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  require(a.cols() == b.rows(), ErrorKind::kShape,
          "matmul inner dimensions differ: " + a.shape_string() + " · " +
              b.shape_string());
  Tensor c = Tensor::zeros(a.rows(), b.cols());
  gemm_rowmajor(a.data(), b.data(), c.data(), a.rows(), a.cols(), b.cols());
  return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  require(a.cols() == b.cols(), ErrorKind::kShape,
          "matmul_nt inner dimensions differ: " + a.shape_string() + " · " +
              b.shape_string() + "ᵀ");
  const Tensor bt = transpose(b);
  Tensor c = Tensor::zeros(a.rows(), b.rows());
  gemm_rowmajor(a.data(), bt.data(), c.data(), a.rows(), a.cols(), b.rows());
  return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_tn");
  require_matrix(b, "matmul_tn");
  require(a.rows() == b.rows(), ErrorKind::kShape,
          "matmul_tn inner dimensions differ: " + a.shape_string() + "ᵀ · " +
              b.shape_string());
  const Tensor at = transpose(a);
  Tensor c = Tensor::zeros(a.cols(), b.cols());
  gemm_rowmajor(at.data(), b.data(), c.data(), a.cols(), a.rows(), b.cols());
  return c;
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const std::size_t r = a.rows();
  const std::size_t c = a.cols();
  Tensor t = Tensor::zeros(c, r);
  constexpr std::size_t kBlock = 32;
  for (std::size_t i0 = 0; i0 < r; i0 += kBlock)
    for (std::size_t j0 = 0; j0 < c; j0 += kBlock)
      for (std::size_t i = i0; i < std::min(r, i0 + kBlock); ++i)
        for (std::size_t j = j0; j < std::min(c, j0 + kBlock); ++j)
          t.data()[j * r + i] = a.data()[i * c + j];
  return t;
}

void add_row_bias(Tensor& x, const Tensor& bias) {
  require(bias.size() == x.cols(), ErrorKind::kShape,
          "bias length " + std::to_string(bias.size()) + " vs cols " +
              std::to_string(x.cols()));
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += bias[c];
  }
}

Tensor column_sums(const Tensor& x) {
  Tensor s = Tensor::vector(x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) s[c] += row[c];
  }
  return s;
}

double dot(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), ErrorKind::kShape, "dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double squared_norm(std::span<const double> a) { return dot(a, a); }

}  // namespace daem
