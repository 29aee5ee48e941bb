// Copyright 2026 The DAEM Authors
// SPDX-License-Identifier: Apache-2.0

#include "daem/ops.hpp"

#include <cmath>

#include "daem/error.hpp"

namespace daem {

Tensor layer_norm(const Tensor& x, double eps, const Tensor& gain,
                  const Tensor& shift, LayerNormCache* cache) {
  const std::size_t n = x.cols();
  require(n > 0, ErrorKind::kShape, "layer_norm: zero-length row");
  require(eps > 0.0, ErrorKind::kValidation, "layer_norm: eps must be positive");
  require(gain.size() == n && shift.size() == n, ErrorKind::kShape,
          "layer_norm: gain/shift must match the last dimension");

  Tensor out(x.shape());
  Tensor xhat(x.shape());
  std::vector<double> inv_std(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    auto xh = xhat.row(r);
    auto o = out.row(r);
    for (std::size_t c = 0; c < n; ++c) {
      xh[c] = (row[c] - mean) * is;
      o[c] = gain[c] * xh[c] + shift[c];
    }
  }
  if (cache) {
    cache->normalized = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return out;
}

Tensor layer_norm_backward(const Tensor& dy, const LayerNormCache& cache,
                           const Tensor& gain, Tensor& dgain, Tensor& dshift) {
  const Tensor& xhat = cache.normalized;
  const std::size_t n = xhat.cols();
  Tensor dx(xhat.shape());
  std::vector<double> dxhat(n);
  for (std::size_t r = 0; r < xhat.rows(); ++r) {
    auto g = dy.row(r);
    auto xh = xhat.row(r);
    double mean_d = 0.0;
    double mean_dx = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      dgain[c] += g[c] * xh[c];
      dshift[c] += g[c];
      dxhat[c] = g[c] * gain[c];
      mean_d += dxhat[c];
      mean_dx += dxhat[c] * xh[c];
    }
    mean_d /= static_cast<double>(n);
    mean_dx /= static_cast<double>(n);
    auto out = dx.row(r);
    for (std::size_t c = 0; c < n; ++c)
      out[c] = cache.inv_std[r] * (dxhat[c] - mean_d - xh[c] * mean_dx);
  }
  return dx;
}

Tensor leaky_relu(const Tensor& x, double slope) {
  require(slope >= 0.0 && slope <= 1.0, ErrorKind::kValidation,
          "leaky_relu: slope must lie in [0, 1]");
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] >= 0.0 ? x[i] : slope * x[i];
  return y;
}

Tensor leaky_relu_backward(const Tensor& dy, const Tensor& x, double slope) {
  Tensor dx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] >= 0.0 ? dy[i] : slope * dy[i];
  return dx;
}

Tensor dropout_mask(const std::vector<std::size_t>& shape, double p, SeededRng& rng,
                    bool training) {
  require(p >= 0.0 && p < 1.0, ErrorKind::kValidation,
          "dropout probability must lie in [0, 1)");
  Tensor mask = Tensor::filled(shape, 1.0);
  if (!training || p == 0.0) return mask;
  const double scale = 1.0 / (1.0 - p);
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = rng.uniform() < p ? 0.0 : scale;
  return mask;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  require(a.same_shape(b), ErrorKind::kShape, "hadamard: shape mismatch");
  Tensor c(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) c[i] = a[i] * b[i];
  return c;
}

std::pair<std::size_t, std::size_t> pool_bin(std::size_t i, std::size_t n,
                                             std::size_t target) {
  const std::size_t begin = (i * n) / target;
  const std::size_t end = ((i + 1) * n + target - 1) / target;
  return {begin, end};
}

PoolResult adaptive_max_pool(const Tensor& x, std::size_t target) {
  const std::size_t n = x.rows();
  const std::size_t f = x.cols();
  require(n >= 1 && x.size() > 0, ErrorKind::kShape, "adaptive_max_pool: empty input");
  require(target >= 1, ErrorKind::kValidation, "adaptive_max_pool: target must be >= 1");

  std::vector<double> norms(n);
  for (std::size_t r = 0; r < n; ++r) norms[r] = squared_norm(x.row(r));

  PoolResult res{Tensor::zeros(target, f), std::vector<std::size_t>(target * f),
                 std::vector<std::size_t>(target)};
  for (std::size_t i = 0; i < target; ++i) {
    const auto [begin, end] = pool_bin(i, n, target);
    auto out = res.pooled.row(i);
    for (std::size_t c = 0; c < f; ++c) {
      std::size_t best = begin;
      for (std::size_t r = begin + 1; r < end; ++r)
        if (x(r, c) > x(best, c)) best = r;
      out[c] = x(best, c);
      res.argmax[i * f + c] = best;
    }
    std::size_t prov = begin;
    for (std::size_t r = begin + 1; r < end; ++r)
      if (norms[r] > norms[prov]) prov = r;
    res.provenance[i] = prov;
  }
  return res;
}

Tensor adaptive_max_pool_backward(const Tensor& dpooled,
                                  const std::vector<std::size_t>& argmax,
                                  std::size_t input_rows) {
  const std::size_t f = dpooled.cols();
  Tensor dx = Tensor::zeros(input_rows, f);
  for (std::size_t i = 0; i < dpooled.rows(); ++i)
    for (std::size_t c = 0; c < f; ++c) dx(argmax[i * f + c], c) += dpooled(i, c);
  return dx;
}

Tensor l2_normalize_rows(const Tensor& x, std::vector<double>* norms) {
  Tensor y(x.shape());
  if (norms) norms->assign(x.rows(), 0.0);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const double nrm = std::max(std::sqrt(squared_norm(x.row(r))), kNormFloor);
    if (norms) (*norms)[r] = nrm;
    auto src = x.row(r);
    auto dst = y.row(r);
    for (std::size_t c = 0; c < src.size(); ++c) dst[c] = src[c] / nrm;
  }
  return y;
}

Tensor l2_normalize_rows_backward(const Tensor& dy, const Tensor& y,
                                  const std::vector<double>& norms) {
  Tensor dx(y.shape());
  for (std::size_t r = 0; r < y.rows(); ++r) {
    auto g = dy.row(r);
    auto yr = y.row(r);
    auto out = dx.row(r);
    if (norms[r] <= kNormFloor) {
      for (std::size_t c = 0; c < g.size(); ++c) out[c] = g[c] / kNormFloor;
      continue;
    }
    const double proj = dot(g, yr);
    for (std::size_t c = 0; c < g.size(); ++c) out[c] = (g[c] - yr[c] * proj) / norms[r];
  }
  return dx;
}

}  // namespace daem
