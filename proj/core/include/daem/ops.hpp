// Copyright 2026 The DAEM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "daem/rng.hpp"
#include "daem/tensor.hpp"

namespace daem {

inline constexpr double kDefaultLeakySlope = 0.01;
inline constexpr double kDefaultLayerNormEps = 1e-5;
/// Floor applied to vector norms before division (zero-norm guard).
inline constexpr double kNormFloor = 1e-12;

// ---------------------------------------------------------------------------
// LayerNorm over the last dimension.

struct LayerNormCache {
  Tensor normalized;              // x̂, before gain/shift
  std::vector<double> inv_std;    // per row
};

Tensor layer_norm(const Tensor& x, double eps, const Tensor& gain,
                  const Tensor& shift, LayerNormCache* cache = nullptr);

/// Returns dx; accumulates dgain and dshift.
Tensor layer_norm_backward(const Tensor& dy, const LayerNormCache& cache,
                           const Tensor& gain, Tensor& dgain, Tensor& dshift);

// ---------------------------------------------------------------------------
// LeakyReLU.

Tensor leaky_relu(const Tensor& x, double slope);
/// Gradient w.r.t. the pre-activation `x`.
Tensor leaky_relu_backward(const Tensor& dy, const Tensor& x, double slope);

// ---------------------------------------------------------------------------
// Inverted dropout.

/// Training: each entry kept with probability 1-p and scaled by 1/(1-p).
/// Inference (or p == 0): all ones, and the RNG is not advanced.
Tensor dropout_mask(const std::vector<std::size_t>& shape, double p, SeededRng& rng,
                    bool training);

Tensor hadamard(const Tensor& a, const Tensor& b);

// ---------------------------------------------------------------------------
// Adaptive 1-D max pooling along the token (row) axis.

/// Input index range [begin, end) covered by output bin `i` of `target`
/// bins over `n` inputs: [floor(i·n/T), ceil((i+1)·n/T)).
std::pair<std::size_t, std::size_t> pool_bin(std::size_t i, std::size_t n,
                                             std::size_t target);

struct PoolResult {
  Tensor pooled;                      // T × F
  std::vector<std::size_t> argmax;    // T × F, input row attaining each max
  std::vector<std::size_t> provenance;  // T, row with the largest L2 norm in the bin
};

/// Ties resolve to the lowest input index, both per feature and for
/// provenance.
PoolResult adaptive_max_pool(const Tensor& x, std::size_t target);

/// Scatters `dpooled` (T × F) back onto an N × F gradient through `argmax`.
Tensor adaptive_max_pool_backward(const Tensor& dpooled,
                                  const std::vector<std::size_t>& argmax,
                                  std::size_t input_rows);

// ---------------------------------------------------------------------------
// Row-wise L2 normalisation with the zero-norm floor.

Tensor l2_normalize_rows(const Tensor& x, std::vector<double>* norms = nullptr);
/// Gradient of y = x / max(‖x‖, floor) given y, the stored norms and dy.
Tensor l2_normalize_rows_backward(const Tensor& dy, const Tensor& y,
                                  const std::vector<double>& norms);

}  // namespace daem
