// Copyright 2026 The DAEM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "daem/tensor.hpp"

namespace daem {

struct GradCheckReport {
  std::string parameter;
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;  // how many entries were probed
  bool pass = false;
};

/// A parameter tensor to probe together with its analytic gradient.
struct GradProbe {
  std::string name;
  Tensor* value;
  const Tensor* analytic;
};

struct GradCheckOptions {
  double step = 1e-5;
  /// Entries probed per tensor; tensors at most this large are probed fully.
  std::size_t samples_per_tensor = 64;
  /// Denominator floor: relative error is |a - f| / max(|a|, |f|, floor), so
  /// an exact zero gradient matched by an exact zero difference reports 0.
  double floor = 1e-8;
  std::uint64_t seed = 17;
};

/// Central finite differences against precomputed analytic gradients.
/// `loss` must be deterministic and read the probed tensors in place; each
/// probed entry is restored bit-exactly afterwards. Throws kNumerical if the
/// loss is ever non-finite.
std::vector<GradCheckReport> grad_check(const std::function<double()>& loss,
                                        std::span<const GradProbe> probes, double tol,
                                        const GradCheckOptions& options = {});

double relative_error(double analytic, double numeric, double floor);

}  // namespace daem
