// Copyright 2026 The DAEM Authors
// SPDX-License-Identifier: Apache-2.0

#include "daem/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "daem/error.hpp"
#include "daem/rng.hpp"

namespace daem {

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

std::vector<GradCheckReport> grad_check(const std::function<double()>& loss,
                                        std::span<const GradProbe> probes, double tol,
                                        const GradCheckOptions& options) {
  auto evaluate = [&]() {
    const double v = loss();
    require(std::isfinite(v), ErrorKind::kNumerical, "grad_check: non-finite loss");
    return v;
  };
  evaluate();

  SeededRng rng(options.seed);
  std::vector<GradCheckReport> reports;
  for (const GradProbe& probe : probes) {
    require(probe.value && probe.analytic && probe.value->same_shape(*probe.analytic),
            ErrorKind::kShape, "grad_check: gradient shape mismatch for " + probe.name);
    Tensor& value = *probe.value;

    std::vector<std::size_t> coords(value.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (coords.size() > options.samples_per_tensor) {
      rng.shuffle(coords);
      coords.resize(options.samples_per_tensor);
      std::sort(coords.begin(), coords.end());
    }

    GradCheckReport report{probe.name, 0.0, coords.size(), false};
    for (std::size_t idx : coords) {
      const double original = value[idx];
      value[idx] = original + options.step;
      const double plus = evaluate();
      value[idx] = original - options.step;
      const double minus = evaluate();
      value[idx] = original;
      const double numeric = (plus - minus) / (2.0 * options.step);
      report.max_relative_error =
          std::max(report.max_relative_error,
                   relative_error((*probe.analytic)[idx], numeric, options.floor));
    }
    report.pass = report.max_relative_error < tol;
    reports.push_back(std::move(report));
  }
  return reports;
}

}  // namespace daem
