// Copyright 2026 The DAEM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace daem {

/// Two-sided p-value of a standard normal statistic.
double normal_two_sided_p(double z);
/// Upper tail of the chi-square distribution.
double chi_square_sf(double x, double df);

struct TTestResult {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;
  bool degenerate = false;  // both variances zero with different means
};

/// Welch's unequal-variance two-sided t-test. Each group needs ≥ 2 values.
TTestResult t_test_two_sided(std::span<const double> a, std::span<const double> b);

struct KruskalResult {
  double h = 0.0;  // tie-corrected
  double df = 0.0;
  double p = 1.0;
};

/// Needs ≥ 3 non-empty groups. All values identical gives H = 0, p = 1.
KruskalResult kruskal_wallis(const std::vector<std::vector<double>>& groups);

struct DunnPair {
  std::size_t a = 0;
  std::size_t b = 0;
  double z = 0.0;
  double p = 1.0;           // unadjusted two-sided
  double p_adjusted = 1.0;  // Bonferroni over all pairs, capped at 1
};

/// Dunn's pairwise rank test with the tie-corrected variance.
std::vector<DunnPair> dunn_posthoc(const std::vector<std::vector<double>>& groups);

/// Mid-ranks (1-based) of `values`.
std::vector<double> mid_ranks(std::span<const double> values);

// ---------------------------------------------------------------------------
// Survival.

struct KmStep {
  double time = 0.0;
  std::size_t at_risk = 0;
  std::size_t events = 0;
  std::size_t censored = 0;
  double survival = 1.0;  // after this time
};

struct KmCurve {
  int group = 0;
  std::vector<KmStep> steps;  // one per distinct observed time, ascending

  /// Right-continuous S(t); S(t) = 1 before the first event.
  double survival_at(double t) const;
};

/// Product-limit estimate for one group of subjects.
KmCurve kaplan_meier(std::span<const double> times, std::span<const int> events,
                     int group = 0);

struct LogRankResult {
  std::vector<KmCurve> curves;  // ascending group label
  double observed = 0.0;        // events in the first group
  double expected = 0.0;        // under the null
  double variance = 0.0;
  double chi2 = 0.0;
  double p = 1.0;
  bool group_without_events = false;
  bool degenerate = false;  // zero variance; chi2 = 0, p = 1
};

/// Kaplan–Meier per group and the 1-df log-rank test. `groups` holds exactly
/// two distinct labels; times must be > 0 and events 0/1.
LogRankResult km_logrank(std::span<const double> times, std::span<const int> events,
                         std::span<const int> groups);

struct MedianSplit {
  double median = 0.0;
  std::vector<std::string> high;  // value > median
  std::vector<std::string> low;   // value ≤ median
  std::vector<std::size_t> high_index;
  std::vector<std::size_t> low_index;
  bool high_empty = false;
};

MedianSplit stratify_by_median(std::span<const double> values,
                               const std::vector<std::string>& subjects);

}  // namespace daem
