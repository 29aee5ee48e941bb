// Copyright 2026 The DAEM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace daem {

/// Labels are 0/1 (1 = positive class). Scores are higher-is-positive.

/// P(score_pos > score_neg) + ½ P(tie) by pair counting. Throws kValidation
/// unless both classes are present.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

/// Average precision: Σ_thresholds (R_t − R_{t−1})·P_t over distinct score
/// thresholds in descending order. Throws kValidation without positives.
double prc_auc(std::span<const double> scores, std::span<const int> labels);

struct CalibrationBin {
  double lower = 0.0;
  double upper = 0.0;
  double mean_predicted = 0.0;  // NaN when empty
  double observed = 0.0;        // NaN when empty
  std::size_t count = 0;
};

struct Calibration {
  std::vector<CalibrationBin> bins;
  double brier = 0.0;
};

/// Equal-width probability bins on [0, 1]; p = 1 falls in the last bin.
Calibration calibration_curve(std::span<const double> probs, std::span<const int> labels,
                              std::size_t bins = 10);

double brier_score(std::span<const double> probs, std::span<const int> labels);

struct EvalReport {
  std::size_t n = 0;
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  double threshold = 0.5;
  double accuracy = 0.0;
  double precision = 0.0;  // 0 when nothing is predicted positive
  double recall = 0.0;     // 0 without positives
  double f1 = 0.0;         // 0 when precision + recall = 0
  double specificity = 0.0;  // 0 without negatives
  double auc = 0.0;          // NaN unless both classes are present
  double prc_auc = 0.0;      // NaN without positives
  double brier = 0.0;
  std::vector<CalibrationBin> calibration;
};

/// Predicted positive when score ≥ threshold.
EvalReport threshold_report(std::span<const double> probs, std::span<const int> labels,
                            double threshold = 0.5, std::size_t calibration_bins = 10);

/// One `key=value` per line; calibration bins as
/// `calibration.<i>=<lower>,<upper>,<mean_predicted>,<observed>,<count>`.
std::string to_kv(const EvalReport& r);
EvalReport parse_kv(const std::string& text);

struct DeLongResult {
  double auc_a = 0.0;
  double auc_b = 0.0;
  double z = 0.0;
  double p = 1.0;
  double variance = 0.0;  // of auc_a − auc_b
  bool degenerate = false;  // variance ≤ 0; p reported as 1
};

/// Paired DeLong test with mid-rank tie handling.
DeLongResult delong_test(std::span<const double> scores_a, std::span<const double> scores_b,
                         std::span<const int> labels);

struct MeanSem {
  double mean = 0.0;  // NaN when no finite values
  double sem = 0.0;   // sample sd / √n; NaN when n < 2
  std::size_t n = 0;  // finite values used
};

/// Ignores non-finite entries (metrics undefined for a fold).
MeanSem mean_sem(std::span<const double> values);

}  // namespace daem
