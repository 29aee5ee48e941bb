// Copyright 2026 The DAEM Authors
// SPDX-License-Identifier: Apache-2.0

#include "daem/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "daem/error.hpp"

namespace daem {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_inputs(std::span<const double> scores, std::span<const int> labels,
                  const char* what) {
  require(scores.size() == labels.size(), ErrorKind::kShape,
          std::string(what) + ": scores and labels differ in length");
  for (int y : labels)
    require(y == 0 || y == 1, ErrorKind::kValidation, std::string(what) + ": labels must be 0/1");
  for (double s : scores)
    require(std::isfinite(s), ErrorKind::kValidation, std::string(what) + ": non-finite score");
}

void check_probabilities(std::span<const double> probs, const char* what) {
  for (double p : probs)
    require(p >= 0.0 && p <= 1.0, ErrorKind::kValidation,
            std::string(what) + ": probabilities must lie in [0, 1]");
}

std::size_t count_positive(std::span<const int> labels) {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
}

// ψ(x, y) for DeLong: 1 if x > y, ½ on ties, 0 otherwise.
double psi(double x, double y) { return x > y ? 1.0 : (x == y ? 0.5 : 0.0); }

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

double parse_double(const std::string& s) {
  if (s == "nan") return kNaN;
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    require(used == s.size(), ErrorKind::kValidation, "trailing characters in '" + s + "'");
    return v;
  } catch (const std::logic_error&) {
    fail(ErrorKind::kValidation, "not a number: '" + s + "'");
  }
}

}  // namespace

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels, "roc_auc");
  const std::size_t pos = count_positive(labels);
  const std::size_t neg = labels.size() - pos;
  require(pos > 0 && neg > 0, ErrorKind::kValidation, "roc_auc: both classes must be present");
  // Twice the Mann-Whitney count, kept integral so the result is exact.
  std::uint64_t twice = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      if (scores[i] > scores[j])
        twice += 2;
      else if (scores[i] == scores[j])
        twice += 1;
    }
  }
  return static_cast<double>(twice) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

double prc_auc(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels, "prc_auc");
  const std::size_t pos = count_positive(labels);
  require(pos > 0, ErrorKind::kValidation, "prc_auc: no positive samples");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double ap = 0.0;
  double prev_recall = 0.0;
  std::size_t tp = 0;
  std::size_t seen = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      tp += labels[order[j]] == 1 ? 1 : 0;
      ++j;
    }
    seen = j;
    const double recall = static_cast<double>(tp) / static_cast<double>(pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(seen);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return ap;
}

double brier_score(std::span<const double> probs, std::span<const int> labels) {
  check_inputs(probs, labels, "brier_score");
  check_probabilities(probs, "brier_score");
  require(!probs.empty(), ErrorKind::kValidation, "brier_score: no samples");
  double s = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double d = probs[i] - labels[i];
    s += d * d;
  }
  return s / static_cast<double>(probs.size());
}

Calibration calibration_curve(std::span<const double> probs, std::span<const int> labels,
                              std::size_t bins) {
  require(bins >= 1, ErrorKind::kValidation, "calibration_curve: need at least one bin");
  Calibration out;
  out.brier = brier_score(probs, labels);
  out.bins.resize(bins);
  std::vector<double> sum_p(bins, 0.0);
  std::vector<double> sum_y(bins, 0.0);
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const auto b = std::min(bins - 1, static_cast<std::size_t>(probs[i] * static_cast<double>(bins)));
    sum_p[b] += probs[i];
    sum_y[b] += labels[i];
    ++out.bins[b].count;
  }
  for (std::size_t b = 0; b < bins; ++b) {
    CalibrationBin& bin = out.bins[b];
    bin.lower = static_cast<double>(b) / static_cast<double>(bins);
    bin.upper = static_cast<double>(b + 1) / static_cast<double>(bins);
    const double n = static_cast<double>(bin.count);
    bin.mean_predicted = bin.count ? sum_p[b] / n : kNaN;
    bin.observed = bin.count ? sum_y[b] / n : kNaN;
  }
  return out;
}

EvalReport threshold_report(std::span<const double> probs, std::span<const int> labels,
                            double threshold, std::size_t calibration_bins) {
  check_inputs(probs, labels, "threshold_report");
  check_probabilities(probs, "threshold_report");
  require(!probs.empty(), ErrorKind::kValidation, "threshold_report: no samples");
  EvalReport r;
  r.n = probs.size();
  r.threshold = threshold;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const bool predicted = probs[i] >= threshold;
    const bool actual = labels[i] == 1;
    if (predicted && actual) ++r.tp;
    if (predicted && !actual) ++r.fp;
    if (!predicted && actual) ++r.fn;
    if (!predicted && !actual) ++r.tn;
  }
  auto ratio = [](std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
  };
  r.accuracy = ratio(r.tp + r.tn, r.n);
  r.precision = ratio(r.tp, r.tp + r.fp);
  r.recall = ratio(r.tp, r.tp + r.fn);
  r.specificity = ratio(r.tn, r.tn + r.fp);
  r.f1 = r.precision + r.recall > 0.0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
                                      : 0.0;
  const std::size_t pos = r.tp + r.fn;
  const std::size_t neg = r.tn + r.fp;
  r.auc = pos > 0 && neg > 0 ? roc_auc(probs, labels) : kNaN;
  r.prc_auc = pos > 0 ? prc_auc(probs, labels) : kNaN;
  const Calibration cal = calibration_curve(probs, labels, calibration_bins);
  r.brier = cal.brier;
  r.calibration = cal.bins;
  return r;
}

std::string to_kv(const EvalReport& r) {
  std::ostringstream os;
  os << "n=" << r.n << "\n"
     << "tp=" << r.tp << "\nfp=" << r.fp << "\ntn=" << r.tn << "\nfn=" << r.fn << "\n"
     << "threshold=" << fmt(r.threshold) << "\n"
     << "accuracy=" << fmt(r.accuracy) << "\n"
     << "precision=" << fmt(r.precision) << "\n"
     << "recall=" << fmt(r.recall) << "\n"
     << "f1=" << fmt(r.f1) << "\n"
     << "specificity=" << fmt(r.specificity) << "\n"
     << "auc=" << fmt(r.auc) << "\n"
     << "prc_auc=" << fmt(r.prc_auc) << "\n"
     << "brier=" << fmt(r.brier) << "\n";
  for (std::size_t i = 0; i < r.calibration.size(); ++i) {
    const CalibrationBin& b = r.calibration[i];
    os << "calibration." << i << "=" << fmt(b.lower) << "," << fmt(b.upper) << ","
       << fmt(b.mean_predicted) << "," << fmt(b.observed) << "," << b.count << "\n";
  }
  return os.str();
}

EvalReport parse_kv(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, ErrorKind::kValidation, "report line without '=': " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto get = [&](const std::string& key) -> const std::string& {
    const auto it = kv.find(key);
    require(it != kv.end(), ErrorKind::kValidation, "report is missing key '" + key + "'");
    return it->second;
  };
  auto count = [&](const std::string& key) {
    return static_cast<std::size_t>(parse_double(get(key)));
  };
  EvalReport r;
  r.n = count("n");
  r.tp = count("tp");
  r.fp = count("fp");
  r.tn = count("tn");
  r.fn = count("fn");
  r.threshold = parse_double(get("threshold"));
  r.accuracy = parse_double(get("accuracy"));
  r.precision = parse_double(get("precision"));
  r.recall = parse_double(get("recall"));
  r.f1 = parse_double(get("f1"));
  r.specificity = parse_double(get("specificity"));
  r.auc = parse_double(get("auc"));
  r.prc_auc = parse_double(get("prc_auc"));
  r.brier = parse_double(get("brier"));
  for (std::size_t i = 0;; ++i) {
    const auto it = kv.find("calibration." + std::to_string(i));
    if (it == kv.end()) break;
    std::vector<std::string> parts;
    std::istringstream fs(it->second);
    std::string part;
    while (std::getline(fs, part, ',')) parts.push_back(part);
    require(parts.size() == 5, ErrorKind::kValidation, "calibration entry needs five fields");
    r.calibration.push_back({parse_double(parts[0]), parse_double(parts[1]),
                             parse_double(parts[2]), parse_double(parts[3]),
                             static_cast<std::size_t>(parse_double(parts[4]))});
  }
  require(r.tp + r.fp + r.tn + r.fn == r.n, ErrorKind::kValidation,
          "report confusion counts do not sum to n");
  return r;
}

DeLongResult delong_test(std::span<const double> scores_a, std::span<const double> scores_b,
                         std::span<const int> labels) {
  check_inputs(scores_a, labels, "delong_test");
  check_inputs(scores_b, labels, "delong_test");
  std::vector<std::size_t> pos;
  std::vector<std::size_t> neg;
  for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] == 1 ? pos : neg).push_back(i);
  require(!pos.empty() && !neg.empty(), ErrorKind::kValidation,
          "delong_test: both classes must be present");
  const std::size_t m = pos.size();
  const std::size_t n = neg.size();

  // Structural components: V10 per positive, V01 per negative, for each model.
  auto components = [&](std::span<const double> s, std::vector<double>& v10,
                        std::vector<double>& v01) {
    v10.assign(m, 0.0);
    v01.assign(n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double k = psi(s[pos[i]], s[neg[j]]);
        v10[i] += k;
        v01[j] += k;
      }
    double auc = 0.0;
    for (double& v : v10) {
      auc += v;
      v /= static_cast<double>(n);
    }
    for (double& v : v01) v /= static_cast<double>(m);
    return auc / (static_cast<double>(m) * static_cast<double>(n));
  };
  std::vector<double> a10, a01, b10, b01;
  DeLongResult r;
  r.auc_a = components(scores_a, a10, a01);
  r.auc_b = components(scores_b, b10, b01);

  // Sample variance of the paired difference of components equals
  // S_aa + S_bb − 2 S_ab.
  auto diff_var = [](const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t k = x.size();
    if (k < 2) return 0.0;
    std::vector<double> d(k);
    for (std::size_t i = 0; i < k; ++i) d[i] = x[i] - y[i];
    const double mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(k);
    double ss = 0.0;
    for (double v : d) ss += (v - mean) * (v - mean);
    return ss / static_cast<double>(k - 1);
  };
  r.variance = diff_var(a10, b10) / static_cast<double>(m) + diff_var(a01, b01) / static_cast<double>(n);
  const double delta = r.auc_a - r.auc_b;
  if (!(r.variance > 0.0)) {
    r.degenerate = true;
    r.z = 0.0;
    r.p = 1.0;
    return r;
  }
  r.z = delta / std::sqrt(r.variance);
  r.p = std::erfc(std::fabs(r.z) / std::sqrt(2.0));
  return r;
}

MeanSem mean_sem(std::span<const double> values) {
  std::vector<double> v;
  for (double x : values)
    if (std::isfinite(x)) v.push_back(x);
  MeanSem r;
  r.n = v.size();
  if (v.empty()) {
    r.mean = kNaN;
    r.sem = kNaN;
    return r;
  }
  r.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() < 2) {
    r.sem = kNaN;
    return r;
  }
  double ss = 0.0;
  for (double x : v) ss += (x - r.mean) * (x - r.mean);
  r.sem = std::sqrt(ss / static_cast<double>(v.size() - 1)) / std::sqrt(static_cast<double>(v.size()));
  return r;
}

}  // namespace daem
