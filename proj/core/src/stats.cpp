// Copyright 2026 The DAEM Authors
// SPDX-License-Identifier: Apache-2.0

#include "daem/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "daem/error.hpp"

namespace daem {

namespace {

double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_variance(std::span<const double> v, double mean) {
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return ss / static_cast<double>(v.size() - 1);
}

// Σ (t³ − t) over tie groups of the pooled sample.
double tie_sum(std::vector<double> pooled) {
  std::sort(pooled.begin(), pooled.end());
  double s = 0.0;
  for (std::size_t i = 0; i < pooled.size();) {
    std::size_t j = i;
    while (j < pooled.size() && pooled[j] == pooled[i]) ++j;
    const double t = static_cast<double>(j - i);
    s += t * t * t - t;
    i = j;
  }
  return s;
}

struct RankedGroups {
  std::vector<double> mean_rank;
  std::vector<double> sizes;
  double n = 0.0;
  double ties = 0.0;
};

RankedGroups rank_groups(const std::vector<std::vector<double>>& groups) {
  std::vector<double> pooled;
  for (const auto& g : groups) {
    require(!g.empty(), ErrorKind::kValidation, "rank test: every group must be non-empty");
    for (double v : g) {
      require(std::isfinite(v), ErrorKind::kValidation, "rank test: non-finite value");
      pooled.push_back(v);
    }
  }
  const std::vector<double> ranks = mid_ranks(pooled);
  RankedGroups r;
  r.n = static_cast<double>(pooled.size());
  r.ties = tie_sum(pooled);
  std::size_t k = 0;
  for (const auto& g : groups) {
    double s = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) s += ranks[k++];
    r.sizes.push_back(static_cast<double>(g.size()));
    r.mean_rank.push_back(s / static_cast<double>(g.size()));
  }
  return r;
}

}  // namespace

double normal_two_sided_p(double z) { return std::erfc(std::fabs(z) / std::sqrt(2.0)); }

double chi_square_sf(double x, double df) {
  require(df > 0.0, ErrorKind::kValidation, "chi-square: df must be > 0");
  if (!(x > 0.0)) return 1.0;
  return boost::math::cdf(boost::math::complement(boost::math::chi_squared_distribution<double>(df), x));
}

std::vector<double> mid_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && values[order[j]] == values[order[i]]) ++j;
    const double r = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = r;
    i = j;
  }
  return ranks;
}

TTestResult t_test_two_sided(std::span<const double> a, std::span<const double> b) {
  require(a.size() >= 2 && b.size() >= 2, ErrorKind::kValidation,
          "t-test: each group needs at least two values");
  const double ma = mean_of(a);
  const double mb = mean_of(b);
  const double qa = sample_variance(a, ma) / static_cast<double>(a.size());
  const double qb = sample_variance(b, mb) / static_cast<double>(b.size());
  TTestResult r;
  const double se2 = qa + qb;
  if (!(se2 > 0.0)) {
    if (ma == mb) return r;
    r.degenerate = true;
    r.t = ma > mb ? std::numeric_limits<double>::infinity()
                  : -std::numeric_limits<double>::infinity();
    r.p = 0.0;
    return r;
  }
  r.t = (ma - mb) / std::sqrt(se2);
  r.df = se2 * se2 /
         (qa * qa / static_cast<double>(a.size() - 1) + qb * qb / static_cast<double>(b.size() - 1));
  const boost::math::students_t_distribution<double> dist(r.df);
  r.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(r.t)));
  return r;
}

KruskalResult kruskal_wallis(const std::vector<std::vector<double>>& groups) {
  require(groups.size() >= 3, ErrorKind::kValidation, "Kruskal-Wallis needs at least 3 groups");
  const RankedGroups rg = rank_groups(groups);
  KruskalResult r;
  r.df = static_cast<double>(groups.size() - 1);
  const double n = rg.n;
  const double correction = 1.0 - rg.ties / (n * n * n - n);
  if (!(correction > 0.0)) return r;  // every value tied
  double s = 0.0;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const double rank_sum = rg.mean_rank[g] * rg.sizes[g];
    s += rank_sum * rank_sum / rg.sizes[g];
  }
  r.h = (12.0 / (n * (n + 1.0)) * s - 3.0 * (n + 1.0)) / correction;
  r.h = std::max(r.h, 0.0);
  r.p = chi_square_sf(r.h, r.df);
  return r;
}

std::vector<DunnPair> dunn_posthoc(const std::vector<std::vector<double>>& groups) {
  require(groups.size() >= 2, ErrorKind::kValidation, "Dunn test needs at least 2 groups");
  const RankedGroups rg = rank_groups(groups);
  const double n = rg.n;
  const double base = n * (n + 1.0) / 12.0 - rg.ties / (12.0 * (n - 1.0));
  const double comparisons = static_cast<double>(groups.size() * (groups.size() - 1) / 2);
  std::vector<DunnPair> out;
  for (std::size_t a = 0; a < groups.size(); ++a)
    for (std::size_t b = a + 1; b < groups.size(); ++b) {
      DunnPair d;
      d.a = a;
      d.b = b;
      const double se = std::sqrt(base * (1.0 / rg.sizes[a] + 1.0 / rg.sizes[b]));
      if (se > 0.0) {
        d.z = (rg.mean_rank[a] - rg.mean_rank[b]) / se;
        d.p = normal_two_sided_p(d.z);
      }
      d.p_adjusted = std::min(1.0, d.p * comparisons);
      out.push_back(d);
    }
  return out;
}

// ---------------------------------------------------------------------------

double KmCurve::survival_at(double t) const {
  double s = 1.0;
  for (const KmStep& step : steps) {
    if (step.time > t) break;
    s = step.survival;
  }
  return s;
}

KmCurve kaplan_meier(std::span<const double> times, std::span<const int> events, int group) {
  require(times.size() == events.size(), ErrorKind::kShape,
          "kaplan_meier: times and events differ in length");
  std::map<double, std::pair<std::size_t, std::size_t>> at;  // time -> (events, censored)
  for (std::size_t i = 0; i < times.size(); ++i) {
    require(times[i] > 0.0 && std::isfinite(times[i]), ErrorKind::kValidation,
            "kaplan_meier: times must be positive");
    require(events[i] == 0 || events[i] == 1, ErrorKind::kValidation,
            "kaplan_meier: events must be 0/1");
    auto& slot = at[times[i]];
    (events[i] ? slot.first : slot.second) += 1;
  }
  KmCurve c;
  c.group = group;
  std::size_t risk = times.size();
  double s = 1.0;
  for (const auto& [t, counts] : at) {
    KmStep step;
    step.time = t;
    step.at_risk = risk;
    step.events = counts.first;
    step.censored = counts.second;
    if (step.events > 0)
      s *= 1.0 - static_cast<double>(step.events) / static_cast<double>(risk);
    step.survival = s;
    c.steps.push_back(step);
    risk -= counts.first + counts.second;
  }
  return c;
}

LogRankResult km_logrank(std::span<const double> times, std::span<const int> events,
                         std::span<const int> groups) {
  require(times.size() == events.size() && times.size() == groups.size(), ErrorKind::kShape,
          "km_logrank: input lengths differ");
  std::vector<int> labels(groups.begin(), groups.end());
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  require(labels.size() == 2, ErrorKind::kValidation, "km_logrank: exactly two groups required");

  LogRankResult r;
  for (int g : labels) {
    std::vector<double> t;
    std::vector<int> e;
    for (std::size_t i = 0; i < times.size(); ++i)
      if (groups[i] == g) {
        t.push_back(times[i]);
        e.push_back(events[i]);
      }
    r.curves.push_back(kaplan_meier(t, e, g));
    if (std::count(e.begin(), e.end(), 1) == 0) r.group_without_events = true;
  }

  // Pooled risk sets at each distinct event time.
  std::vector<double> event_times;
  for (std::size_t i = 0; i < times.size(); ++i)
    if (events[i]) event_times.push_back(times[i]);
  std::sort(event_times.begin(), event_times.end());
  event_times.erase(std::unique(event_times.begin(), event_times.end()), event_times.end());
  for (double t : event_times) {
    double n = 0.0, n1 = 0.0, d = 0.0, d1 = 0.0;
    for (std::size_t i = 0; i < times.size(); ++i) {
      if (times[i] < t) continue;
      const bool first = groups[i] == labels[0];
      n += 1.0;
      n1 += first ? 1.0 : 0.0;
      if (times[i] == t && events[i]) {
        d += 1.0;
        d1 += first ? 1.0 : 0.0;
      }
    }
    r.observed += d1;
    r.expected += d * n1 / n;
    if (n > 1.0) r.variance += d * (n1 / n) * (1.0 - n1 / n) * (n - d) / (n - 1.0);
  }
  if (!(r.variance > 0.0)) {
    r.degenerate = true;
    return r;
  }
  const double diff = r.observed - r.expected;
  r.chi2 = diff * diff / r.variance;
  r.p = chi_square_sf(r.chi2, 1.0);
  return r;
}

MedianSplit stratify_by_median(std::span<const double> values,
                               const std::vector<std::string>& subjects) {
  require(values.size() == subjects.size(), ErrorKind::kShape,
          "stratify_by_median: values and subjects differ in length");
  require(values.size() >= 2, ErrorKind::kValidation, "stratify_by_median: need >= 2 subjects");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  MedianSplit s;
  s.median = n % 2 ? sorted[n / 2] : (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (values[i] > s.median) {
      s.high.push_back(subjects[i]);
      s.high_index.push_back(i);
    } else {
      s.low.push_back(subjects[i]);
      s.low_index.push_back(i);
    }
  }
  s.high_empty = s.high.empty();
  return s;
}

}  // namespace daem
