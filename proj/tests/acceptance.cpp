// Copyright 2026 The DAEM Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance runner: one PASS/FAIL line per criterion, non-zero exit if any
// criterion fails. Runs against the core library only.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iostream>
#include <memory>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "daem/attribution.hpp"
#include "daem/dataset.hpp"
#include "daem/expert.hpp"
#include "daem/graph.hpp"
#include "daem/image.hpp"
#include "daem/metrics.hpp"
#include "daem/msgc.hpp"
#include "daem/ops.hpp"
#include "daem/stats.hpp"
#include "daem/tme.hpp"
#include "daem/trainer.hpp"
#include "grad_suite.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace daem {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

/// Collects failed sub-checks of one criterion.
class Verdict {
 public:
  void check(bool ok, const std::string& what) {
    if (!ok && failures_.size() < 8) failures_.push_back(what);
    failed_ = failed_ || !ok;
  }
  void note(const std::string& s) { notes_.push_back(s); }
  bool passed() const { return !failed_; }
  std::string summary() const {
    std::string out;
    for (const auto& s : notes_) out += (out.empty() ? "" : "; ") + s;
    for (const auto& s : failures_) out += (out.empty() ? "" : "; ") + ("failed: " + s);
    return out;
  }

 private:
  bool failed_ = false;
  std::vector<std::string> failures_;
  std::vector<std::string> notes_;
};

std::string fmt(double v, int prec = 4) {
  std::ostringstream s;
  s.precision(prec);
  s << v;
  return s.str();
}

// ---------------------------------------------------------------------------

void attention_kernel(Verdict& v) {
  const auto t0 = Clock::now();
  SeededRng rng(1001);
  double worst = 0.0, worst_sum = 0.0;
  bool nonneg = true;
  for (int t = 0; t < 200; ++t) {
    const std::size_t heads = 1 + rng.below(4);
    const std::size_t m = 1 + rng.below(8);
    const std::size_t n = 1 + rng.below(32);
    std::vector<double> kw;
    if (t % 2 == 0)
      for (std::size_t i = 0; i < n; ++i) kw.push_back(1.0 + static_cast<double>(rng.below(6)));
    const Tensor q = test::random_tensor({n, heads * m}, rng);
    const Tensor k = test::random_tensor({n, heads * m}, rng);
    const Tensor val = test::random_tensor({n, heads * m}, rng);
    const Tensor got = diffusion_attention_heads(q, k, val, heads, kw);
    const oracle::AttentionOracle want = oracle::quadratic_attention(q, k, val, heads, kw);
    for (std::size_t i = 0; i < got.size(); ++i) worst = std::max(worst, std::fabs(got[i] - want.out[i]));
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t h = 0; h < heads; ++h) {
        double s = 0.0;
        for (std::size_t b = 0; b < n; ++b) {
          const double w = want.weights[(a * heads + h) * n + b];
          nonneg = nonneg && w >= 0.0;
          s += w;
        }
        worst_sum = std::max(worst_sum, std::fabs(s - 1.0));
      }
  }
  const double secs = seconds_since(t0);
  v.note("200 instances, max |diff| " + fmt(worst) + ", max |sum-1| " + fmt(worst_sum) + ", " +
         fmt(secs, 3) + " s");
  v.check(worst < 1e-10, "oracle agreement < 1e-10");
  v.check(nonneg, "weights >= 0");
  v.check(worst_sum <= 1e-12, "weights sum to 1 within 1e-12");
  v.check(secs < 10.0, "runtime < 10 s");
}

void gradient_suite(Verdict& v) {
  const auto t0 = Clock::now();
  std::size_t tensors = 0;
  double worst = 0.0;
  for (const auto& c : grad_suite::all_checks()) {
    const auto reports = c.run();
    v.check(!reports.empty(), std::string(c.name) + " produced reports");
    for (const auto& r : reports) {
      ++tensors;
      worst = std::max(worst, r.max_relative_error);
      v.check(r.pass, std::string(c.name) + "/" + r.parameter + " rel err " + fmt(r.max_relative_error));
    }
  }
  const double secs = seconds_since(t0);
  v.note(std::to_string(grad_suite::all_checks().size()) + " modules, " + std::to_string(tensors) +
         " tensors, max rel err " + fmt(worst) + ", " + fmt(secs, 3) + " s");
  v.check(secs < 300.0, "runtime < 5 min");
}

std::vector<Point2> random_points(std::size_t n, SeededRng& rng, bool lattice) {
  std::vector<Point2> p(n);
  for (auto& q : p) {
    if (lattice)
      q = {static_cast<double>(rng.below(10)), static_cast<double>(rng.below(10))};
    else
      q = {rng.uniform(0, 1000), rng.uniform(0, 1000)};
  }
  return p;
}

SpatialGraph graph_from(const std::vector<Point2>& pts, const Tensor& features) {
  SpatialGraph g;
  g.coords = pts;
  g.node_features = features;
  g.edges = build_knn_graph(pts, kDefaultNeighbors);
  return g;
}

SpatialGraph permuted(const SpatialGraph& g, const std::vector<std::size_t>& perm) {
  SpatialGraph out = g;
  for (std::size_t i = 0; i < perm.size(); ++i) {
    out.coords[perm[i]] = g.coords[i];
    for (std::size_t c = 0; c < g.node_features.cols(); ++c)
      out.node_features(perm[i], c) = g.node_features(i, c);
  }
  out.edges = build_knn_graph(out.coords, kDefaultNeighbors);
  return out;
}

void graph_oracles(Verdict& v) {
  SeededRng rng(1002);
  int knn_ok = 0, tme_ok = 0, sage_ok = 0, perm_ok = 0;
  for (int t = 0; t < 100; ++t) {
    const auto pts = random_points(1 + rng.below(200), rng, t % 3 == 0);
    auto got = build_knn_graph(pts, 9);
    std::sort(got.begin(), got.end());
    knn_ok += got == oracle::brute_knn(pts, 9);
  }
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 1 + rng.below(200);
    std::vector<CellRecord> cells(n);
    std::vector<Point2> pts;
    std::vector<int> types;
    for (auto& c : cells) {
      c.x = static_cast<double>(rng.below(60));
      c.y = static_cast<double>(rng.below(60));
      c.type = kAllCellTypes[rng.below(kCellTypeCount)];
      c.prob = rng.uniform();
      c.nucleus_area = rng.uniform(5, 50);
      pts.push_back({c.x, c.y});
      types.push_back(static_cast<int>(c.type));
    }
    auto got = build_tme_graph(cells, 9).edges;
    std::sort(got.begin(), got.end());
    tme_ok += got == oracle::brute_knn(pts, 9, &types);
  }
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 1 + rng.below(20);
    const Tensor h = test::random_tensor({n, 6}, rng);
    const SpatialGraph g = graph_from(random_points(n, rng, t % 2 == 1), h);
    sage_ok += mean_aggregate(g, h) == oracle::sage_mean_loops(g.edges, h);
  }
  const ModelConfig c = test::tiny_config();
  const ModelParams p = init_params(c, 1002);
  for (int t = 0; t < 20; ++t) {
    BagGraphs g;
    auto make = [&](std::size_t feat) {
      const std::size_t n = 2 + rng.below(19);
      return graph_from(random_points(n, rng, false), test::random_tensor({n, feat}, rng));
    };
    g.small = make(c.feature_dim);
    g.large = make(c.feature_dim);
    g.tme = make(c.tme_feature_dim);
    g.large.scale = GraphScale::kLarge;
    g.tme.scale = GraphScale::kTme;
    SeededRng d1(0), d2(0);
    const MsgcOutput base = msgc_forward(g, p.msgc, c, d1, false);
    std::array<std::vector<std::size_t>, kBranchCount> perms;
    for (std::size_t b = 0; b < kBranchCount; ++b) {
      perms[b].resize(branch_graph(g, static_cast<Branch>(b)).node_count());
      std::iota(perms[b].begin(), perms[b].end(), 0);
      rng.shuffle(perms[b]);
    }
    BagGraphs moved = g;
    moved.small = permuted(g.small, perms[0]);
    moved.large = permuted(g.large, perms[1]);
    moved.tme = permuted(g.tme, perms[2]);
    const MsgcOutput out = msgc_forward(moved, p.msgc, c, d2, false);
    bool exact = true;
    for (std::size_t b = 0; b < kBranchCount; ++b)
      for (std::size_t i = 0; i < perms[b].size(); ++i)
        for (std::size_t k = 0; k < c.hidden; ++k)
          exact = exact && out.features[b](perms[b][i], k) == base.features[b](i, k);
    perm_ok += exact;
  }
  v.note("knn " + std::to_string(knn_ok) + "/100, tme " + std::to_string(tme_ok) + "/100, sage " +
         std::to_string(sage_ok) + "/100, msgc permutations " + std::to_string(perm_ok) + "/20");
  v.check(knn_ok == 100, "kNN brute force");
  v.check(tme_ok == 100, "per-type TME brute force");
  v.check(sage_ok == 100, "SAGE loop oracle");
  v.check(perm_ok == 20, "MSGC bit-exact equivariance");
}

void pooling_oracle(Verdict& v) {
  SeededRng rng(1003);
  int cases = 0, ok = 0;
  for (std::size_t n = 1; n <= 16; ++n)
    for (std::size_t t = 1; t <= 16; ++t) {
      Tensor x = test::random_tensor({n, 4}, rng);
      if (t % 4 == 0)  // integer entries to exercise tie handling
        for (double& e : x.values()) e = std::round(e * 2.0);
      const PoolResult r = adaptive_max_pool(x, t);
      const oracle::PoolOracle want = oracle::adaptive_max_pool_loops(x, t);
      ++cases;
      const bool same = r.pooled == want.pooled && r.argmax == want.argmax && r.provenance == want.provenance;
      ok += same;
      v.check(same, "N=" + std::to_string(n) + " T=" + std::to_string(t));
    }
  v.note(std::to_string(ok) + "/" + std::to_string(cases) + " (N, T) pairs");
}

// ---------------------------------------------------------------------------
// Learning on the separable synthetic cohort; the overfit model is shared
// with the attribution criterion.

struct Learned {
  SyntheticCohort train;
  SyntheticCohort val;
  SyntheticCohort test;
  TrainConfig config;
  TrainResult run;
  std::string second_log;
  double seconds = 0.0;
};

TrainConfig learning_config() {
  TrainConfig cfg;  // full-size model
  cfg.lr = 1e-3;
  cfg.epochs = 100;
  cfg.model.dropout = 0.2;
  cfg.seed = 4242;
  return cfg;
}

const Learned& learned() {
  static std::unique_ptr<Learned> cache;
  if (cache) return *cache;
  auto l = std::make_unique<Learned>();
  l->train = test::small_cohort(20, 501);
  l->val = test::small_cohort(6, 502);
  l->test = test::small_cohort(10, 503);
  l->config = learning_config();
  TrainOptions opt;
  opt.should_stop = [](const EpochLog& e) { return e.train_accuracy == 1.0; };
  const auto t0 = Clock::now();
  l->run = train_fold(l->train.bags, l->val.bags, l->config, opt);
  l->second_log = epoch_log_json(train_fold(l->train.bags, l->val.bags, l->config, opt).log);
  l->seconds = seconds_since(t0);
  cache = std::move(l);
  return *cache;
}

double accuracy(const std::vector<double>& probs, const Cohort& bags) {
  std::size_t ok = 0;
  for (std::size_t i = 0; i < bags.size(); ++i)
    ok += (probs[i] >= 0.5) == (bags[i].label == Label::kStas);
  return static_cast<double>(ok) / static_cast<double>(bags.size());
}

void learning_sanity(Verdict& v) {
  const Learned& l = learned();
  const EpochLog& last = l.run.log.back();
  const double train_acc =
      accuracy(predict_cohort(l.train.bags, l.run.state.params, l.config.model), l.train.bags);
  const double test_acc =
      accuracy(predict_cohort(l.test.bags, l.run.state.params, l.config.model), l.test.bags);
  v.note(std::to_string(l.run.log.size()) + " epochs, train acc " + fmt(train_acc) +
         ", held-out acc " + fmt(test_acc) + ", two runs " + fmt(l.seconds, 4) + " s");
  v.check(l.run.log.size() <= 100, "<= 100 epochs");
  v.check(last.train_accuracy == 1.0 && train_acc == 1.0, "100% training accuracy");
  v.check(test_acc >= 0.9, "held-out accuracy >= 90%");
  v.check(epoch_log_json(l.run.log) == l.second_log, "seeded runs log-identical");
  v.check(l.seconds < 900.0, "runtime < 15 min");
}

// ---------------------------------------------------------------------------

void metrics_oracles(Verdict& v) {
  SeededRng rng(1004);
  double auc_worst = 0.0;
  std::size_t auc_cases = 0;
  for (std::size_t n = 2; n <= 12; ++n)
    for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
      std::vector<int> y(n);
      for (std::size_t i = 0; i < n; ++i) y[i] = (mask >> i) & 1u;
      const auto pos = std::count(y.begin(), y.end(), 1);
      if (pos == 0 || pos == static_cast<long>(n)) continue;
      std::vector<double> s(n);
      for (double& e : s) e = static_cast<double>(rng.below(5));
      auc_worst = std::max(auc_worst, std::fabs(roc_auc(s, y) - oracle::trapezoid_auc(s, y)));
      ++auc_cases;
    }
  v.check(auc_worst < 1e-12, "pair-count AUC vs trapezoid");

  double delong_worst = 0.0;
  for (int t = 0; t < 10; ++t) {
    std::vector<double> a(30), b(30);
    std::vector<int> y(30);
    for (std::size_t i = 0; i < 30; ++i) {
      y[i] = i < 15 ? 1 : 0;
      a[i] = y[i] * 1.0 + rng.normal();
      b[i] = a[i] * 0.5 + y[i] * 0.3 + rng.normal();
    }
    const double d = delong_test(a, b, y).p;
    const double boot = oracle::bootstrap_auc_diff_p(a, b, y, 10000, rng);
    delong_worst = std::max(delong_worst, std::fabs(d - boot));
  }
  v.check(delong_worst <= 0.02, "DeLong within 0.02 of bootstrap");

  const KruskalResult kw = kruskal_wallis({{1, 2, 3}, {4, 5, 6}, {7, 8, 9}});
  v.check(std::fabs(kw.h - 7.2) < 1e-12, "KW H = 7.2");
  v.check(std::fabs(kw.p - 0.0273) < 5e-5 && std::fabs(kw.p - std::exp(-3.6)) < 1e-12, "KW p");

  const LogRankResult lr = km_logrank(oracle::kLogRankTimes, oracle::kLogRankEvents, oracle::kLogRankGroups);
  const oracle::LogRankHand h = oracle::logrank_from_table(oracle::kLogRankTable);
  v.check(std::fabs(lr.observed - h.observed) < 1e-12 && std::fabs(lr.expected - h.expected) < 1e-12 &&
              std::fabs(lr.variance - h.variance) < 1e-12 && std::fabs(lr.chi2 - h.chi2) < 1e-12,
          "log-rank vs hand table");

  bool brier_exact = true;
  for (int n : {1, 2, 7, 30}) {
    std::vector<double> p(static_cast<std::size_t>(n), 0.5);
    std::vector<int> y(static_cast<std::size_t>(n));
    for (auto& e : y) e = static_cast<int>(rng.below(2));
    brier_exact = brier_exact && brier_score(p, y) == 0.25;
  }
  v.check(brier_exact, "Brier of 0.5 is 0.25 exactly");
  v.note(std::to_string(auc_cases) + " AUC cases, max DeLong gap " + fmt(delong_worst) +
         ", H " + fmt(kw.h, 6) + " p " + fmt(kw.p) + ", log-rank chi2 " + fmt(lr.chi2, 6));
}

void tme_pipeline(Verdict& v) {
  SeededRng rng(1005);
  const double mpp = 0.5;
  const TmeOptions opt;  // linkage 30 µm = 60 px at mpp 0.5
  double worst_rel = 0.0;
  bool ratios_equal = true;
  for (int t = 0; t < 30; ++t) {
    std::vector<CellRecord> cells;
    for (int i = 0; i < 150; ++i) {
      CellType type = kAllCellTypes[rng.below(kCellTypeCount)];
      if (type == CellType::kErythrocyte) type = CellType::kOther;
      cells.push_back({rng.uniform(0, 4000), rng.uniform(0, 4000), type, 0.9, rng.uniform(5, 50)});
    }
    // Tight erythrocyte clusters 2000 px apart survive every scale factor used.
    const std::size_t clusters = 1 + rng.below(4);
    for (std::size_t c = 0; c < clusters; ++c)
      for (int i = 0; i < 6; ++i)
        cells.push_back({2000.0 * static_cast<double>(c) + i, 5000.0, CellType::kErythrocyte, 0.9, 10.0});
    const double area = 4e7;
    const TmeMetrics a = compute_tme_metrics(cells, area, mpp, opt);
    for (double s : {0.5, 2.0, 3.0}) {
      std::vector<CellRecord> scaled = cells;
      for (auto& c : scaled) c.x *= s, c.y *= s;
      const TmeMetrics b = compute_tme_metrics(scaled, area * s * s, mpp, opt);
      ratios_equal = ratios_equal && a.str == b.str && a.itr == b.itr && a.svr == b.svr &&
                     a.vessel_clusters == b.vessel_clusters;
      auto rel = [&](double x, double y) {
        return x == 0.0 ? std::fabs(y) : std::fabs(y - x / (s * s)) / (x / (s * s));
      };
      worst_rel = std::max({worst_rel, rel(a.tumor_density, b.tumor_density),
                            rel(a.immune_density, b.immune_density),
                            rel(a.stroma_density, b.stroma_density), rel(a.mvd, b.mvd)});
    }
  }
  v.check(ratios_equal, "STR/ITR/SVR bit-unchanged under scaling");
  v.check(worst_rel <= 1e-9, "densities scale by 1/s^2 within 1e-9");

  std::vector<CellRecord> planted;
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 6; ++i)
      planted.push_back({5000.0 * c + rng.uniform(0, 40), rng.uniform(0, 40), CellType::kErythrocyte});
  planted.push_back({20000, 0, CellType::kErythrocyte});
  planted.push_back({20010, 0, CellType::kErythrocyte});
  for (int i = 0; i < 9; ++i) planted.push_back({static_cast<double>(i), 9000, CellType::kStroma});
  const TmeMetrics m = compute_tme_metrics(planted, 4e8, mpp, opt);
  v.check(m.vessel_clusters == 3, "planted 3-cluster map gives 3");
  v.note("max density rel err " + fmt(worst_rel) + ", planted clusters " + std::to_string(m.vessel_clusters));
}

void geometry(Verdict& v) {
  const Distance canon = point_to_line_distance({0, 0}, {1, 0}, {0, 1}, 0.5);
  v.check(std::fabs(canon.px - 1.0 / std::sqrt(2.0)) < 1e-15, "canonical 1/sqrt(2)");
  SeededRng rng(1006);
  bool on_line_zero = true;
  for (int t = 0; t < 100; ++t) {
    const Point2 a{static_cast<double>(rng.below(200)) - 100, static_cast<double>(rng.below(200)) - 100};
    Point2 b{static_cast<double>(rng.below(200)) - 100, static_cast<double>(rng.below(200)) - 100};
    if (a.x == b.x && a.y == b.y) b.x += 1;
    const double k = static_cast<double>(rng.below(7)) - 3;
    const Point2 p{a.x + k * (b.x - a.x), a.y + k * (b.y - a.y)};
    on_line_zero = on_line_zero && point_to_line_distance(p, a, b, 0.5).px == 0.0;
  }
  v.check(on_line_zero, "on-line points give 0");
  double worst = 0.0;
  bool um_exact = true;
  for (int t = 0; t < 500; ++t) {
    const Point2 p{rng.uniform(-50, 50), rng.uniform(-50, 50)};
    const Point2 a{rng.uniform(-50, 50), rng.uniform(-50, 50)};
    const Point2 b{rng.uniform(-50, 50), rng.uniform(-50, 50)};
    const double th = rng.uniform(0, 2 * M_PI), tx = rng.uniform(-100, 100), ty = rng.uniform(-100, 100);
    auto move = [&](Point2 q) {
      return Point2{std::cos(th) * q.x - std::sin(th) * q.y + tx, std::sin(th) * q.x + std::cos(th) * q.y + ty};
    };
    const Distance d0 = point_to_line_distance(p, a, b, 0.5);
    const Distance d1 = point_to_line_distance(move(p), move(a), move(b), 0.5);
    worst = std::max(worst, std::fabs(d0.px - d1.px));
    um_exact = um_exact && d0.um == d0.px * 0.5;
  }
  v.check(worst < 1e-12, "rigid-motion invariance < 1e-12");
  v.check(um_exact, "µm = px × 0.5 exactly");
  v.note("canonical " + fmt(canon.px, 17) + ", rigid max diff " + fmt(worst));
}

// ---------------------------------------------------------------------------

void attribution(Verdict& v) {
  const Learned& l = learned();
  const ModelParams& params = l.run.state.params;
  const ModelConfig& cfg = l.config.model;
  int stas_bags = 0, small_wins = 0, large_wins = 0, flat_maps = 0, flat_small = 0;
  double planted_sum = 0.0, background_sum = 0.0;
  bool routed_ok = true, span_ok = true, bytes_ok = true;
  for (std::size_t i = 0; i < l.train.bags.size(); ++i) {
    const WsiBag& bag = l.train.bags[i];
    const BagGraphs g = build_bag_graphs(bag, cfg.neighbors);
    const Prediction p = predict(g, params, cfg);
    for (std::size_t e = 0; e < kExpertCount; ++e)
      for (std::size_t b = 0; b < kBranchCount; ++b) {
        const auto r = routed_attention(p, e, static_cast<Branch>(b),
                                        branch_graph(g, static_cast<Branch>(b)).node_count());
        const double s = std::accumulate(r.begin(), r.end(), 0.0);
        routed_ok = routed_ok && std::fabs(s - 1.0) < 1e-12 &&
                    std::all_of(r.begin(), r.end(), [](double x) { return x >= 0.0; });
      }
    const Attribution a = attribute(bag, p);
    for (const auto& row : a.branch_mass)
      routed_ok = routed_ok && std::fabs(row[0] + row[1] + row[2] - 1.0) < 1e-12;
    // Scores lie in [0, 1] and reach both ends unless the raw map is flat.
    for (const AttributionMap* m : {&a.small, &a.large}) {
      double lo = INFINITY, hi = -INFINITY, raw_lo = INFINITY, raw_hi = -INFINITY;
      for (const auto& ps : m->patches) {
        lo = std::min(lo, ps.score), hi = std::max(hi, ps.score);
        raw_lo = std::min(raw_lo, ps.raw), raw_hi = std::max(raw_hi, ps.raw);
      }
      const bool flat = raw_lo == raw_hi;
      flat_maps += flat;
      flat_small += flat && m == &a.small;
      span_ok = span_ok && (flat ? lo == 0.5 && hi == 0.5 : lo == 0.0 && hi == 1.0);
    }
    const Attribution again = attribute(bag, params, cfg);
    for (const AttributionMap* m : {&again.small, &again.large}) {
      const AttributionMap& ref = m == &again.small ? a.small : a.large;
      bytes_ok = bytes_ok && encode_png(render_heatmap(*m, std::nullopt)) ==
                                 encode_png(render_heatmap(ref, std::nullopt)) &&
                 attribution_json(*m, 16.0) == attribution_json(ref, 16.0);
    }

    const PlantInfo& plant = l.train.plants[i];
    if (bag.label != Label::kStas || plant.small.empty()) continue;
    ++stas_bags;
    auto split_means = [](const AttributionMap& m, const std::vector<std::size_t>& planted_idx) {
      const std::set<std::size_t> in(planted_idx.begin(), planted_idx.end());
      double ps = 0.0, bs = 0.0;
      std::size_t pn = 0, bn = 0;
      for (const auto& patch : m.patches) {
        if (in.count(patch.index)) ps += patch.raw, ++pn;
        else bs += patch.raw, ++bn;
      }
      return std::pair<double, double>{ps / static_cast<double>(pn), bn ? bs / static_cast<double>(bn) : 0.0};
    };
    const auto [sp, sb] = split_means(a.small, plant.small);
    planted_sum += sp;
    background_sum += sb;
    small_wins += sp > sb;
    if (!plant.large.empty()) {
      const auto [lp, lb] = split_means(a.large, plant.large);
      large_wins += lp > lb;
    }
  }
  v.check(routed_ok, "routed attention sums to 1 per expert and branch");
  v.check(span_ok, "scores span [0, 1] (0.5 everywhere on flat raw maps)");
  v.check(flat_small == 0, "20x maps carry a non-constant signal");
  v.check(stas_bags > 0, "STAS bags present");
  v.check(small_wins == stas_bags, "planted 20x mean raw > background in every STAS bag");
  v.check(bytes_ok, "renders byte-identical");
  v.note("STAS bags " + std::to_string(stas_bags) + ", 20x planted>background " + std::to_string(small_wins) +
         ", 10x " + std::to_string(large_wins) + ", flat maps " + std::to_string(flat_maps) +", mean planted " + fmt(planted_sum / std::max(stas_bags, 1)) +
         " vs background " + fmt(background_sum / std::max(stas_bags, 1)));
}

// ---------------------------------------------------------------------------

std::vector<double> flatten(const ModelParams& p) {
  std::vector<double> out;
  p.visit([&](const std::string&, const Tensor& t) { out.insert(out.end(), t.values().begin(), t.values().end()); });
  return out;
}

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

bool same_bits(const std::vector<float>& a, const std::vector<float>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

void determinism(Verdict& v) {
  TrainConfig cfg;
  cfg.model = test::tiny_config(0.2);
  cfg.epochs = 4;
  cfg.seed = 77;
  cfg.loss.queue_capacity = 8;
  const SyntheticCohort c = test::small_cohort(10, 1007);
  const Cohort train(c.bags.begin(), c.bags.begin() + 8), val(c.bags.begin() + 8, c.bags.end());
  const TrainResult full = train_fold(train, val, cfg);
  test::TempDir dir("acceptance");
  TrainOptions first;
  first.stop_after_epoch = 2;
  first.checkpoint_dir = dir.path() / "resume";
  train_fold(train, val, cfg, first);
  TrainState state = load_train_state(dir.path() / "resume" / "last.ckpt", cfg);
  const TrainResult rest = train_fold(train, val, cfg, {}, &state);
  v.check(epoch_log_json(rest.log) == epoch_log_json(full.log) &&
              same_bits(flatten(rest.state.params), flatten(full.state.params)) &&
              same_bits(flatten(rest.best.params), flatten(full.best.params)),
          "resume bit-identical");

  bool round_trip = true;
  for (const WsiBag& b : c.bags) {
    write_bag(b, dir.path() / "bags" / b.wsi_id);
    const WsiBag back = load_bag(dir.path() / "bags" / b.wsi_id);
    round_trip = round_trip && back == b && same_bits(back.small.features, b.small.features) &&
                 same_bits(back.large.features, b.large.features);
  }
  v.check(round_trip, "bag round trip lossless");

  const SyntheticCohort cv_cohort = test::small_cohort(12, 1008);
  const FoldPlan plan = make_folds(cv_cohort.bags, 1008);
  TrainConfig cv_cfg = cfg;
  cv_cfg.epochs = 1;
  const CvResult r = run_cv(cv_cohort.bags, plan, cv_cfg, dir.path() / "cv");
  std::size_t ckpts = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir.path() / "cv"))
    ckpts += e.path().filename() == "best.ckpt";
  std::size_t leaks = 0;
  std::multiset<std::string> validated;
  for (const FoldOutcome& f : r.folds) {
    std::set<std::string> val_patients, train_patients;
    for (const std::string& id : f.val_ids) {
      validated.insert(id);
      for (const auto& b : cv_cohort.bags)
        if (b.wsi_id == id) val_patients.insert(b.patient_id);
    }
    for (std::size_t i : plan.complement(cv_cohort.bags, f.fold))
      train_patients.insert(cv_cohort.bags[i].patient_id);
    for (const auto& pid : val_patients) leaks += train_patients.count(pid);
  }
  v.check(r.folds.size() == 5 && ckpts == 5, "exactly 5 checkpoints");
  v.check(leaks == 0, "no patient leakage");
  v.check(validated.size() == cv_cohort.bags.size() &&
              std::set<std::string>(validated.begin(), validated.end()).size() == validated.size(),
          "every bag validated once");

  // Nothing from the browser component in the build tree.
  std::size_t secondary = 0;
  for (const auto& e : fs::recursive_directory_iterator(DAEM_BINARY_DIR, fs::directory_options::skip_permission_denied)) {
    const std::string name = e.path().filename().string();
    secondary += name == "node_modules" || name == "package.json" || e.path().extension() == ".ts" ||
                 e.path().extension() == ".tsx";
  }
  v.check(secondary == 0, "no secondary component built");
  v.note("resume epochs " + std::to_string(rest.log.size()) + ", " + std::to_string(c.bags.size()) +
         " bags round-tripped, " + std::to_string(ckpts) + " CV checkpoints, " + std::to_string(leaks) +
         " leaked patients");
}

}  // namespace
}  // namespace daem

int main() {
  using namespace daem;
  const std::vector<std::pair<const char*, std::function<void(Verdict&)>>> criteria = {
      {"attention_kernel_equivalence", attention_kernel},
      {"gradient_suite", gradient_suite},
      {"graph_oracles", graph_oracles},
      {"pooling_oracle", pooling_oracle},
      {"learning_sanity", learning_sanity},
      {"metrics_oracles", metrics_oracles},
      {"tme_statistics_pipeline", tme_pipeline},
      {"geometry", geometry},
      {"attribution", attribution},
      {"determinism_persistence", determinism},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Verdict v;
    const auto t0 = Clock::now();
    try {
      run(v);
    } catch (const std::exception& e) {
      v.check(false, std::string("exception: ") + e.what());
    }
    failed += !v.passed();
    std::cout << (v.passed() ? "PASS " : "FAIL ") << name << " (" << v.summary() << "; "
              << fmt(seconds_since(t0), 4) << " s)" << std::endl;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size()
            << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
