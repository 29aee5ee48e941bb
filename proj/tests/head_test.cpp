// Copyright 2026 The DAEM Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include <gtest/gtest.h>

#include "daem/error.hpp"
#include "daem/gradcheck.hpp"
#include "daem/graph.hpp"
#include "daem/head.hpp"
#include "daem/model.hpp"
#include "test_util.hpp"

namespace daem {
namespace {

using test::random_tensor;

TEST(Classify, ZeroParamsGiveEvenOdds) {
  const ModelConfig c = test::tiny_config();
  HeadParams p = init_params(c, 1).zeros_like().head;
  SeededRng rng(1);
  const Tensor x = random_tensor({1, c.expert_dim}, rng);
  const Tensor logits = classify(x, x, p, c, rng, false);
  ASSERT_EQ(logits.size(), 2u);
  EXPECT_EQ(logits[0], 0.0);
  EXPECT_EQ(logits[1], 0.0);
  const auto pr = softmax(logits.values());
  EXPECT_EQ(pr[0], 0.5);
}

TEST(Classify, SwappingClassRowsSwapsLogits) {
  const ModelConfig c = test::tiny_config();
  HeadParams p = init_params(c, 2).head;
  SeededRng rng(2);
  p.b2 = random_tensor({2}, rng);
  const Tensor x1 = random_tensor({1, c.expert_dim}, rng), x2 = random_tensor({1, c.expert_dim}, rng);
  const Tensor a = classify(x1, x2, p, c, rng, false);
  HeadParams s = p;
  for (std::size_t j = 0; j < c.head_hidden; ++j) std::swap(s.w2(0, j), s.w2(1, j));
  std::swap(s.b2[0], s.b2[1]);
  const Tensor b = classify(x1, x2, s, c, rng, false);
  EXPECT_EQ(a[0], b[1]);
  EXPECT_EQ(a[1], b[0]);
  EXPECT_THROW(classify(x1, random_tensor({1, 3}, rng), p, c, rng, false), Error);
}

// Direct double loop over anchors, positives and the contrast set.
double supcon_oracle(const Tensor& z, const std::vector<int>& y, double tau) {
  const std::size_t n = z.rows();
  double total = 0.0;
  int anchors = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double denom = 0.0;
    for (std::size_t a = 0; a < n; ++a)
      if (a != i) denom += std::exp(dot(z.row(i), z.row(a)) / tau);
    double sum = 0.0;
    int pos = 0;
    for (std::size_t p = 0; p < n; ++p)
      if (p != i && y[p] == y[i]) {
        sum += -std::log(std::exp(dot(z.row(i), z.row(p)) / tau) / denom);
        ++pos;
      }
    if (pos > 0) {
      total += sum / pos;
      ++anchors;
    }
  }
  return anchors ? total / anchors : 0.0;
}

TEST(SupCon, ExamplesAndOracle) {
  const Tensor same = l2_normalize_rows(Tensor::matrix({{1, 2}, {1, 2}}));
  const std::vector<int> lab = {1, 1};
  EXPECT_NEAR(supcon_loss(same, lab, 1.0), 0.0, 1e-15);
  SeededRng rng(3);
  const Tensor z = l2_normalize_rows(random_tensor({4, 5}, rng));
  const std::vector<int> distinct = {0, 1, 2, 3};
  EXPECT_EQ(supcon_loss(z, distinct, 0.5), 0.0);
  for (int t = 0; t < 10; ++t) {
    const Tensor zz = l2_normalize_rows(random_tensor({4, 5}, rng));
    std::vector<int> y(4);
    for (int& v : y) v = static_cast<int>(rng.below(2));
    const double got = supcon_loss(zz, y, 0.3);
    EXPECT_NEAR(got, supcon_oracle(zz, y, 0.3), 1e-12);
    EXPECT_GE(got, 0.0);
  }
  EXPECT_THROW(supcon_loss(z, distinct, 0.0), Error);
}

TEST(SupCon, AnchorAgainstQueueMatchesBatchForm) {
  SeededRng rng(4);
  ContrastiveQueue q(8);
  Tensor all = l2_normalize_rows(random_tensor({6, 4}, rng));
  std::vector<int> y = {1, 0, 1, 1, 0, 0};
  for (std::size_t i = 1; i < 6; ++i) q.push(all.row(i), y[i]);
  // Anchor 0 against rows 1..5 is the anchor-0 term of the batch oracle.
  double denom = 0.0, sum = 0.0;
  int pos = 0;
  for (std::size_t a = 1; a < 6; ++a) denom += std::exp(dot(all.row(0), all.row(a)) / 0.2);
  for (std::size_t p = 1; p < 6; ++p)
    if (y[p] == 1) sum += -std::log(std::exp(dot(all.row(0), all.row(p)) / 0.2) / denom), ++pos;
  EXPECT_NEAR(supcon_anchor_loss(all.row(0), 1, q, 0.2), sum / pos, 1e-12);
  ContrastiveQueue neg(4);
  neg.push(all.row(1), 0);
  std::vector<double> g;
  EXPECT_EQ(supcon_anchor_loss(all.row(0), 1, neg, 0.2, &g), 0.0);
  for (double v : g) EXPECT_EQ(v, 0.0);
}

TEST(Queue, FifoEviction) {
  ContrastiveQueue q(2);
  const std::vector<double> a = {1}, b = {2}, c = {3};
  q.push(a, 0);
  q.push(b, 1);
  q.push(c, 0);
  ASSERT_EQ(q.size(), 2u);
  EXPECT_EQ(q.entries().front().embedding, b);
  EXPECT_EQ(q.entries().back().embedding, c);
}

TEST(Mse, Examples) {
  const Tensor a = Tensor::matrix({{0, 0}}), b = Tensor::matrix({{1, 1}});
  EXPECT_EQ(consistency_mse(a, a), 0.0);
  EXPECT_EQ(consistency_mse(a, b), 1.0);
  SeededRng rng(5);
  const Tensor x = random_tensor({1, 9}, rng), y = random_tensor({1, 9}, rng);
  double s = 0.0;
  for (std::size_t i = 0; i < 9; ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
  EXPECT_EQ(consistency_mse(x, y), s / 9.0);
  EXPECT_THROW(consistency_mse(x, Tensor::matrix({{1}})), Error);
}

TEST(CrossEntropy, ExamplesShiftInvarianceAndOneHotOracle) {
  const std::vector<double> zero = {0, 0};
  EXPECT_NEAR(cross_entropy(zero, 0), std::log(2.0), 1e-15);
  EXPECT_NEAR(cross_entropy(zero, 1), std::log(2.0), 1e-15);
  const std::vector<double> sure = {20, -20};
  EXPECT_LT(cross_entropy(sure, 0), 1e-15);
  SeededRng rng(6);
  for (int t = 0; t < 20; ++t) {
    const std::vector<double> l = {rng.uniform(-5, 5), rng.uniform(-5, 5)};
    const int y = static_cast<int>(rng.below(2));
    const double z = std::exp(l[0]) + std::exp(l[1]);
    double oracle = 0.0;
    for (int k = 0; k < 2; ++k) oracle -= (k == y ? 1.0 : 0.0) * std::log(std::exp(l[k]) / z);
    EXPECT_NEAR(cross_entropy(l, y), oracle, 1e-12);
    const std::vector<double> shifted = {l[0] + 7.5, l[1] + 7.5};
    EXPECT_NEAR(cross_entropy(shifted, y), cross_entropy(l, y), 1e-12);
  }
}

TEST(TotalLoss, WeightedSumAndValidation) {
  EXPECT_NEAR(total_loss({1, 1, 1}, LossWeights{}), 1.0, 1e-15);
  LossWeights w;
  w.lambda = 1e-9;
  w.beta = 1e-9;
  w.gamma = 0.6;
  EXPECT_NEAR(total_loss({3, 4, 2}, w), 0.6 * 2, 1e-8);
  w.lambda = 1.0;
  EXPECT_THROW(total_loss({1, 1, 1}, w), Error);
  w.lambda = 0.2;
  w.tau = 0.0;
  EXPECT_THROW(w.validate(), Error);
}

// Total gradient equals the weighted sum of the component gradients: checked
// by finite differences through the whole model for one bag.
TEST(TotalLoss, EndToEndGradientOneBag) {
  const ModelConfig c = test::tiny_config();
  const SyntheticCohort cohort = test::small_cohort(2, 7);
  const BagGraphs g = build_bag_graphs(cohort.bags[1]);
  ModelParams params = init_params(c, 15);
  ContrastiveQueue queue(8);
  SeededRng rng(7);
  for (int i = 0; i < 8; ++i) queue.push(l2_normalize_rows(random_tensor({1, 2 * c.expert_dim}, rng)).values(), i % 2);
  const LossWeights w;
  const int label = static_cast<int>(cohort.bags[1].label);
  SeededRng d(0);
  const ForwardPass fp = model_forward(g, params, c, d, false);
  ModelParams grads = params.zeros_like();
  model_loss(fp, g, label, queue, w, params, c, &grads);
  std::vector<GradProbe> probes;
  std::vector<std::pair<std::string, Tensor*>> ps;
  std::vector<const Tensor*> gs;
  params.visit([&](const std::string& n, Tensor& t) { ps.push_back({n, &t}); });
  grads.visit([&](const std::string&, const Tensor& t) { gs.push_back(&t); });
  for (std::size_t i = 0; i < ps.size(); ++i) probes.push_back({ps[i].first, ps[i].second, gs[i]});
  GradCheckOptions o;
  o.samples_per_tensor = 8;
  const auto reports = grad_check(
      [&] {
        SeededRng dd(0);
        return model_loss(model_forward(g, params, c, dd, false), g, label, queue, w, params, c).total;
      },
      probes, 1e-4, o);
  for (const auto& r : reports) EXPECT_TRUE(r.pass) << r.parameter << " " << r.max_relative_error;
}

}  // namespace
}  // namespace daem
