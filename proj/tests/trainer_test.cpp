// Copyright 2026 The DAEM Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "daem/checkpoint.hpp"
#include "daem/trainer.hpp"
#include "test_util.hpp"

namespace daem {
namespace {

namespace fs = std::filesystem;
using test::error_kind;
using test::TempDir;

TrainConfig tiny_train(int epochs) {
  TrainConfig c;
  c.model = test::tiny_config(0.2);
  c.epochs = epochs;
  c.seed = 99;
  c.loss.queue_capacity = 8;
  return c;
}

std::vector<double> flatten(const ModelParams& p) {
  std::vector<double> out;
  p.visit([&](const std::string&, const Tensor& t) { out.insert(out.end(), t.values().begin(), t.values().end()); });
  return out;
}

TEST(AdamW, MatchesScalarReference) {
  const TrainConfig cfg = tiny_train(1);
  ModelParams params = init_params(cfg.model, 3);
  SeededRng rng(81);
  std::vector<double> theta = flatten(params);
  std::vector<double> m(theta.size(), 0.0), v(theta.size(), 0.0);
  AdamState state = make_adam_state(params);
  const double lr = 3e-3;
  for (int step = 1; step <= 3; ++step) {
    ModelParams grads = params.zeros_like();
    grads.visit([&](const std::string&, Tensor& t) {
      for (double& x : t.values()) x = rng.normal();
    });
    const std::vector<double> g = flatten(grads);
    adamw_step(params, grads, state, lr, cfg);
    for (std::size_t i = 0; i < theta.size(); ++i) {
      theta[i] *= 1.0 - lr * cfg.weight_decay;
      m[i] = cfg.beta1 * m[i] + (1 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1 - cfg.beta2) * g[i] * g[i];
      const double mh = m[i] / (1 - std::pow(cfg.beta1, step));
      const double vh = v[i] / (1 - std::pow(cfg.beta2, step));
      theta[i] -= lr * mh / (std::sqrt(vh) + cfg.eps);
    }
    const std::vector<double> got = flatten(params);
    for (std::size_t i = 0; i < theta.size(); ++i)
      ASSERT_NEAR(got[i], theta[i], 1e-12) << "step " << step << " coord " << i;
  }
  EXPECT_EQ(state.step, 3u);
}

TEST(AdamW, ZeroLearningRateFreezesParameters) {
  TrainConfig cfg = tiny_train(3);
  cfg.lr = 0.0;
  const SyntheticCohort c = test::small_cohort(4, 82);
  const Cohort train(c.bags.begin(), c.bags.begin() + 3), val(c.bags.begin() + 3, c.bags.end());
  const ModelParams init = init_train_state(cfg).params;
  const TrainResult r = train_fold(train, val, cfg);
  EXPECT_EQ(flatten(r.state.params), flatten(init));
  EXPECT_EQ(r.log.size(), 3u);
}

TEST(Clipping, RescalesToMaxNorm) {
  const TrainConfig cfg = tiny_train(1);
  ModelParams g = init_params(cfg.model, 4);
  const std::vector<double> before = flatten(g);
  double sq = 0.0;
  for (double x : before) sq += x * x;
  const double norm = std::sqrt(sq);
  EXPECT_NEAR(global_norm(g), norm, 1e-12 * norm);
  EXPECT_NEAR(clip_gradients(g, norm / 4), norm, 1e-12 * norm);
  EXPECT_NEAR(global_norm(g), norm / 4, 1e-12 * norm);
  const std::vector<double> after = flatten(g);
  for (std::size_t i = 0; i < after.size(); ++i) EXPECT_NEAR(after[i], before[i] / 4, 1e-15);
  ModelParams h = init_params(cfg.model, 4);
  clip_gradients(h, norm * 2);
  EXPECT_EQ(flatten(h), before);
}

TEST(Plateau, HalvesAfterPatienceExceeded) {
  PlateauScheduler s;
  s.lr = 1.0;
  EXPECT_FALSE(s.step(1.0, 0.5, 2, 0.0));
  EXPECT_FALSE(s.step(1.0, 0.5, 2, 0.0));
  EXPECT_FALSE(s.step(1.0, 0.5, 2, 0.0));
  EXPECT_TRUE(s.step(1.0, 0.5, 2, 0.0));  // third non-improving epoch
  EXPECT_EQ(s.lr, 0.5);
  EXPECT_FALSE(s.step(0.5, 0.5, 2, 0.0));
  EXPECT_EQ(s.bad_epochs, 0);
  // relative threshold: 0.4999 is not a 1% improvement on 0.5
  EXPECT_TRUE(s.step(0.4999, 0.5, 0, 0.01));
  EXPECT_EQ(s.reductions, 2);
  EXPECT_EQ(s.lr, 0.25);
}

TEST(TrainConfig, JsonRoundTripAndValidation) {
  TrainConfig c = tiny_train(7);
  c.loss.tau = 0.1;
  EXPECT_EQ(parse_train_config(train_config_json(c)), c);
  EXPECT_EQ(parse_train_config("{}"), TrainConfig{});
  EXPECT_EQ(error_kind([] { parse_train_config(R"({"learning_rate": 1})"); }), ErrorKind::kValidation);
  EXPECT_EQ(error_kind([] { parse_train_config(R"({"batch": 2})"); }), ErrorKind::kValidation);
  EXPECT_EQ(error_kind([] { parse_train_config("[1,2"); }), ErrorKind::kValidation);
  EXPECT_EQ(error_kind([] { read_train_config("/nonexistent/config.json"); }), ErrorKind::kMissing);
  TrainConfig d = c;
  d.lr = 0.002;
  EXPECT_NE(config_hash(c), config_hash(d));
  const TrainConfig defaults;
  EXPECT_EQ(defaults.lr, 1e-3);
  EXPECT_EQ(defaults.epochs, 100);
  EXPECT_EQ(defaults.model.dropout, 0.2);
  EXPECT_EQ(defaults.plateau_patience, 5);
}

TEST(Archive, RoundTripAndCorruption) {
  Archive a;
  SeededRng rng(83);
  a.tensors["w"] = test::random_tensor({3, 5}, rng);
  a.tensors["b"] = test::random_tensor({5}, rng);
  a.blobs["meta"] = std::string("x\0y", 3);
  const std::string bytes = serialize_archive(a);
  EXPECT_EQ(parse_archive(bytes), a);
  std::string flipped = bytes;
  flipped[30] ^= 0x40;
  EXPECT_EQ(error_kind([&] { parse_archive(flipped); }), ErrorKind::kChecksum);
  EXPECT_EQ(error_kind([&] { parse_archive(bytes.substr(0, bytes.size() - 7)); }), ErrorKind::kChecksum);
  std::string magic = bytes;
  magic[0] = 'X';
  EXPECT_EQ(error_kind([&] { parse_archive(magic); }), ErrorKind::kValidation);
  EXPECT_EQ(error_kind([] { read_archive("/nonexistent.ckpt"); }), ErrorKind::kMissing);
}

class TrainLoop : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    cohort_ = new SyntheticCohort(test::small_cohort(10, 84));
  }
  static void TearDownTestSuite() { delete cohort_; }
  static Cohort train() { return Cohort(cohort_->bags.begin(), cohort_->bags.begin() + 8); }
  static Cohort val() { return Cohort(cohort_->bags.begin() + 8, cohort_->bags.end()); }
  static SyntheticCohort* cohort_;
};
SyntheticCohort* TrainLoop::cohort_ = nullptr;

TEST_F(TrainLoop, SameSeedSameLog) {
  const TrainConfig cfg = tiny_train(3);
  const TrainResult a = train_fold(train(), val(), cfg);
  const TrainResult b = train_fold(train(), val(), cfg);
  EXPECT_EQ(epoch_log_json(a.log), epoch_log_json(b.log));
  EXPECT_EQ(flatten(a.state.params), flatten(b.state.params));
  TrainConfig other = cfg;
  other.seed = 100;
  EXPECT_NE(epoch_log_json(train_fold(train(), val(), other).log), epoch_log_json(a.log));
}

TEST_F(TrainLoop, ResumeIsBitIdentical) {
  const TrainConfig cfg = tiny_train(4);
  const TrainResult full = train_fold(train(), val(), cfg);

  TempDir dir("resume");
  TrainOptions first;
  first.stop_after_epoch = 2;
  first.checkpoint_dir = dir.path();
  const TrainResult half = train_fold(train(), val(), cfg, first);
  ASSERT_EQ(half.log.size(), 2u);
  TrainState state = load_train_state(dir.path() / "last.ckpt", cfg);
  EXPECT_EQ(state.epoch, 2);
  const TrainResult rest = train_fold(train(), val(), cfg, {}, &state);
  EXPECT_EQ(epoch_log_json(rest.log), epoch_log_json(full.log));
  EXPECT_EQ(flatten(rest.state.params), flatten(full.state.params));
  EXPECT_EQ(flatten(rest.best.params), flatten(full.best.params));

  TrainConfig changed = cfg;
  changed.lr = 0.5;
  EXPECT_EQ(error_kind([&] { load_train_state(dir.path() / "last.ckpt", changed); }), ErrorKind::kValidation);
  const ModelCheckpoint best = load_model(dir.path() / "best.ckpt");
  EXPECT_EQ(best.config, cfg);
  EXPECT_EQ(checkpoint_hash(dir.path() / "best.ckpt").size(), 16u);
  // corrupt one byte in the middle
  std::string bytes;
  {
    std::ifstream in(dir.path() / "best.ckpt", std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    bytes = ss.str();
  }
  bytes[bytes.size() / 2] ^= 0x10;
  {
    std::ofstream out(dir.path() / "best.ckpt", std::ios::binary | std::ios::trunc);
    out << bytes;
  }
  EXPECT_EQ(error_kind([&] { load_model(dir.path() / "best.ckpt"); }), ErrorKind::kChecksum);
}

TEST_F(TrainLoop, BestCheckpointHasLowestValidationLoss) {
  const TrainConfig cfg = tiny_train(5);
  const TrainResult r = train_fold(train(), val(), cfg);
  double best = INFINITY;
  int best_epoch = 0;
  for (const EpochLog& e : r.log)
    if (e.val_loss < best) best = e.val_loss, best_epoch = e.epoch;
  EXPECT_EQ(r.best.epoch, best_epoch);
  EXPECT_EQ(r.best.val_loss, best);
  // re-evaluating the stored weights reproduces the logged validation loss
  const std::vector<double> probs = predict_cohort(val(), r.best.params, cfg.model);
  double ce = 0.0;
  const Cohort v = val();
  for (std::size_t i = 0; i < v.size(); ++i)
    ce -= std::log(v[i].label == Label::kStas ? probs[i] : 1.0 - probs[i]) / static_cast<double>(v.size());
  EXPECT_NEAR(ce, best, 1e-9);
}

TEST(TrainCurve, LossDecreasesOverTenEpochs) {
  // 20 training bags, the cohort size used for the learning criterion.
  const SyntheticCohort c = test::small_cohort(22, 84);
  const Cohort train(c.bags.begin(), c.bags.end() - 2), val(c.bags.end() - 2, c.bags.end());
  const TrainResult r = train_fold(train, val, tiny_train(10));
  ASSERT_EQ(r.log.size(), 10u);
  int upticks = 0;
  for (std::size_t i = 1; i < r.log.size(); ++i) upticks += r.log[i].loss > r.log[i - 1].loss;
  EXPECT_LE(upticks, 2);
  EXPECT_LT(r.log.back().loss, r.log.front().loss);
}

TEST_F(TrainLoop, ClippingIsReported) {
  TrainConfig cfg = tiny_train(1);
  cfg.clip_norm = 1e-6;
  std::vector<std::string> events;
  TrainOptions opt;
  opt.on_event = [&](const std::string& e) { events.push_back(e); };
  const TrainResult r = train_fold(train(), val(), cfg, opt);
  EXPECT_EQ(r.log[0].clipped_steps, 8);
  EXPECT_EQ(events.size(), 8u);
  EXPECT_NE(events[0].find("clipped"), std::string::npos);
}

TEST_F(TrainLoop, EmptySplitsRejected) {
  const TrainConfig cfg = tiny_train(1);
  EXPECT_EQ(error_kind([&] { train_fold({}, val(), cfg); }), ErrorKind::kValidation);
  EXPECT_EQ(error_kind([&] { train_fold(train(), {}, cfg); }), ErrorKind::kValidation);
}

TEST(CrossValidation, FiveCheckpointsNoLeakageAndAggregation) {
  const SyntheticCohort c = test::small_cohort(12, 85);
  const FoldPlan plan = make_folds(c.bags, 5);
  TempDir dir("cv");
  const CvResult r = run_cv(c.bags, plan, tiny_train(2), dir.path());
  ASSERT_EQ(r.folds.size(), 5u);
  std::set<std::string> seen;
  for (const FoldOutcome& f : r.folds) {
    EXPECT_TRUE(fs::exists(f.checkpoint)) << f.checkpoint;
    EXPECT_TRUE(fs::exists(dir.path() / ("fold" + std::to_string(f.fold)) / "best.ckpt"));
    std::set<std::string> val_patients;
    for (const std::string& id : f.val_ids) {
      EXPECT_TRUE(seen.insert(id).second);
      for (const auto& b : c.bags)
        if (b.wsi_id == id) val_patients.insert(b.patient_id);
    }
    for (std::size_t i : plan.complement(c.bags, f.fold))
      EXPECT_EQ(val_patients.count(c.bags[i].patient_id), 0u);
  }
  EXPECT_EQ(seen.size(), c.bags.size());
  EXPECT_TRUE(fs::exists(dir.path() / "summary.json"));

  // Recompute per-section metrics externally and compare the aggregate.
  ASSERT_EQ(r.sections.size(), 2u);
  for (const SectionSummary& s : r.sections) {
    std::vector<double> acc;
    for (const FoldOutcome& f : r.folds) {
      std::vector<double> p;
      std::vector<int> y;
      for (std::size_t i = 0; i < f.val_ids.size(); ++i)
        if (f.sections[i] == s.section) p.push_back(f.probs[i]), y.push_back(f.labels[i]);
      if (p.empty()) {
        acc.push_back(NAN);
        continue;
      }
      std::size_t ok = 0;
      for (std::size_t i = 0; i < p.size(); ++i) ok += (p[i] >= 0.5) == (y[i] == 1);
      acc.push_back(static_cast<double>(ok) / static_cast<double>(p.size()));
    }
    const auto& pf = s.per_fold.at("accuracy");
    ASSERT_EQ(pf.size(), acc.size());
    double sum = 0, n = 0;
    for (std::size_t k = 0; k < acc.size(); ++k) {
      if (std::isnan(acc[k])) {
        EXPECT_TRUE(std::isnan(pf[k]));
        continue;
      }
      EXPECT_DOUBLE_EQ(pf[k], acc[k]);
      sum += acc[k];
      ++n;
    }
    double ss = 0;
    for (double a : acc)
      if (!std::isnan(a)) ss += (a - sum / n) * (a - sum / n);
    const MeanSem& ms = s.aggregate.at("accuracy");
    EXPECT_NEAR(ms.mean, sum / n, 1e-15);
    if (n >= 2) EXPECT_NEAR(ms.sem, std::sqrt(ss / (n - 1)) / std::sqrt(n), 1e-15);
  }
}

}  // namespace
}  // namespace daem
