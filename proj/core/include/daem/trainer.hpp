// Copyright 2026 The DAEM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "daem/checkpoint.hpp"
#include "daem/dataset.hpp"
#include "daem/metrics.hpp"
#include "daem/model.hpp"

namespace daem {

struct TrainConfig {
  double lr = 1e-3;
  int epochs = 100;
  int batch = 1;  // fixed
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  double plateau_factor = 0.5;
  int plateau_patience = 5;
  double plateau_threshold = 1e-4;  // relative improvement needed
  double clip_norm = 5.0;           // 0 disables clipping
  std::uint64_t seed = 2026;
  LossWeights loss;
  ModelConfig model;  // model.dropout is the training dropout rate

  /// Throws kValidation on out-of-range values (lr may be 0).
  void validate() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

std::string train_config_json(const TrainConfig& c);
/// Missing keys keep their defaults; unknown keys are rejected.
TrainConfig parse_train_config(const std::string& text);
TrainConfig read_train_config(const std::filesystem::path& path);
std::uint64_t config_hash(const TrainConfig& c);

// ---------------------------------------------------------------------------
// Optimizer pieces.

struct AdamState {
  ModelParams m;
  ModelParams v;
  std::uint64_t step = 0;
};

AdamState make_adam_state(const ModelParams& params);

/// Decoupled weight decay then the bias-corrected adaptive-moment step:
///   θ ← θ(1 − lr·wd);  m ← β1 m + (1−β1) g;  v ← β2 v + (1−β2) g²
///   θ ← θ − lr · m̂ / (√v̂ + ε)
void adamw_step(ModelParams& params, const ModelParams& grads, AdamState& state, double lr,
                const TrainConfig& config);

double global_norm(const ModelParams& grads);
/// Rescales to `max_norm` when the global norm exceeds it. Returns the norm
/// before clipping.
double clip_gradients(ModelParams& grads, double max_norm);

/// Minimising plateau schedule on a monitored value.
struct PlateauScheduler {
  double lr = 0.0;
  double best = std::numeric_limits<double>::infinity();
  int bad_epochs = 0;
  int reductions = 0;

  /// Returns true when the learning rate was reduced.
  bool step(double value, double factor, int patience, double threshold);

  friend bool operator==(const PlateauScheduler&, const PlateauScheduler&) = default;
};

// ---------------------------------------------------------------------------
// Training loop.

struct EpochLog {
  int epoch = 0;  // 1-based
  double lr = 0.0;
  double loss = 0.0;  // means over training steps
  double supcon = 0.0;
  double mse = 0.0;
  double ce = 0.0;
  double train_accuracy = 0.0;  // inference pass after the epoch
  double val_loss = 0.0;        // mean cross-entropy, inference
  double val_accuracy = 0.0;
  double val_auc = 0.0;  // NaN when the split has one class
  int clipped_steps = 0;
  double max_grad_norm = 0.0;
  std::vector<double> energy;  // mean per DAM layer (expert 0) over steps
  bool improved = false;       // new best validation loss
};

std::string epoch_log_json(const std::vector<EpochLog>& log);
std::vector<EpochLog> parse_epoch_log(const std::string& text);

/// Everything needed to continue training bit-identically.
struct TrainState {
  ModelParams params;
  AdamState adam;
  PlateauScheduler scheduler;
  SeededRng rng{0};
  ContrastiveQueue queue;
  int epoch = 0;  // completed epochs
  double best_val_loss = std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  ModelParams best_params;
  std::vector<EpochLog> log;
};

TrainState init_train_state(const TrainConfig& config);

void save_train_state(const TrainState& s, const TrainConfig& config,
                      const std::filesystem::path& path);
/// Throws kValidation if the stored config hash differs from `config`'s.
TrainState load_train_state(const std::filesystem::path& path, const TrainConfig& config);

/// Trained weights for inference.
struct ModelCheckpoint {
  ModelParams params;
  TrainConfig config;
  int epoch = 0;
  double val_loss = 0.0;
};

void save_model(const ModelCheckpoint& c, const std::filesystem::path& path);
ModelCheckpoint load_model(const std::filesystem::path& path);
/// Hash of the checkpoint file bytes (for prediction caches).
std::string checkpoint_hash(const std::filesystem::path& path);

struct TrainOptions {
  std::function<void(const EpochLog&)> on_epoch;
  std::function<void(const std::string&)> on_event;  // e.g. clipping notices
  /// Stop after this many completed epochs (resume testing); -1 = run all.
  int stop_after_epoch = -1;
  /// If set, `last.ckpt` (full state) and `best.ckpt` (model) are written
  /// here after every epoch.
  std::filesystem::path checkpoint_dir;
  /// Checked after each epoch (after on_epoch); returning true ends training.
  std::function<bool(const EpochLog&)> should_stop;
};

struct TrainResult {
  ModelCheckpoint best;
  std::vector<EpochLog> log;
  TrainState state;  // final state
};

/// Trains on `train`, selects by validation loss on `val`. If `resume` is
/// given, training continues from that state.
TrainResult train_fold(const Cohort& train, const Cohort& val, const TrainConfig& config,
                       const TrainOptions& options = {}, TrainState* resume = nullptr);

/// Inference probabilities P(STAS) for every bag, in order.
std::vector<double> predict_cohort(const Cohort& bags, const ModelParams& params,
                                   const ModelConfig& config);

// ---------------------------------------------------------------------------
// Cross-validation.

struct FoldOutcome {
  int fold = 0;
  std::vector<std::string> val_ids;
  std::vector<SectionKind> sections;
  std::vector<int> labels;
  std::vector<double> probs;
  int best_epoch = 0;
  double best_val_loss = 0.0;
  std::filesystem::path checkpoint;  // empty when nothing was written
  std::vector<EpochLog> log;
  ModelCheckpoint best;
};

inline constexpr const char* kCvMetricNames[] = {"accuracy", "precision", "recall", "f1",
                                                 "specificity", "auc", "prc_auc", "brier"};

struct SectionSummary {
  SectionKind section = SectionKind::kParaffin;
  /// metric name -> value per fold (NaN when undefined for that fold).
  std::map<std::string, std::vector<double>> per_fold;
  std::map<std::string, MeanSem> aggregate;
};

struct CvResult {
  std::vector<FoldOutcome> folds;
  std::vector<SectionSummary> sections;  // frozen, paraffin
};

/// Scalar metric by name from a report.
double report_metric(const EvalReport& r, const std::string& name);

/// Aggregates per-fold predictions by section.
std::vector<SectionSummary> summarize_folds(const std::vector<FoldOutcome>& folds);

/// One train_fold per fold. With a non-empty `out_dir`, each fold writes
/// `fold<k>/best.ckpt`, `fold<k>/log.json` and `fold<k>/predictions.csv`,
/// and a `summary.json` is written at the end.
CvResult run_cv(const Cohort& cohort, const FoldPlan& plan, const TrainConfig& config,
                const std::filesystem::path& out_dir = {}, const TrainOptions& options = {});

std::string cv_summary_json(const CvResult& r);

}  // namespace daem
