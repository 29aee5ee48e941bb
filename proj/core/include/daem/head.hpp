// Copyright 2026 The DAEM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <deque>
#include <span>
#include <utility>
#include <vector>

#include "daem/ops.hpp"
#include "daem/params.hpp"

namespace daem {

// ---------------------------------------------------------------------------
// Classification head.

struct HeadCache {
  Tensor concat;      // 1 × 2·expert_dim, [x1, x2] + b1
  LayerNormCache ln;
  Tensor normed;      // LayerNorm output, 1 × 2·expert_dim
  Tensor contrast;    // normed / ‖normed‖
  std::vector<double> contrast_norm;
  Tensor hidden;      // W1·normed, 1 × head_hidden
  Tensor mask;        // dropout mask on hidden
  Tensor dropped;     // hidden ∘ mask
};

/// logits = W2·Dropout(W1·LayerNorm([x1, x2] + b1)) + b2. Returns a length-2
/// vector. x1 and x2 are 1 × expert_dim or expert_dim.
Tensor classify(const Tensor& x1, const Tensor& x2, const HeadParams& p,
                const ModelConfig& config, SeededRng& rng, bool training,
                HeadCache* cache = nullptr);

/// Backpropagates `dlogits` (length 2) and, if given, a gradient on the
/// contrastive embedding (1 × 2·expert_dim). Accumulates into `grads` and
/// returns the gradients for x1 and x2 (each 1 × expert_dim).
std::pair<Tensor, Tensor> classify_backward(const Tensor& dlogits, const Tensor* dcontrast,
                                            const HeadCache& cache, const HeadParams& p,
                                            HeadParams& grads);

/// Class probabilities from logits (numerically stable softmax).
std::vector<double> softmax(std::span<const double> logits);

// ---------------------------------------------------------------------------
// Losses.

struct LossWeights {
  double lambda = 0.2;  // supervised contrastive
  double beta = 0.2;    // expert consistency
  double gamma = 0.6;   // cross-entropy
  double tau = 0.07;
  std::size_t queue_capacity = 64;

  /// Throws kValidation unless λ, β, γ ∈ (0, 1), τ > 0 and capacity ≥ 1.
  void validate() const;

  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

/// Batch supervised contrastive loss over unit-norm rows of `embeddings`.
/// Anchors without positives contribute nothing; the result is the mean over
/// the remaining anchors (0 if there are none).
double supcon_loss(const Tensor& embeddings, std::span<const int> labels, double tau);

struct QueueEntry {
  std::vector<double> embedding;
  int label = 0;

  friend bool operator==(const QueueEntry&, const QueueEntry&) = default;
};

/// FIFO memory of recent (embedding, label) pairs used as contrast set.
class ContrastiveQueue {
 public:
  explicit ContrastiveQueue(std::size_t capacity = 64) : capacity_(capacity) {}

  void push(std::span<const double> embedding, int label);
  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  const std::deque<QueueEntry>& entries() const { return entries_; }
  void clear() { entries_.clear(); }

  friend bool operator==(const ContrastiveQueue&, const ContrastiveQueue&) = default;

 private:
  std::size_t capacity_;
  std::deque<QueueEntry> entries_;
};

/// Contrastive loss of one anchor against the queue (entries are constants).
/// Returns 0 and a zero gradient when the queue holds no positive.
double supcon_anchor_loss(std::span<const double> anchor, int label,
                          const ContrastiveQueue& queue, double tau,
                          std::vector<double>* grad = nullptr);

/// (1/n) Σ (x1_i − x2_i)². Gradients are written if requested.
double consistency_mse(const Tensor& x1, const Tensor& x2, Tensor* dx1 = nullptr,
                       Tensor* dx2 = nullptr);

/// −log softmax(logits)[label]; optional gradient softmax − onehot.
double cross_entropy(std::span<const double> logits, int label,
                     std::vector<double>* grad = nullptr);

struct LossComponents {
  double supcon = 0.0;
  double mse = 0.0;
  double ce = 0.0;
};

double total_loss(const LossComponents& c, const LossWeights& w);

}  // namespace daem
