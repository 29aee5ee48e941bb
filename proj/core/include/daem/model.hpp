// Copyright 2026 The DAEM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <vector>

#include "daem/expert.hpp"
#include "daem/graph.hpp"
#include "daem/head.hpp"
#include "daem/msgc.hpp"

namespace daem {

struct ForwardPass {
  MsgcOutput msgc;
  std::array<ExpertOutput, kExpertCount> experts;
  HeadCache head;
  Tensor logits;               // length 2
  std::vector<double> probs;   // softmax(logits)
};

/// MSGC → two experts on the same branch outputs → head.
ForwardPass model_forward(const BagGraphs& graphs, const ModelParams& params,
                          const ModelConfig& config, SeededRng& rng, bool training);

struct StepLoss {
  LossComponents components;
  double total = 0.0;
};

/// Loss of one forward pass against the contrast queue (not modified). When
/// `grads` is non-null the full gradient is accumulated into it.
StepLoss model_loss(const ForwardPass& fp, const BagGraphs& graphs, int label,
                    const ContrastiveQueue& queue, const LossWeights& weights,
                    const ModelParams& params, const ModelConfig& config,
                    ModelParams* grads = nullptr);

struct Prediction {
  double prob_stas = 0.0;
  std::vector<double> logits;
  /// Per expert: attention per pooled position and the node it came from.
  std::array<std::vector<double>, kExpertCount> position_attention;
  std::array<std::vector<TokenOrigin>, kExpertCount> provenance;
  std::array<std::vector<double>, kExpertCount> layer_energy;
};

/// Inference (dropout off, no RNG draws).
Prediction predict(const BagGraphs& graphs, const ModelParams& params, const ModelConfig& config);

}  // namespace daem
