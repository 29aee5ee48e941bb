// Copyright 2026 The DAEM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>

#include "daem/graph.hpp"
#include "daem/ops.hpp"
#include "daem/params.hpp"

namespace daem {

/// Mean over {h_v} ∪ {h_u : u ∈ N(v)}; an isolated node keeps its own row.
Tensor mean_aggregate(const SpatialGraph& graph, const Tensor& h);
/// Adjoint of mean_aggregate.
Tensor mean_aggregate_backward(const SpatialGraph& graph, const Tensor& dagg);

struct SageCache {
  Tensor agg;  // aggregated input
  Tensor pre;  // W·agg + b
  LayerNormCache ln;
  Tensor mask;  // dropout mask (all ones at inference)
};

/// LeakyReLU(W·AGG(h) + b).
Tensor sage_layer(const SpatialGraph& graph, const Tensor& h, const SageParams& p,
                  double slope, SageCache* cache = nullptr);

/// One MSGC stage: Dropout(LayerNorm(LeakyReLU(SAGE(h)))).
Tensor msgc_stage(const SpatialGraph& graph, const Tensor& h, const SageParams& p,
                  const ModelConfig& config, SeededRng& rng, bool training,
                  SageCache* cache = nullptr);

struct MsgcOutput {
  std::array<Tensor, kBranchCount> features;  // indexed by Branch, N_b × hidden
  std::array<std::array<SageCache, kMsgcStages>, kBranchCount> caches;
};

/// Branches run in the order small, large, TME; stage 0 before stage 1 inside
/// each branch (this fixes the order of dropout draws).
MsgcOutput msgc_forward(const BagGraphs& graphs, const MsgcParams& params,
                        const ModelConfig& config, SeededRng& rng, bool training);

/// Accumulates parameter gradients. Inputs are data, so no input gradient is
/// produced.
void msgc_backward(const BagGraphs& graphs, const MsgcOutput& forward,
                   const std::array<Tensor, kBranchCount>& doutput, const MsgcParams& params,
                   const ModelConfig& config, MsgcParams& grads);

const SpatialGraph& branch_graph(const BagGraphs& graphs, Branch b);

}  // namespace daem
