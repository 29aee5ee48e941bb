// Copyright 2026 The DAEM Authors
// SPDX-License-Identifier: Apache-2.0

#include "daem/msgc.hpp"

#include "daem/error.hpp"

namespace daem {

namespace {

// Per-node neighbour lists from the (src-grouped) edge list.
std::vector<std::vector<std::size_t>> neighbour_lists(const SpatialGraph& g) {
  std::vector<std::vector<std::size_t>> nb(g.node_count());
  for (const Edge& e : g.edges) nb[e.src].push_back(e.dst);
  return nb;
}

}  // namespace

const SpatialGraph& branch_graph(const BagGraphs& graphs, Branch b) {
  switch (b) {
    case Branch::kSmall:
      return graphs.small;
    case Branch::kLarge:
      return graphs.large;
    case Branch::kTme:
      return graphs.tme;
  }
  return graphs.small;
}

Tensor mean_aggregate(const SpatialGraph& graph, const Tensor& h) {
  require(h.rows() == graph.node_count(), ErrorKind::kShape,
          "mean_aggregate: feature rows must equal node count");
  const auto nb = neighbour_lists(graph);
  const std::size_t f = h.cols();
  Tensor agg = Tensor::zeros(h.rows(), f);
  for (std::size_t v = 0; v < nb.size(); ++v) {
    auto out = agg.row(v);
    auto self = h.row(v);
    for (std::size_t c = 0; c < f; ++c) out[c] = self[c];
    for (std::size_t u : nb[v]) {
      auto hu = h.row(u);
      for (std::size_t c = 0; c < f; ++c) out[c] += hu[c];
    }
    const double inv = 1.0 / static_cast<double>(nb[v].size() + 1);
    for (std::size_t c = 0; c < f; ++c) out[c] *= inv;
  }
  return agg;
}

Tensor mean_aggregate_backward(const SpatialGraph& graph, const Tensor& dagg) {
  const auto nb = neighbour_lists(graph);
  const std::size_t f = dagg.cols();
  Tensor dh = Tensor::zeros(dagg.rows(), f);
  for (std::size_t v = 0; v < nb.size(); ++v) {
    const double inv = 1.0 / static_cast<double>(nb[v].size() + 1);
    auto g = dagg.row(v);
    auto self = dh.row(v);
    for (std::size_t c = 0; c < f; ++c) self[c] += g[c] * inv;
    for (std::size_t u : nb[v]) {
      auto du = dh.row(u);
      for (std::size_t c = 0; c < f; ++c) du[c] += g[c] * inv;
    }
  }
  return dh;
}

Tensor sage_layer(const SpatialGraph& graph, const Tensor& h, const SageParams& p,
                  double slope, SageCache* cache) {
  require(h.cols() == p.weight.cols(), ErrorKind::kShape,
          "sage_layer: input width " + std::to_string(h.cols()) + " vs weight " +
              p.weight.shape_string());
  Tensor agg = mean_aggregate(graph, h);
  Tensor pre = matmul_nt(agg, p.weight);
  add_row_bias(pre, p.bias);
  Tensor act = leaky_relu(pre, slope);
  if (cache) {
    cache->agg = std::move(agg);
    cache->pre = std::move(pre);
  }
  return act;
}

Tensor msgc_stage(const SpatialGraph& graph, const Tensor& h, const SageParams& p,
                  const ModelConfig& config, SeededRng& rng, bool training, SageCache* cache) {
  SageCache local;
  SageCache& c = cache ? *cache : local;
  const Tensor act = sage_layer(graph, h, p, config.leaky_slope, &c);
  Tensor normed = layer_norm(act, config.ln_eps, p.ln_gain, p.ln_shift, &c.ln);
  c.mask = dropout_mask(normed.shape(), config.dropout, rng, training);
  return hadamard(normed, c.mask);
}

MsgcOutput msgc_forward(const BagGraphs& graphs, const MsgcParams& params,
                        const ModelConfig& config, SeededRng& rng, bool training) {
  MsgcOutput out;
  for (std::size_t b = 0; b < kBranchCount; ++b) {
    const SpatialGraph& g = branch_graph(graphs, static_cast<Branch>(b));
    require(g.node_count() >= 1, ErrorKind::kShape, "msgc_forward: empty graph");
    Tensor h = g.node_features;
    for (std::size_t s = 0; s < kMsgcStages; ++s)
      h = msgc_stage(g, h, params.branches[b][s], config, rng, training, &out.caches[b][s]);
    out.features[b] = std::move(h);
  }
  return out;
}

void msgc_backward(const BagGraphs& graphs, const MsgcOutput& forward,
                   const std::array<Tensor, kBranchCount>& doutput, const MsgcParams& params,
                   const ModelConfig& config, MsgcParams& grads) {
  for (std::size_t b = 0; b < kBranchCount; ++b) {
    const SpatialGraph& g = branch_graph(graphs, static_cast<Branch>(b));
    Tensor d = doutput[b];
    for (std::size_t s = kMsgcStages; s-- > 0;) {
      const SageCache& c = forward.caches[b][s];
      const SageParams& p = params.branches[b][s];
      SageParams& gp = grads.branches[b][s];
      Tensor dnorm = hadamard(d, c.mask);
      Tensor dact = layer_norm_backward(dnorm, c.ln, p.ln_gain, gp.ln_gain, gp.ln_shift);
      Tensor dpre = leaky_relu_backward(dact, c.pre, config.leaky_slope);
      gp.weight += matmul_tn(dpre, c.agg);
      gp.bias += column_sums(dpre);
      if (s == 0) break;
      d = mean_aggregate_backward(g, matmul(dpre, p.weight));
    }
  }
}

}  // namespace daem
