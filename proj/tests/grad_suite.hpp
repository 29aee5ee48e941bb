// Copyright 2026 The DAEM Authors
// SPDX-License-Identifier: Apache-2.0

// Finite-difference checks for every differentiable module, shared by the
// gradient unit tests and the acceptance runner. Each check returns the
// per-tensor reports; a check passes when every report does.

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "daem/expert.hpp"
#include "daem/gradcheck.hpp"
#include "daem/graph.hpp"
#include "daem/head.hpp"
#include "daem/model.hpp"
#include "daem/msgc.hpp"
#include "test_util.hpp"

namespace daem::grad_suite {

using Reports = std::vector<GradCheckReport>;

inline constexpr double kTol = 1e-4;

inline double weighted_sum(const Tensor& y, const Tensor& r) { return dot(y.values(), r.values()); }

inline Reports append(Reports a, const Reports& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

inline Reports layer_norm() {
  SeededRng rng(41);
  Tensor x = test::random_tensor({3, 7}, rng, 2.0), gain = test::random_tensor({7}, rng),
         shift = test::random_tensor({7}, rng);
  const Tensor r = test::random_tensor({3, 7}, rng);
  LayerNormCache cache;
  daem::layer_norm(x, 1e-5, gain, shift, &cache);
  Tensor dg = Tensor::vector(7), ds = Tensor::vector(7);
  const Tensor dx = layer_norm_backward(r, cache, gain, dg, ds);
  const GradProbe probes[] = {{"x", &x, &dx}, {"gain", &gain, &dg}, {"shift", &shift, &ds}};
  return grad_check([&] { return weighted_sum(daem::layer_norm(x, 1e-5, gain, shift), r); }, probes, kTol);
}

inline Reports leaky_relu_and_l2_normalize() {
  SeededRng rng(42);
  Tensor x = test::random_tensor({4, 5}, rng);
  for (double& v : x.values()) v += v >= 0 ? 0.1 : -0.1;  // keep clear of the kink
  const Tensor r = test::random_tensor({4, 5}, rng);
  const Tensor dx = leaky_relu_backward(r, x, 0.01);
  const GradProbe p1[] = {{"leaky_relu.x", &x, &dx}};
  Reports out = grad_check([&] { return weighted_sum(leaky_relu(x, 0.01), r); }, p1, kTol);

  std::vector<double> norms;
  const Tensor y = l2_normalize_rows(x, &norms);
  const Tensor dn = l2_normalize_rows_backward(r, y, norms);
  const GradProbe p2[] = {{"l2_normalize.x", &x, &dn}};
  return append(out, grad_check([&] { return weighted_sum(l2_normalize_rows(x), r); }, p2, kTol));
}

inline Reports mean_aggregate() {
  SeededRng rng(43);
  SpatialGraph g;
  for (int i = 0; i < 9; ++i) g.coords.push_back({rng.uniform(0, 10), rng.uniform(0, 10)});
  g.edges = build_knn_graph(g.coords, 3);
  Tensor h = test::random_tensor({9, 4}, rng);
  const Tensor r = test::random_tensor({9, 4}, rng);
  const Tensor dh = mean_aggregate_backward(g, r);
  const GradProbe probes[] = {{"h", &h, &dh}};
  return grad_check([&] { return weighted_sum(daem::mean_aggregate(g, h), r); }, probes, kTol);
}

inline Reports attention_heads() {
  SeededRng rng(44);
  Reports out;
  for (bool weighted : {false, true}) {
    Tensor q = test::random_tensor({6, 6}, rng), k = test::random_tensor({6, 6}, rng),
           v = test::random_tensor({6, 6}, rng);
    std::vector<double> w;
    if (weighted) w = {1, 3, 2, 1, 4, 1};
    const Tensor r = test::random_tensor({6, 6}, rng);
    AttentionCache cache;
    diffusion_attention_heads(q, k, v, 2, w, std::nullopt, &cache);
    const AttentionGrads g = diffusion_attention_heads_backward(r, v, 2, w, cache);
    const GradProbe probes[] = {{"q", &q, &g.dq}, {"k", &k, &g.dk}, {"v", &v, &g.dv}};
    out = append(out, grad_check(
        [&] { return weighted_sum(diffusion_attention_heads(q, k, v, 2, w), r); }, probes, kTol));
  }
  return out;
}

inline Reports dam_layer() {
  SeededRng rng(45);
  Tensor tokens = test::random_tensor({5, 8}, rng);
  DamLayerParams p{test::random_tensor({8, 8}, rng, 0.5), test::random_tensor({8, 8}, rng, 0.5),
                   test::random_tensor({8, 8}, rng, 0.5)};
  const std::vector<double> w = {2, 1, 1, 3, 1};
  const Tensor r = test::random_tensor({5, 8}, rng);
  AttentionCache cache;
  diffusion_attention(tokens, p, 2, w, &cache);
  DamLayerParams g{Tensor::zeros(8, 8), Tensor::zeros(8, 8), Tensor::zeros(8, 8)};
  const Tensor dtokens = diffusion_attention_backward(r, tokens, p, 2, w, cache, g);
  const GradProbe probes[] = {{"tokens", &tokens, &dtokens},
                              {"wq", &p.wq, &g.wq},
                              {"wk", &p.wk, &g.wk},
                              {"wv", &p.wv, &g.wv}};
  return grad_check([&] { return weighted_sum(diffusion_attention(tokens, p, 2, w), r); },
                    probes, kTol);
}

/// Full expert: pooling, every DAM layer and the aggregation.
inline Reports expert(bool compress) {
  ModelConfig c = test::tiny_config();
  c.compress_tokens = compress;
  SeededRng rng(46);
  ModelParams params = init_params(c, 12);
  ExpertParams& p = params.experts[0];
  std::array<Tensor, kBranchCount> br = {test::random_tensor({5, c.hidden}, rng),
                                         test::random_tensor({3, c.hidden}, rng),
                                         test::random_tensor({11, c.hidden}, rng)};
  const Tensor r = test::random_tensor({1, c.expert_dim}, rng);
  const ExpertOutput fwd = expert_forward(br, p, c);
  ExpertParams g = params.zeros_like().experts[0];
  const auto dbr = expert_backward(fwd, r, p, c, g);
  std::vector<GradProbe> probes;
  for (std::size_t b = 0; b < kBranchCount; ++b)
    probes.push_back({"branch" + std::to_string(b), &br[b], &dbr[b]});
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    probes.push_back({"wq" + std::to_string(l), &p.layers[l].wq, &g.layers[l].wq});
    probes.push_back({"wk" + std::to_string(l), &p.layers[l].wk, &g.layers[l].wk});
    probes.push_back({"wv" + std::to_string(l), &p.layers[l].wv, &g.layers[l].wv});
  }
  probes.push_back({"score", &p.score, &g.score});
  probes.push_back({"agg_weight", &p.agg_weight, &g.agg_weight});
  probes.push_back({"agg_bias", &p.agg_bias, &g.agg_bias});
  return grad_check([&] { return weighted_sum(expert_forward(br, p, c).embedding, r); }, probes,
                    kTol);
}

/// Head with a fixed dropout mask, including the contrast embedding path.
inline Reports head() {
  const ModelConfig c = test::tiny_config(0.2);
  SeededRng rng(47);
  ModelParams params = init_params(c, 13);
  HeadParams& p = params.head;
  for (Tensor* t : {&p.b1, &p.ln_gain, &p.ln_shift}) *t = test::random_tensor(t->shape(), rng);
  Tensor x1 = test::random_tensor({1, c.expert_dim}, rng), x2 = test::random_tensor({1, c.expert_dim}, rng);
  const Tensor rl = test::random_tensor({2}, rng);
  const Tensor rc = test::random_tensor({1, 2 * c.expert_dim}, rng);
  auto run = [&](HeadCache* cache) {
    SeededRng mask_rng(5);  // same mask on every call
    return classify(x1, x2, p, c, mask_rng, true, cache);
  };
  HeadCache cache;
  run(&cache);
  HeadParams g = params.zeros_like().head;
  auto [dx1, dx2] = classify_backward(rl, &rc, cache, p, g);
  const GradProbe probes[] = {{"x1", &x1, &dx1},         {"x2", &x2, &dx2},
                              {"b1", &p.b1, &g.b1},         {"ln_gain", &p.ln_gain, &g.ln_gain},
                              {"ln_shift", &p.ln_shift, &g.ln_shift}, {"w1", &p.w1, &g.w1},
                              {"w2", &p.w2, &g.w2},         {"b2", &p.b2, &g.b2}};
  return grad_check(
      [&] {
        HeadCache hc;
        const Tensor logits = run(&hc);
        return dot(logits.values(), rl.values()) + weighted_sum(hc.contrast, rc);
      },
      probes, kTol);
}

inline Reports losses() {
  SeededRng rng(48);
  ContrastiveQueue queue(16);
  for (int i = 0; i < 12; ++i) {
    Tensor e = l2_normalize_rows(test::random_tensor({1, 6}, rng));
    queue.push(e.values(), i % 2);
  }
  Tensor anchor = l2_normalize_rows(test::random_tensor({1, 6}, rng));
  std::vector<double> g;
  supcon_anchor_loss(anchor.values(), 1, queue, 0.07, &g);
  const Tensor dg({1, 6}, g);
  const GradProbe p1[] = {{"supcon.anchor", &anchor, &dg}};
  Reports out = grad_check([&] { return supcon_anchor_loss(anchor.values(), 1, queue, 0.07); }, p1, kTol);

  Tensor logits = test::random_tensor({2}, rng, 3.0);
  std::vector<double> gc;
  cross_entropy(logits.values(), 0, &gc);
  const Tensor dl({2}, gc);
  const GradProbe p2[] = {{"ce.logits", &logits, &dl}};
  out = append(out, grad_check([&] { return cross_entropy(logits.values(), 0); }, p2, kTol));

  Tensor a = test::random_tensor({1, 5}, rng), b = test::random_tensor({1, 5}, rng);
  Tensor da, db;
  consistency_mse(a, b, &da, &db);
  const GradProbe p3[] = {{"mse.a", &a, &da}, {"mse.b", &b, &db}};
  return append(out, grad_check([&] { return consistency_mse(a, b); }, p3, kTol));
}

/// Both MSGC stages of every branch on a real synthetic bag.
inline Reports msgc() {
  const ModelConfig c = test::tiny_config();
  const SyntheticCohort cohort = test::small_cohort(2, 3);
  const BagGraphs graphs = build_bag_graphs(cohort.bags[0]);
  ModelParams params = init_params(c, 14);
  SeededRng rng(49);
  std::array<Tensor, kBranchCount> r;
  for (std::size_t b = 0; b < kBranchCount; ++b)
    r[b] = test::random_tensor({branch_graph(graphs, static_cast<Branch>(b)).node_count(), c.hidden}, rng);
  auto loss = [&] {
    SeededRng d(0);
    const MsgcOutput o = msgc_forward(graphs, params.msgc, c, d, false);
    double s = 0.0;
    for (std::size_t b = 0; b < kBranchCount; ++b) s += weighted_sum(o.features[b], r[b]);
    return s;
  };
  SeededRng d(0);
  const MsgcOutput fwd = msgc_forward(graphs, params.msgc, c, d, false);
  ModelParams g = params.zeros_like();
  msgc_backward(graphs, fwd, r, params.msgc, c, g.msgc);
  std::vector<GradProbe> probes;
  for (std::size_t b = 0; b < kBranchCount; ++b)
    for (std::size_t s = 0; s < kMsgcStages; ++s) {
      auto& p = params.msgc.branches[b][s];
      auto& q = g.msgc.branches[b][s];
      const std::string n = std::to_string(b) + "." + std::to_string(s) + ".";
      probes.push_back({n + "weight", &p.weight, &q.weight});
      probes.push_back({n + "bias", &p.bias, &q.bias});
      probes.push_back({n + "ln_gain", &p.ln_gain, &q.ln_gain});
      probes.push_back({n + "ln_shift", &p.ln_shift, &q.ln_shift});
    }
  return grad_check(loss, probes, kTol);
}

/// Summed total loss over three synthetic bags against a pre-filled queue,
/// through every parameter of the model.
inline Reports end_to_end(std::size_t samples_per_tensor = 8) {
  const ModelConfig c = test::tiny_config();
  const SyntheticCohort cohort = test::small_cohort(3, 8);
  std::vector<BagGraphs> graphs;
  for (const WsiBag& b : cohort.bags) graphs.push_back(build_bag_graphs(b));
  ModelParams params = init_params(c, 16);
  ContrastiveQueue queue(8);
  SeededRng rng(50);
  for (int i = 0; i < 8; ++i)
    queue.push(l2_normalize_rows(test::random_tensor({1, 2 * c.expert_dim}, rng)).values(), i % 2);
  const LossWeights w;
  auto label = [&](std::size_t i) { return static_cast<int>(cohort.bags[i].label); };
  ModelParams grads = params.zeros_like();
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    SeededRng d(0);
    const ForwardPass fp = model_forward(graphs[i], params, c, d, false);
    model_loss(fp, graphs[i], label(i), queue, w, params, c, &grads);
  }
  std::vector<GradProbe> probes;
  std::vector<std::pair<std::string, Tensor*>> ps;
  std::vector<const Tensor*> gs;
  params.visit([&](const std::string& n, Tensor& t) { ps.push_back({n, &t}); });
  grads.visit([&](const std::string&, const Tensor& t) { gs.push_back(&t); });
  for (std::size_t i = 0; i < ps.size(); ++i) probes.push_back({ps[i].first, ps[i].second, gs[i]});
  GradCheckOptions o;
  o.samples_per_tensor = samples_per_tensor;
  return grad_check(
      [&] {
        double total = 0.0;
        for (std::size_t i = 0; i < graphs.size(); ++i) {
          SeededRng d(0);
          total += model_loss(model_forward(graphs[i], params, c, d, false), graphs[i], label(i),
                              queue, w, params, c)
                       .total;
        }
        return total;
      },
      probes, kTol, o);
}

struct NamedCheck {
  const char* name;
  std::function<Reports()> run;
};

/// Every check, in dependency order.
inline std::vector<NamedCheck> all_checks() {
  return {{"layer_norm", layer_norm},
          {"leaky_relu_l2_normalize", leaky_relu_and_l2_normalize},
          {"mean_aggregate", mean_aggregate},
          {"attention_heads", attention_heads},
          {"dam_layer", dam_layer},
          {"expert_compressed", [] { return expert(true); }},
          {"expert_expanded", [] { return expert(false); }},
          {"head", head},
          {"losses", losses},
          {"msgc", msgc},
          {"end_to_end", [] { return end_to_end(); }}};
}

}  // namespace daem::grad_suite
