// Copyright 2026 The DAEM Authors
// SPDX-License-Identifier: Apache-2.0

#include "daem/model.hpp"

#include "daem/error.hpp"

namespace daem {

ForwardPass model_forward(const BagGraphs& graphs, const ModelParams& params,
                          const ModelConfig& config, SeededRng& rng, bool training) {
  ForwardPass fp;
  fp.msgc = msgc_forward(graphs, params.msgc, config, rng, training);
  for (std::size_t e = 0; e < kExpertCount; ++e)
    fp.experts[e] = expert_forward(fp.msgc.features, params.experts[e], config);
  fp.logits = classify(fp.experts[0].embedding, fp.experts[1].embedding, params.head, config, rng,
                       training, &fp.head);
  fp.probs = softmax(fp.logits.values());
  return fp;
}

StepLoss model_loss(const ForwardPass& fp, const BagGraphs& graphs, int label,
                    const ContrastiveQueue& queue, const LossWeights& weights,
                    const ModelParams& params, const ModelConfig& config, ModelParams* grads) {
  StepLoss out;
  std::vector<double> dsup;
  std::vector<double> dce;
  Tensor dmse1;
  Tensor dmse2;
  out.components.supcon = supcon_anchor_loss(fp.head.contrast.values(), label, queue, weights.tau,
                                             grads ? &dsup : nullptr);
  out.components.mse = consistency_mse(fp.experts[0].embedding, fp.experts[1].embedding,
                                       grads ? &dmse1 : nullptr, grads ? &dmse2 : nullptr);
  out.components.ce = cross_entropy(fp.logits.values(), label, grads ? &dce : nullptr);
  out.total = total_loss(out.components, weights);
  if (!grads) return out;

  for (double& g : dce) g *= weights.gamma;
  for (double& g : dsup) g *= weights.lambda;
  const std::size_t classes = dce.size();
  const std::size_t width = dsup.size();
  const Tensor dlogits({classes}, std::move(dce));
  const Tensor dcontrast({1, width}, std::move(dsup));
  auto [dx1, dx2] = classify_backward(dlogits, &dcontrast, fp.head, params.head, grads->head);
  dmse1 *= weights.beta;
  dmse2 *= weights.beta;
  dx1 += dmse1;
  dx2 += dmse2;

  std::array<Tensor, kBranchCount> dbranch =
      expert_backward(fp.experts[0], dx1, params.experts[0], config, grads->experts[0]);
  const std::array<Tensor, kBranchCount> d2 =
      expert_backward(fp.experts[1], dx2, params.experts[1], config, grads->experts[1]);
  for (std::size_t b = 0; b < kBranchCount; ++b) dbranch[b] += d2[b];
  msgc_backward(graphs, fp.msgc, dbranch, params.msgc, config, grads->msgc);
  return out;
}

Prediction predict(const BagGraphs& graphs, const ModelParams& params, const ModelConfig& config) {
  SeededRng unused(0);
  const ForwardPass fp = model_forward(graphs, params, config, unused, false);
  Prediction p;
  p.prob_stas = fp.probs[static_cast<std::size_t>(Label::kStas)];
  p.logits.assign(fp.logits.values().begin(), fp.logits.values().end());
  for (std::size_t e = 0; e < kExpertCount; ++e) {
    p.position_attention[e] = fp.experts[e].position_attention;
    p.provenance[e] = fp.experts[e].provenance;
    p.layer_energy[e] = fp.experts[e].layer_energy;
  }
  return p;
}

}  // namespace daem
