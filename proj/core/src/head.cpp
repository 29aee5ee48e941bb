// Copyright 2026 The DAEM Authors
// SPDX-License-Identifier: Apache-2.0

#include "daem/head.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "daem/error.hpp"

namespace daem {

namespace {

Tensor as_row(const Tensor& x) {
  return Tensor({1, x.size()}, std::vector<double>(x.values().begin(), x.values().end()));
}

double log_sum_exp(std::span<const double> v) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : v) mx = std::max(mx, x);
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

}  // namespace

Tensor classify(const Tensor& x1, const Tensor& x2, const HeadParams& p,
                const ModelConfig& config, SeededRng& rng, bool training, HeadCache* cache) {
  require(x1.size() == x2.size(), ErrorKind::kShape, "classify: expert embeddings differ in size");
  require(x1.size() + x2.size() == p.b1.size(), ErrorKind::kShape,
          "classify: concatenated width " + std::to_string(x1.size() + x2.size()) +
              " vs head input " + std::to_string(p.b1.size()));
  HeadCache local;
  HeadCache& c = cache ? *cache : local;

  std::vector<double> cat(x1.values().begin(), x1.values().end());
  cat.insert(cat.end(), x2.values().begin(), x2.values().end());
  for (std::size_t i = 0; i < cat.size(); ++i) cat[i] += p.b1[i];
  const std::size_t width = cat.size();
  c.concat = Tensor({1, width}, std::move(cat));
  c.normed = layer_norm(c.concat, config.ln_eps, p.ln_gain, p.ln_shift, &c.ln);
  c.contrast = l2_normalize_rows(c.normed, &c.contrast_norm);
  c.hidden = matmul_nt(c.normed, p.w1);
  c.mask = dropout_mask(c.hidden.shape(), config.dropout, rng, training);
  c.dropped = hadamard(c.hidden, c.mask);
  Tensor logits = matmul_nt(c.dropped, p.w2);
  add_row_bias(logits, p.b2);
  return Tensor({logits.size()}, std::vector<double>(logits.values().begin(), logits.values().end()));
}

std::pair<Tensor, Tensor> classify_backward(const Tensor& dlogits, const Tensor* dcontrast,
                                            const HeadCache& c, const HeadParams& p,
                                            HeadParams& grads) {
  const Tensor dl = as_row(dlogits);
  grads.w2 += matmul_tn(dl, c.dropped);
  grads.b2 += column_sums(dl);
  const Tensor ddropped = matmul(dl, p.w2);
  const Tensor dhidden = hadamard(ddropped, c.mask);
  grads.w1 += matmul_tn(dhidden, c.normed);
  Tensor dnormed = matmul(dhidden, p.w1);
  if (dcontrast) dnormed += l2_normalize_rows_backward(as_row(*dcontrast), c.contrast, c.contrast_norm);
  const Tensor dcat = layer_norm_backward(dnormed, c.ln, p.ln_gain, grads.ln_gain, grads.ln_shift);
  for (std::size_t i = 0; i < dcat.size(); ++i) grads.b1[i] += dcat[i];

  const std::size_t half = dcat.size() / 2;
  std::vector<double> a(dcat.values().begin(), dcat.values().begin() + half);
  std::vector<double> b(dcat.values().begin() + half, dcat.values().end());
  return {Tensor({1, half}, std::move(a)), Tensor({1, half}, std::move(b))};
}

std::vector<double> softmax(std::span<const double> logits) {
  const double lse = log_sum_exp(logits);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = std::exp(logits[i] - lse);
  return out;
}

void LossWeights::validate() const {
  auto open_unit = [](double v) { return v > 0.0 && v < 1.0; };
  require(open_unit(lambda) && open_unit(beta) && open_unit(gamma), ErrorKind::kValidation,
          "loss weights must lie in (0, 1)");
  require(tau > 0.0 && std::isfinite(tau), ErrorKind::kValidation, "temperature must be > 0");
  require(queue_capacity >= 1, ErrorKind::kValidation, "queue capacity must be >= 1");
}

double supcon_loss(const Tensor& embeddings, std::span<const int> labels, double tau) {
  require(tau > 0.0, ErrorKind::kValidation, "supcon_loss: temperature must be > 0");
  const std::size_t n = embeddings.rows();
  require(n >= 2, ErrorKind::kShape, "supcon_loss: need at least two embeddings");
  require(labels.size() == n, ErrorKind::kShape, "supcon_loss: label count mismatch");
  double total = 0.0;
  std::size_t anchors = 0;
  std::vector<double> sims;
  for (std::size_t i = 0; i < n; ++i) {
    sims.clear();
    std::vector<std::size_t> pos;
    for (std::size_t a = 0; a < n; ++a) {
      if (a == i) continue;
      if (labels[a] == labels[i]) pos.push_back(sims.size());
      sims.push_back(dot(embeddings.row(i), embeddings.row(a)) / tau);
    }
    if (pos.empty()) continue;
    const double lse = log_sum_exp(sims);
    double s = 0.0;
    for (std::size_t k : pos) s += lse - sims[k];
    total += s / static_cast<double>(pos.size());
    ++anchors;
  }
  return anchors == 0 ? 0.0 : total / static_cast<double>(anchors);
}

void ContrastiveQueue::push(std::span<const double> embedding, int label) {
  entries_.push_back({std::vector<double>(embedding.begin(), embedding.end()), label});
  while (entries_.size() > capacity_) entries_.pop_front();
}

double supcon_anchor_loss(std::span<const double> anchor, int label,
                          const ContrastiveQueue& queue, double tau, std::vector<double>* grad) {
  require(tau > 0.0, ErrorKind::kValidation, "supcon: temperature must be > 0");
  if (grad) grad->assign(anchor.size(), 0.0);
  const auto& entries = queue.entries();
  std::vector<double> sims(entries.size());
  std::size_t positives = 0;
  for (std::size_t a = 0; a < entries.size(); ++a) {
    require(entries[a].embedding.size() == anchor.size(), ErrorKind::kShape,
            "supcon: queue embedding width mismatch");
    sims[a] = dot(anchor, entries[a].embedding) / tau;
    if (entries[a].label == label) ++positives;
  }
  if (positives == 0) return 0.0;
  const double lse = log_sum_exp(sims);
  const double inv_p = 1.0 / static_cast<double>(positives);
  double loss = lse;
  for (std::size_t a = 0; a < entries.size(); ++a)
    if (entries[a].label == label) loss -= inv_p * sims[a];
  if (grad) {
    for (std::size_t a = 0; a < entries.size(); ++a) {
      double coef = std::exp(sims[a] - lse);
      if (entries[a].label == label) coef -= inv_p;
      coef /= tau;
      for (std::size_t k = 0; k < anchor.size(); ++k) (*grad)[k] += coef * entries[a].embedding[k];
    }
  }
  return loss;
}

double consistency_mse(const Tensor& x1, const Tensor& x2, Tensor* dx1, Tensor* dx2) {
  require(x1.size() == x2.size() && x1.size() > 0, ErrorKind::kShape,
          "consistency_mse: dimension mismatch");
  const double n = static_cast<double>(x1.size());
  double s = 0.0;
  if (dx1) *dx1 = x1.zeros_like();
  if (dx2) *dx2 = x2.zeros_like();
  for (std::size_t i = 0; i < x1.size(); ++i) {
    const double d = x1[i] - x2[i];
    s += d * d;
    if (dx1) (*dx1)[i] = 2.0 * d / n;
    if (dx2) (*dx2)[i] = -2.0 * d / n;
  }
  return s / n;
}

double cross_entropy(std::span<const double> logits, int label, std::vector<double>* grad) {
  require(label >= 0 && static_cast<std::size_t>(label) < logits.size(), ErrorKind::kValidation,
          "cross_entropy: label out of range");
  const double lse = log_sum_exp(logits);
  if (grad) {
    *grad = softmax(logits);
    (*grad)[static_cast<std::size_t>(label)] -= 1.0;
  }
  return lse - logits[static_cast<std::size_t>(label)];
}

double total_loss(const LossComponents& c, const LossWeights& w) {
  w.validate();
  return w.lambda * c.supcon + w.beta * c.mse + w.gamma * c.ce;
}

}  // namespace daem
