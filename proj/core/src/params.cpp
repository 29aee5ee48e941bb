// Copyright 2026 The DAEM Authors
// SPDX-License-Identifier: Apache-2.0

#include "daem/params.hpp"

#include <cmath>

#include "daem/error.hpp"

namespace daem {

void ModelConfig::validate() const {
  auto check = [](bool ok, const char* what) { require(ok, ErrorKind::kValidation, what); };
  check(feature_dim > 0 && tme_feature_dim > 0 && hidden > 0, "model: dimensions must be positive");
  check(heads > 0 && head_dim > 0 && heads * head_dim == hidden,
        "model: heads * head_dim must equal hidden");
  check(dam_layers >= 1, "model: at least one DAM layer");
  check(pool_large > 0 && pool_small > 0 && pool_tme > 0, "model: pool targets must be positive");
  check(expert_dim > 0 && head_hidden > 0 && classes >= 2, "model: head dimensions");
  check(leaky_slope >= 0.0 && leaky_slope < 1.0, "model: leaky slope must lie in [0, 1)");
  check(ln_eps > 0.0, "model: LayerNorm eps must be positive");
  check(dropout >= 0.0 && dropout < 1.0, "model: dropout must lie in [0, 1)");
}

ModelParams ModelParams::zeros_like() const {
  ModelParams z = *this;
  z.visit([](const std::string&, Tensor& t) { t.fill(0.0); });
  return z;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  visit([&](const std::string&, const Tensor& t) { n += t.size(); });
  return n;
}

ModelParams init_params(const ModelConfig& c, std::uint64_t seed) {
  c.validate();
  ModelParams p;
  const std::size_t in_dims[kBranchCount] = {c.feature_dim, c.feature_dim, c.tme_feature_dim};
  for (std::size_t b = 0; b < kBranchCount; ++b)
    for (std::size_t s = 0; s < kMsgcStages; ++s) {
      SageParams& sp = p.msgc.branches[b][s];
      sp.weight = Tensor::zeros(c.hidden, s == 0 ? in_dims[b] : c.hidden);
      sp.bias = Tensor::vector(c.hidden);
      sp.ln_gain = Tensor::filled({c.hidden}, 1.0);
      sp.ln_shift = Tensor::vector(c.hidden);
    }
  for (auto& ex : p.experts) {
    ex.layers.resize(c.dam_layers);
    for (auto& l : ex.layers) {
      l.wq = Tensor::zeros(c.hidden, c.hidden);
      l.wk = Tensor::zeros(c.hidden, c.hidden);
      l.wv = Tensor::zeros(c.hidden, c.hidden);
    }
    ex.score = Tensor::vector(c.hidden);
    ex.agg_weight = Tensor::zeros(c.expert_dim, c.hidden);
    ex.agg_bias = Tensor::vector(c.expert_dim);
  }
  const std::size_t cat = 2 * c.expert_dim;
  p.head.b1 = Tensor::vector(cat);
  p.head.ln_gain = Tensor::filled({cat}, 1.0);
  p.head.ln_shift = Tensor::vector(cat);
  p.head.w1 = Tensor::zeros(c.head_hidden, cat);
  p.head.w2 = Tensor::zeros(c.classes, c.head_hidden);
  p.head.b2 = Tensor::vector(c.classes);

  SeededRng root(seed);
  std::uint64_t stream = 0;
  p.visit([&](const std::string& name, Tensor& t) {
    SeededRng rng = root.fork(stream++);
    const bool is_weight = name.ends_with("weight") || name.ends_with(".wq") ||
                           name.ends_with(".wk") || name.ends_with(".wv") ||
                           name.ends_with(".w1") || name.ends_with(".w2");
    if (name.ends_with("score")) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(t.size()));
      for (double& v : t.values()) v = rng.uniform(-bound, bound);
    } else if (is_weight) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(t.cols()));
      for (double& v : t.values()) v = rng.uniform(-bound, bound);
    }
  });
  return p;
}

}  // namespace daem
