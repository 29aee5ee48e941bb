// Copyright 2026 The DAEM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "daem/rng.hpp"
#include "daem/tensor.hpp"

namespace daem {

/// Architecture hyperparameters. Defaults are the full-size model; tests use
/// narrower configurations of the same architecture.
struct ModelConfig {
  std::size_t feature_dim = 768;   // patch encoder output
  std::size_t tme_feature_dim = 9;
  std::size_t hidden = 256;        // MSGC width and DAM token width
  std::size_t heads = 8;
  std::size_t head_dim = 32;       // M = D
  std::size_t dam_layers = 2;
  std::size_t pool_large = 512;    // 10x branch
  std::size_t pool_small = 2048;   // 20x branch
  std::size_t pool_tme = 2048;
  std::size_t expert_dim = 128;
  std::size_t head_hidden = 64;
  std::size_t classes = 2;
  std::size_t neighbors = 9;
  double leaky_slope = 0.01;
  double ln_eps = 1e-5;
  double dropout = 0.2;
  /// Run experts on unique pooled bins with multiplicities instead of the
  /// expanded token sequence. Same function, fewer rows when bags are small.
  bool compress_tokens = true;

  /// Throws kValidation on inconsistent dimensions.
  void validate() const;
  std::size_t total_tokens() const { return pool_large + pool_small + pool_tme; }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline constexpr std::size_t kMsgcStages = 2;
inline constexpr std::size_t kBranchCount = 3;
inline constexpr std::size_t kExpertCount = 2;

/// MSGC branch order used for parameters and outputs.
enum class Branch : std::size_t { kSmall = 0, kLarge = 1, kTme = 2 };

struct SageParams {
  Tensor weight;    // d_out × d_in
  Tensor bias;      // d_out
  Tensor ln_gain;   // d_out
  Tensor ln_shift;  // d_out
};

struct MsgcParams {
  std::array<std::array<SageParams, kMsgcStages>, kBranchCount> branches;
};

struct DamLayerParams {
  Tensor wq;  // hidden × hidden, output laid out head-major (h·M + m)
  Tensor wk;
  Tensor wv;
};

struct ExpertParams {
  std::vector<DamLayerParams> layers;
  Tensor score;       // hidden; token scoring direction for aggregation
  Tensor agg_weight;  // expert_dim × hidden
  Tensor agg_bias;    // expert_dim
};

struct HeadParams {
  Tensor b1;        // 2·expert_dim, added before LayerNorm
  Tensor ln_gain;   // 2·expert_dim
  Tensor ln_shift;  // 2·expert_dim
  Tensor w1;        // head_hidden × 2·expert_dim
  Tensor w2;        // classes × head_hidden
  Tensor b2;        // classes
};

struct ModelParams {
  MsgcParams msgc;
  std::array<ExpertParams, kExpertCount> experts;
  HeadParams head;

  /// Calls f(name, tensor) for every parameter in a fixed order.
  template <typename F>
  void visit(F&& f) {
    visit_impl(*this, f);
  }
  template <typename F>
  void visit(F&& f) const {
    visit_impl(*this, f);
  }

  ModelParams zeros_like() const;
  std::size_t parameter_count() const;

 private:
  template <typename Self, typename F>
  static void visit_impl(Self& self, F& f) {
    static constexpr const char* kBranchNames[] = {"small", "large", "tme"};
    for (std::size_t b = 0; b < kBranchCount; ++b)
      for (std::size_t s = 0; s < kMsgcStages; ++s) {
        auto& p = self.msgc.branches[b][s];
        const std::string base =
            std::string("msgc.") + kBranchNames[b] + "." + std::to_string(s) + ".";
        f(base + "weight", p.weight);
        f(base + "bias", p.bias);
        f(base + "ln_gain", p.ln_gain);
        f(base + "ln_shift", p.ln_shift);
      }
    for (std::size_t e = 0; e < kExpertCount; ++e) {
      auto& ex = self.experts[e];
      const std::string base = "expert" + std::to_string(e) + ".";
      for (std::size_t l = 0; l < ex.layers.size(); ++l) {
        const std::string lb = base + "layer" + std::to_string(l) + ".";
        f(lb + "wq", ex.layers[l].wq);
        f(lb + "wk", ex.layers[l].wk);
        f(lb + "wv", ex.layers[l].wv);
      }
      f(base + "score", ex.score);
      f(base + "agg_weight", ex.agg_weight);
      f(base + "agg_bias", ex.agg_bias);
    }
    f("head.b1", self.head.b1);
    f("head.ln_gain", self.head.ln_gain);
    f("head.ln_shift", self.head.ln_shift);
    f("head.w1", self.head.w1);
    f("head.w2", self.head.w2);
    f("head.b2", self.head.b2);
  }
};

/// Weights ~ U(-1/√fan_in, 1/√fan_in), biases 0, LayerNorm gain 1 / shift 0.
/// Each tensor draws from its own stream forked by visit order, so adding a
/// parameter does not perturb the others.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

}  // namespace daem
