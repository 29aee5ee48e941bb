// Copyright 2026 The DAEM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "daem/ops.hpp"
#include "daem/params.hpp"

namespace daem {

// ---------------------------------------------------------------------------
// Pooling to fixed token counts.

/// Where a pooled token came from: the MSGC branch and the input node with the
/// largest feature norm inside its pooling bin.
struct TokenOrigin {
  Branch branch = Branch::kSmall;
  std::size_t index = 0;

  friend bool operator==(const TokenOrigin&, const TokenOrigin&) = default;
};

/// Concatenation order of the pooled branches.
inline constexpr std::array<Branch, kBranchCount> kPoolOrder = {Branch::kLarge, Branch::kSmall,
                                                                 Branch::kTme};

std::size_t pool_target(const ModelConfig& config, Branch b);

struct PooledTokens {
  Tensor tokens;  // total_tokens × hidden, in kPoolOrder
  std::vector<TokenOrigin> provenance;
};

/// Adaptive max pooling of each branch to its target length, concatenated as
/// large (10x), small (20x), TME. `branch_outputs` is indexed by Branch.
PooledTokens pool_and_concat(const std::array<Tensor, kBranchCount>& branch_outputs,
                             const ModelConfig& config);

/// Pooled tokens stored once per distinct pooling bin.
///
/// When a branch has fewer nodes than its target, several consecutive bins
/// cover the same input range and pool to identical tokens. Every later
/// operation is either row-wise or a sum over tokens, so keeping one row per
/// distinct bin with its multiplicity as a weight computes the same function
/// as the expanded sequence.
struct CompressedTokens {
  Tensor tokens;                      // U × hidden
  std::vector<double> weights;        // multiplicity per row, sums to total_tokens
  std::vector<Branch> row_branch;     // U
  std::vector<std::size_t> argmax;    // U × hidden, input row within the branch
  std::vector<std::size_t> position_row;    // total_tokens -> row
  std::vector<TokenOrigin> provenance;      // total_tokens
  std::array<std::size_t, kBranchCount> input_rows{};  // indexed by Branch
};

/// With `compress` false every pooled position gets its own row (weight 1).
CompressedTokens pool_compressed(const std::array<Tensor, kBranchCount>& branch_outputs,
                                 const ModelConfig& config, bool compress);

/// Routes row gradients back to the branch inputs (indexed by Branch).
std::array<Tensor, kBranchCount> pool_compressed_backward(const CompressedTokens& pooled,
                                                          const Tensor& dtokens);

/// Expands rows back to the full pooled sequence.
Tensor expand_tokens(const CompressedTokens& pooled, const Tensor& rows);

// ---------------------------------------------------------------------------
// Linear diffusion attention.

struct AttentionCache {
  Tensor q, k, v;     // projections (only filled by diffusion_attention)
  Tensor qn, kn;      // per-head L2-normalised Q and K
  std::vector<double> qnorm, knorm;  // rows × heads
  std::vector<double> kv;            // H × M × D
  std::vector<double> ksum;          // H × M
  std::vector<double> vsum;          // H × D
  std::vector<double> denom;         // N × H
  std::vector<char> flat;            // N × H, denominator collapsed to ~0
  Tensor heads_out;                  // N × (H·D), per-head outputs
};

/// Rows whose denominator collapses (every key antipodal to the query, only
/// reachable when M = 1 or with a single distinct key) fall back to the
/// weighted mean of V, the limit of uniform similarity.
inline constexpr double kFlatDenominator = 1e-12;

/// Per-head streaming form. q: N × (H·M), k: L × (H·M), v: L × (H·D);
/// `key_weights` (length L, empty = all ones) are key multiplicities.
///   num[n,h,:] = Σ_m q̃[n,h,m]·KV[h,m,:] + Σ_l w_l V[l,h,:],
///   KV[h,m,d] = Σ_l w_l k̃[l,h,m] V[l,h,d]
///   denom[n,h] = Σ_m q̃[n,h,m]·Σ_l w_l k̃[l,h,m] + bias
/// bias defaults to the token count Σ_l w_l, which makes each output row the
/// convex combination Σ_l w_l (q̃·k̃_l + 1) V_l / Σ_l w_l (q̃·k̃_l + 1).
/// Returns N × (H·D) with head h in columns [h·D, (h+1)·D).
Tensor diffusion_attention_heads(const Tensor& q, const Tensor& k, const Tensor& v,
                                 std::size_t heads, std::span<const double> key_weights = {},
                                 std::optional<double> bias = std::nullopt,
                                 AttentionCache* cache = nullptr);

struct AttentionGrads {
  Tensor dq, dk, dv;
};

AttentionGrads diffusion_attention_heads_backward(const Tensor& dheads, const Tensor& v,
                                                  std::size_t heads,
                                                  std::span<const double> key_weights,
                                                  const AttentionCache& cache);

/// Mean over heads (N × D) broadcast back to every head slot (N × H·D).
Tensor head_mean_broadcast(const Tensor& heads_out, std::size_t heads);
Tensor head_mean_broadcast_backward(const Tensor& dout, std::size_t heads);

/// Projects tokens to Q, K, V (no bias) and applies the streaming attention
/// with head averaging. `weights` are token multiplicities (empty = ones).
Tensor diffusion_attention(const Tensor& tokens, const DamLayerParams& p, std::size_t heads,
                           std::span<const double> weights = {},
                           AttentionCache* cache = nullptr);

/// Returns dtokens and accumulates weight gradients.
Tensor diffusion_attention_backward(const Tensor& dout, const Tensor& tokens,
                                    const DamLayerParams& p, std::size_t heads,
                                    std::span<const double> weights, const AttentionCache& cache,
                                    DamLayerParams& grads);

/// Explicit-Euler residual step: attention(tokens) + tokens.
Tensor dam_layer(const Tensor& tokens, const DamLayerParams& p, std::size_t heads,
                 std::span<const double> weights = {}, AttentionCache* cache = nullptr);

// ---------------------------------------------------------------------------
// Energy diagnostic.

struct EnergyParams {
  double alpha = 1.0;  // self-consistency weight
  double beta = 1.0;   // all-pairs weight
};

/// α Σ_i w_i ‖z_i − z'_i‖² + β Σ_{i,j} w_i w_j ‖z_i − z'_j‖², the pair sum in
/// closed form. Diagnostic only.
double energy(const Tensor& z, const Tensor& z_prev, const EnergyParams& p,
              std::span<const double> weights = {});

// ---------------------------------------------------------------------------
// Attention-weighted aggregation and the full expert.

struct AggregationCache {
  Tensor normalized;            // tokens / ‖tokens‖
  std::vector<double> norms;
  std::vector<double> attention;  // per row, includes multiplicity; sums to 1
  Tensor pooled;                  // 1 × hidden
};

/// softmax over tokens of score·(z_t/‖z_t‖), then A·Σ a_t z_t + b.
Tensor attention_aggregate(const Tensor& tokens, std::span<const double> weights,
                           const ExpertParams& p, AggregationCache* cache = nullptr);

struct ExpertOutput {
  Tensor embedding;                        // 1 × expert_dim
  std::vector<double> position_attention;  // total_tokens, sums to 1
  std::vector<TokenOrigin> provenance;     // total_tokens
  std::vector<double> layer_energy;        // one per DAM layer

  CompressedTokens pooled;
  std::vector<Tensor> layer_inputs;
  std::vector<AttentionCache> attention;
  Tensor final_tokens;
  AggregationCache aggregation;
};

ExpertOutput expert_forward(const std::array<Tensor, kBranchCount>& branch_outputs,
                            const ExpertParams& params, const ModelConfig& config,
                            const EnergyParams& energy_params = {});

/// Returns gradients w.r.t. the branch inputs (indexed by Branch) and
/// accumulates parameter gradients.
std::array<Tensor, kBranchCount> expert_backward(const ExpertOutput& forward,
                                                 const Tensor& dembedding,
                                                 const ExpertParams& params,
                                                 const ModelConfig& config,
                                                 ExpertParams& grads);

}  // namespace daem
