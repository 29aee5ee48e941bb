// Copyright 2026 The DAEM Authors
// SPDX-License-Identifier: Apache-2.0

#include "daem/expert.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "daem/error.hpp"

namespace daem {

namespace {

double weight_at(std::span<const double> w, std::size_t i) { return w.empty() ? 1.0 : w[i]; }

double total_weight(std::span<const double> w, std::size_t rows) {
  if (w.empty()) return static_cast<double>(rows);
  double s = 0.0;
  for (double v : w) s += v;
  return s;
}

// Normalises each (row, head) block of `x` (rows × heads·dim) to unit length.
Tensor normalize_heads(const Tensor& x, std::size_t heads, std::vector<double>& norms) {
  const std::size_t dim = x.cols() / heads;
  Tensor y(x.shape());
  norms.assign(x.rows() * heads, 0.0);
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t h = 0; h < heads; ++h) {
      const double* src = x.data() + r * x.cols() + h * dim;
      double* dst = y.data() + r * x.cols() + h * dim;
      double ss = 0.0;
      for (std::size_t m = 0; m < dim; ++m) ss += src[m] * src[m];
      const double nrm = std::max(std::sqrt(ss), kNormFloor);
      norms[r * heads + h] = nrm;
      for (std::size_t m = 0; m < dim; ++m) dst[m] = src[m] / nrm;
    }
  return y;
}

Tensor normalize_heads_backward(const Tensor& dy, const Tensor& y, std::size_t heads,
                                const std::vector<double>& norms) {
  const std::size_t dim = y.cols() / heads;
  Tensor dx(y.shape());
  for (std::size_t r = 0; r < y.rows(); ++r)
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t off = r * y.cols() + h * dim;
      const double nrm = norms[r * heads + h];
      if (nrm <= kNormFloor) {
        for (std::size_t m = 0; m < dim; ++m) dx[off + m] = dy[off + m] / kNormFloor;
        continue;
      }
      double proj = 0.0;
      for (std::size_t m = 0; m < dim; ++m) proj += dy[off + m] * y[off + m];
      for (std::size_t m = 0; m < dim; ++m) dx[off + m] = (dy[off + m] - y[off + m] * proj) / nrm;
    }
  return dx;
}

}  // namespace

std::size_t pool_target(const ModelConfig& config, Branch b) {
  switch (b) {
    case Branch::kSmall:
      return config.pool_small;
    case Branch::kLarge:
      return config.pool_large;
    case Branch::kTme:
      return config.pool_tme;
  }
  return 0;
}

PooledTokens pool_and_concat(const std::array<Tensor, kBranchCount>& branch_outputs,
                             const ModelConfig& config) {
  const std::size_t f = branch_outputs[0].cols();
  std::vector<double> data;
  data.reserve(config.total_tokens() * f);
  PooledTokens out;
  for (Branch b : kPoolOrder) {
    const Tensor& x = branch_outputs[static_cast<std::size_t>(b)];
    require(x.rows() >= 1 && x.size() > 0, ErrorKind::kShape, "pool_and_concat: empty branch");
    require(x.cols() == f, ErrorKind::kShape, "pool_and_concat: branch widths differ");
    const PoolResult r = adaptive_max_pool(x, pool_target(config, b));
    data.insert(data.end(), r.pooled.values().begin(), r.pooled.values().end());
    for (std::size_t p : r.provenance) out.provenance.push_back({b, p});
  }
  const std::size_t rows = data.size() / f;
  out.tokens = Tensor({rows, f}, std::move(data));
  return out;
}

CompressedTokens pool_compressed(const std::array<Tensor, kBranchCount>& branch_outputs,
                                 const ModelConfig& config, bool compress) {
  const std::size_t f = branch_outputs[0].cols();
  CompressedTokens out;
  std::vector<double> rows;
  for (Branch b : kPoolOrder) {
    const Tensor& x = branch_outputs[static_cast<std::size_t>(b)];
    require(x.rows() >= 1 && x.size() > 0, ErrorKind::kShape, "pool_compressed: empty branch");
    require(x.cols() == f, ErrorKind::kShape, "pool_compressed: branch widths differ");
    const std::size_t n = x.rows();
    const std::size_t target = pool_target(config, b);
    out.input_rows[static_cast<std::size_t>(b)] = n;

    std::vector<double> norms(n);
    for (std::size_t r = 0; r < n; ++r) norms[r] = squared_norm(x.row(r));

    std::pair<std::size_t, std::size_t> prev{n + 1, n + 1};
    for (std::size_t i = 0; i < target; ++i) {
      const auto range = pool_bin(i, n, target);
      if (compress && range == prev) {
        const std::size_t row = out.weights.size() - 1;
        out.weights[row] += 1.0;
        out.position_row.push_back(row);
        out.provenance.push_back(out.provenance.back());
        continue;
      }
      prev = range;
      const auto [begin, end] = range;
      for (std::size_t c = 0; c < f; ++c) {
        std::size_t best = begin;
        for (std::size_t r = begin + 1; r < end; ++r)
          if (x(r, c) > x(best, c)) best = r;
        rows.push_back(x(best, c));
        out.argmax.push_back(best);
      }
      std::size_t prov = begin;
      for (std::size_t r = begin + 1; r < end; ++r)
        if (norms[r] > norms[prov]) prov = r;
      out.position_row.push_back(out.weights.size());
      out.provenance.push_back({b, prov});
      out.weights.push_back(1.0);
      out.row_branch.push_back(b);
    }
  }
  const std::size_t u = out.weights.size();
  out.tokens = Tensor({u, f}, std::move(rows));
  return out;
}

std::array<Tensor, kBranchCount> pool_compressed_backward(const CompressedTokens& pooled,
                                                          const Tensor& dtokens) {
  const std::size_t f = dtokens.cols();
  std::array<Tensor, kBranchCount> d;
  for (std::size_t b = 0; b < kBranchCount; ++b) d[b] = Tensor::zeros(pooled.input_rows[b], f);
  for (std::size_t r = 0; r < dtokens.rows(); ++r) {
    Tensor& target = d[static_cast<std::size_t>(pooled.row_branch[r])];
    for (std::size_t c = 0; c < f; ++c) target(pooled.argmax[r * f + c], c) += dtokens(r, c);
  }
  return d;
}

Tensor expand_tokens(const CompressedTokens& pooled, const Tensor& rows) {
  const std::size_t f = rows.cols();
  Tensor out = Tensor::zeros(pooled.position_row.size(), f);
  for (std::size_t p = 0; p < pooled.position_row.size(); ++p) {
    auto src = rows.row(pooled.position_row[p]);
    std::copy(src.begin(), src.end(), out.row(p).begin());
  }
  return out;
}

// ---------------------------------------------------------------------------

Tensor diffusion_attention_heads(const Tensor& q, const Tensor& k, const Tensor& v,
                                 std::size_t heads, std::span<const double> key_weights,
                                 std::optional<double> bias, AttentionCache* cache) {
  require(heads > 0 && q.cols() % heads == 0 && v.cols() % heads == 0, ErrorKind::kShape,
          "diffusion_attention: widths must be divisible by the head count");
  require(q.cols() == k.cols(), ErrorKind::kShape, "diffusion_attention: Q/K width mismatch");
  require(k.rows() == v.rows() && k.rows() >= 1, ErrorKind::kShape,
          "diffusion_attention: K/V row mismatch");
  require(key_weights.empty() || key_weights.size() == k.rows(), ErrorKind::kShape,
          "diffusion_attention: weight length must equal key count");

  const std::size_t n = q.rows();
  const std::size_t len = k.rows();
  const std::size_t m_dim = q.cols() / heads;
  const std::size_t d_dim = v.cols() / heads;

  AttentionCache local;
  AttentionCache& c = cache ? *cache : local;
  c.qn = normalize_heads(q, heads, c.qnorm);
  c.kn = normalize_heads(k, heads, c.knorm);
  c.ksum.assign(heads * m_dim, 0.0);
  c.kv.assign(heads * m_dim * d_dim, 0.0);
  c.vsum.assign(heads * d_dim, 0.0);

  for (std::size_t l = 0; l < len; ++l) {
    const double w = weight_at(key_weights, l);
    for (std::size_t h = 0; h < heads; ++h) {
      const double* kr = c.kn.data() + l * k.cols() + h * m_dim;
      const double* vr = v.data() + l * v.cols() + h * d_dim;
      for (std::size_t d = 0; d < d_dim; ++d) c.vsum[h * d_dim + d] += w * vr[d];
      for (std::size_t m = 0; m < m_dim; ++m) {
        const double wk = w * kr[m];
        c.ksum[h * m_dim + m] += wk;
        double* kvrow = c.kv.data() + (h * m_dim + m) * d_dim;
        for (std::size_t d = 0; d < d_dim; ++d) kvrow[d] += wk * vr[d];
      }
    }
  }

  const double b = bias.value_or(total_weight(key_weights, len));
  c.denom.assign(n * heads, 0.0);
  c.flat.assign(n * heads, 0);
  Tensor out = Tensor::zeros(n, heads * d_dim);
  std::vector<double> num(d_dim);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t h = 0; h < heads; ++h) {
      const double* qr = c.qn.data() + i * q.cols() + h * m_dim;
      double den = 0.0;
      for (std::size_t m = 0; m < m_dim; ++m) den += qr[m] * c.ksum[h * m_dim + m];
      den += b;
      const bool flat = den <= kFlatDenominator * b;
      if (flat) den = b;
      c.denom[i * heads + h] = den;
      c.flat[i * heads + h] = flat;
      std::fill(num.begin(), num.end(), 0.0);
      for (std::size_t m = 0; m < m_dim && !flat; ++m) {
        const double* kvrow = c.kv.data() + (h * m_dim + m) * d_dim;
        for (std::size_t d = 0; d < d_dim; ++d) num[d] += qr[m] * kvrow[d];
      }
      double* o = out.data() + i * out.cols() + h * d_dim;
      for (std::size_t d = 0; d < d_dim; ++d) o[d] = (num[d] + c.vsum[h * d_dim + d]) / den;
    }
  c.heads_out = out;
  return out;
}

AttentionGrads diffusion_attention_heads_backward(const Tensor& dheads, const Tensor& v,
                                                  std::size_t heads,
                                                  std::span<const double> key_weights,
                                                  const AttentionCache& c) {
  const std::size_t n = c.qn.rows();
  const std::size_t len = c.kn.rows();
  const std::size_t m_dim = c.qn.cols() / heads;
  const std::size_t d_dim = v.cols() / heads;

  Tensor dqn = Tensor::zeros(n, c.qn.cols());
  std::vector<double> dkv(heads * m_dim * d_dim, 0.0);
  std::vector<double> dksum(heads * m_dim, 0.0);
  std::vector<double> dvsum(heads * d_dim, 0.0);
  std::vector<double> dnum(d_dim);

  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t h = 0; h < heads; ++h) {
      const double den = c.denom[i * heads + h];
      const double* g = dheads.data() + i * dheads.cols() + h * d_dim;
      const double* y = c.heads_out.data() + i * dheads.cols() + h * d_dim;
      double dden = 0.0;
      for (std::size_t d = 0; d < d_dim; ++d) {
        dnum[d] = g[d] / den;
        dden -= g[d] * y[d];
      }
      dden /= den;
      if (c.flat[i * heads + h]) {
        for (std::size_t d = 0; d < d_dim; ++d) dvsum[h * d_dim + d] += dnum[d];
        continue;
      }
      const double* qr = c.qn.data() + i * c.qn.cols() + h * m_dim;
      double* dq = dqn.data() + i * dqn.cols() + h * m_dim;
      for (std::size_t d = 0; d < d_dim; ++d) dvsum[h * d_dim + d] += dnum[d];
      for (std::size_t m = 0; m < m_dim; ++m) {
        const double* kvrow = c.kv.data() + (h * m_dim + m) * d_dim;
        double* dkvrow = dkv.data() + (h * m_dim + m) * d_dim;
        double acc = dden * c.ksum[h * m_dim + m];
        for (std::size_t d = 0; d < d_dim; ++d) {
          acc += dnum[d] * kvrow[d];
          dkvrow[d] += qr[m] * dnum[d];
        }
        dq[m] = acc;
        dksum[h * m_dim + m] += dden * qr[m];
      }
    }

  Tensor dkn = Tensor::zeros(len, c.kn.cols());
  Tensor dv = Tensor::zeros(len, v.cols());
  for (std::size_t l = 0; l < len; ++l) {
    const double w = weight_at(key_weights, l);
    for (std::size_t h = 0; h < heads; ++h) {
      const double* kr = c.kn.data() + l * c.kn.cols() + h * m_dim;
      const double* vr = v.data() + l * v.cols() + h * d_dim;
      double* dk = dkn.data() + l * dkn.cols() + h * m_dim;
      double* dvr = dv.data() + l * dv.cols() + h * d_dim;
      for (std::size_t d = 0; d < d_dim; ++d) dvr[d] = dvsum[h * d_dim + d];
      for (std::size_t m = 0; m < m_dim; ++m) {
        const double* dkvrow = dkv.data() + (h * m_dim + m) * d_dim;
        double acc = dksum[h * m_dim + m];
        for (std::size_t d = 0; d < d_dim; ++d) {
          acc += dkvrow[d] * vr[d];
          dvr[d] += kr[m] * dkvrow[d];
        }
        dk[m] = w * acc;
      }
      for (std::size_t d = 0; d < d_dim; ++d) dvr[d] *= w;
    }
  }

  return {normalize_heads_backward(dqn, c.qn, heads, c.qnorm),
          normalize_heads_backward(dkn, c.kn, heads, c.knorm), std::move(dv)};
}

Tensor head_mean_broadcast(const Tensor& heads_out, std::size_t heads) {
  const std::size_t d_dim = heads_out.cols() / heads;
  Tensor out(heads_out.shape());
  const double inv = 1.0 / static_cast<double>(heads);
  for (std::size_t r = 0; r < heads_out.rows(); ++r) {
    const double* src = heads_out.data() + r * heads_out.cols();
    double* dst = out.data() + r * out.cols();
    for (std::size_t d = 0; d < d_dim; ++d) {
      double s = 0.0;
      for (std::size_t h = 0; h < heads; ++h) s += src[h * d_dim + d];
      s *= inv;
      for (std::size_t h = 0; h < heads; ++h) dst[h * d_dim + d] = s;
    }
  }
  return out;
}

Tensor head_mean_broadcast_backward(const Tensor& dout, std::size_t heads) {
  // The operator is symmetric (averaging then tiling), so it is its own adjoint.
  return head_mean_broadcast(dout, heads);
}

Tensor diffusion_attention(const Tensor& tokens, const DamLayerParams& p, std::size_t heads,
                           std::span<const double> weights, AttentionCache* cache) {
  AttentionCache local;
  AttentionCache& c = cache ? *cache : local;
  c.q = matmul_nt(tokens, p.wq);
  c.k = matmul_nt(tokens, p.wk);
  c.v = matmul_nt(tokens, p.wv);
  const Tensor y = diffusion_attention_heads(c.q, c.k, c.v, heads, weights, std::nullopt, &c);
  return head_mean_broadcast(y, heads);
}

Tensor diffusion_attention_backward(const Tensor& dout, const Tensor& tokens,
                                    const DamLayerParams& p, std::size_t heads,
                                    std::span<const double> weights, const AttentionCache& c,
                                    DamLayerParams& grads) {
  const Tensor dheads = head_mean_broadcast_backward(dout, heads);
  const AttentionGrads g = diffusion_attention_heads_backward(dheads, c.v, heads, weights, c);
  grads.wq += matmul_tn(g.dq, tokens);
  grads.wk += matmul_tn(g.dk, tokens);
  grads.wv += matmul_tn(g.dv, tokens);
  Tensor dtokens = matmul(g.dq, p.wq);
  dtokens += matmul(g.dk, p.wk);
  dtokens += matmul(g.dv, p.wv);
  return dtokens;
}

Tensor dam_layer(const Tensor& tokens, const DamLayerParams& p, std::size_t heads,
                 std::span<const double> weights, AttentionCache* cache) {
  Tensor out = diffusion_attention(tokens, p, heads, weights, cache);
  out += tokens;
  return out;
}

// ---------------------------------------------------------------------------

double energy(const Tensor& z, const Tensor& z_prev, const EnergyParams& p,
              std::span<const double> weights) {
  require(z.same_shape(z_prev), ErrorKind::kShape, "energy: shape mismatch");
  require(p.alpha >= 0.0 && p.beta >= 0.0, ErrorKind::kValidation,
          "energy: weights must be non-negative");
  const std::size_t n = z.rows();
  const std::size_t f = z.cols();
  double self = 0.0;
  double sq_z = 0.0;
  double sq_prev = 0.0;
  std::vector<double> sum_z(f, 0.0);
  std::vector<double> sum_prev(f, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double w = weight_at(weights, i);
    auto a = z.row(i);
    auto b = z_prev.row(i);
    for (std::size_t c = 0; c < f; ++c) {
      const double d = a[c] - b[c];
      self += w * d * d;
      sq_z += w * a[c] * a[c];
      sq_prev += w * b[c] * b[c];
      sum_z[c] += w * a[c];
      sum_prev[c] += w * b[c];
    }
  }
  const double total = total_weight(weights, n);
  double cross = 0.0;
  for (std::size_t c = 0; c < f; ++c) cross += sum_z[c] * sum_prev[c];
  const double pairs = total * sq_z + total * sq_prev - 2.0 * cross;
  return p.alpha * self + p.beta * pairs;
}

// ---------------------------------------------------------------------------

Tensor attention_aggregate(const Tensor& tokens, std::span<const double> weights,
                           const ExpertParams& p, AggregationCache* cache) {
  require(tokens.cols() == p.score.size(), ErrorKind::kShape,
          "attention_aggregate: score width mismatch");
  AggregationCache local;
  AggregationCache& c = cache ? *cache : local;
  const std::size_t n = tokens.rows();
  c.normalized = l2_normalize_rows(tokens, &c.norms);
  std::vector<double> logits(n);
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < n; ++t) {
    logits[t] = dot(c.normalized.row(t), p.score.values());
    mx = std::max(mx, logits[t]);
  }
  c.attention.assign(n, 0.0);
  double z = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    c.attention[t] = weight_at(weights, t) * std::exp(logits[t] - mx);
    z += c.attention[t];
  }
  for (double& a : c.attention) a /= z;

  c.pooled = Tensor::zeros(1, tokens.cols());
  for (std::size_t t = 0; t < n; ++t) {
    auto row = tokens.row(t);
    for (std::size_t f = 0; f < row.size(); ++f) c.pooled[f] += c.attention[t] * row[f];
  }
  Tensor emb = matmul_nt(c.pooled, p.agg_weight);
  add_row_bias(emb, p.agg_bias);
  return emb;
}

namespace {

Tensor attention_aggregate_backward(const Tensor& demb, const Tensor& tokens,
                                    const AggregationCache& c, const ExpertParams& p,
                                    ExpertParams& grads) {
  grads.agg_weight += matmul_tn(demb, c.pooled);
  grads.agg_bias += column_sums(demb);
  const Tensor dpooled = matmul(demb, p.agg_weight);  // 1 × hidden

  const std::size_t n = tokens.rows();
  const std::size_t f = tokens.cols();
  Tensor dtokens = Tensor::zeros(n, f);
  std::vector<double> g(n);
  double mean_g = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    g[t] = dot(dpooled.values(), tokens.row(t));
    mean_g += c.attention[t] * g[t];
  }
  Tensor dnormalized = Tensor::zeros(n, f);
  for (std::size_t t = 0; t < n; ++t) {
    const double ds = c.attention[t] * (g[t] - mean_g);
    auto zn = c.normalized.row(t);
    auto dzn = dnormalized.row(t);
    auto dz = dtokens.row(t);
    for (std::size_t k = 0; k < f; ++k) {
      grads.score[k] += ds * zn[k];
      dzn[k] = ds * p.score[k];
      dz[k] = c.attention[t] * dpooled[k];
    }
  }
  dtokens += l2_normalize_rows_backward(dnormalized, c.normalized, c.norms);
  return dtokens;
}

}  // namespace

ExpertOutput expert_forward(const std::array<Tensor, kBranchCount>& branch_outputs,
                            const ExpertParams& params, const ModelConfig& config,
                            const EnergyParams& energy_params) {
  require(params.layers.size() == config.dam_layers, ErrorKind::kShape,
          "expert_forward: layer count mismatch");
  ExpertOutput out;
  out.pooled = pool_compressed(branch_outputs, config, config.compress_tokens);
  const std::span<const double> w = out.pooled.weights;

  Tensor tokens = out.pooled.tokens;
  out.attention.resize(params.layers.size());
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    out.layer_inputs.push_back(tokens);
    Tensor next = dam_layer(tokens, params.layers[l], config.heads, w, &out.attention[l]);
    out.layer_energy.push_back(energy(next, tokens, energy_params, w));
    tokens = std::move(next);
  }
  out.final_tokens = tokens;
  out.embedding = attention_aggregate(tokens, w, params, &out.aggregation);

  out.provenance = out.pooled.provenance;
  out.position_attention.resize(out.pooled.position_row.size());
  for (std::size_t pos = 0; pos < out.position_attention.size(); ++pos) {
    const std::size_t r = out.pooled.position_row[pos];
    out.position_attention[pos] = out.aggregation.attention[r] / out.pooled.weights[r];
  }
  return out;
}

std::array<Tensor, kBranchCount> expert_backward(const ExpertOutput& forward,
                                                 const Tensor& dembedding,
                                                 const ExpertParams& params,
                                                 const ModelConfig& config,
                                                 ExpertParams& grads) {
  const std::span<const double> w = forward.pooled.weights;
  Tensor d = attention_aggregate_backward(dembedding, forward.final_tokens, forward.aggregation,
                                          params, grads);
  for (std::size_t l = params.layers.size(); l-- > 0;) {
    Tensor dattn = diffusion_attention_backward(d, forward.layer_inputs[l], params.layers[l],
                                                config.heads, w, forward.attention[l],
                                                grads.layers[l]);
    d += dattn;  // residual path
  }
  return pool_compressed_backward(forward.pooled, d);
}

}  // namespace daem
