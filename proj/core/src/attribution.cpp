// Copyright 2026 The DAEM Authors
// SPDX-License-Identifier: Apache-2.0

#include "daem/attribution.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "daem/error.hpp"

namespace daem {

std::vector<double> routed_attention(const Prediction& p, std::size_t expert, Branch branch,
                                     std::size_t nodes) {
  require(expert < kExpertCount, ErrorKind::kValidation, "expert index out of range");
  const auto& att = p.position_attention[expert];
  const auto& prov = p.provenance[expert];
  require(!prov.empty() && prov.size() == att.size(), ErrorKind::kValidation,
          "attribution needs per-position provenance");
  std::vector<double> out(nodes, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < att.size(); ++i) {
    if (prov[i].branch != branch) continue;
    require(prov[i].index < nodes, ErrorKind::kValidation,
            "provenance index " + std::to_string(prov[i].index) + " outside " +
                std::to_string(nodes) + " nodes");
    out[prov[i].index] += att[i];
    total += att[i];
  }
  if (total > 0.0)
    for (double& v : out) v /= total;
  return out;
}

std::vector<double> normalize_scores(const std::vector<double>& raw) {
  if (raw.empty()) return {};
  const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
  const double range = *hi - *lo;
  std::vector<double> out(raw.size(), 0.5);
  if (range > 0.0)
    for (std::size_t i = 0; i < raw.size(); ++i) out[i] = (raw[i] - *lo) / range;
  return out;
}

namespace {

std::vector<double> expert_average(const Prediction& p, Branch b, std::size_t nodes) {
  std::vector<double> avg(nodes, 0.0);
  for (std::size_t e = 0; e < kExpertCount; ++e) {
    const std::vector<double> r = routed_attention(p, e, b, nodes);
    for (std::size_t i = 0; i < nodes; ++i) avg[i] += r[i] / static_cast<double>(kExpertCount);
  }
  return avg;
}

AttributionMap make_map(const WsiBag& bag, const PatchSet& patches, const std::string& scale,
                        const std::vector<double>& raw) {
  AttributionMap m;
  m.wsi_id = bag.wsi_id;
  m.scale = scale;
  m.tile_size = patches.tile_size;
  const std::vector<double> scores = normalize_scores(raw);
  for (std::size_t i = 0; i < patches.count(); ++i)
    m.patches.push_back({i, patches.coords[i], raw[i], scores[i]});
  return m;
}

}  // namespace

Attribution attribute(const WsiBag& bag, const Prediction& prediction) {
  Attribution a;
  for (std::size_t e = 0; e < kExpertCount; ++e) {
    const auto& att = prediction.position_attention[e];
    const auto& prov = prediction.provenance[e];
    require(prov.size() == att.size() && !prov.empty(), ErrorKind::kValidation,
            "attribution needs per-position provenance");
    for (std::size_t i = 0; i < att.size(); ++i)
      a.branch_mass[e][static_cast<std::size_t>(prov[i].branch)] += att[i];
  }
  a.small = make_map(bag, bag.small, "20x",
                     expert_average(prediction, Branch::kSmall, bag.small.count()));
  a.large = make_map(bag, bag.large, "10x",
                     expert_average(prediction, Branch::kLarge, bag.large.count()));
  if (!bag.cells.empty()) {
    a.cell_raw = expert_average(prediction, Branch::kTme, bag.cells.size());
    a.cell_scores = normalize_scores(a.cell_raw);
  }
  return a;
}

Attribution attribute(const WsiBag& bag, const ModelParams& params, const ModelConfig& config) {
  const BagGraphs graphs = build_bag_graphs(bag, config.neighbors);
  return attribute(bag, predict(graphs, params, config));
}

const AttributionMap& map_for_scale(const Attribution& a, const std::string& scale) {
  if (scale == "20x" || scale == "small") return a.small;
  if (scale == "10x" || scale == "large") return a.large;
  fail(ErrorKind::kValidation, "unknown heatmap scale '" + scale + "' (expected 10x or 20x)");
}

Raster render_heatmap(const AttributionMap& map, const std::optional<Raster>& base,
                      double downsample, double alpha) {
  require(downsample > 0.0, ErrorKind::kValidation, "downsample must be > 0");
  require(alpha >= 0.0 && alpha <= 1.0, ErrorKind::kValidation, "alpha must lie in [0, 1]");
  auto span_of = [&](std::int64_t origin) {
    const auto lo = static_cast<std::int64_t>(std::floor(static_cast<double>(origin) / downsample));
    const auto hi = static_cast<std::int64_t>(
        std::ceil(static_cast<double>(origin + map.tile_size) / downsample));
    return std::make_pair(lo, std::max(hi, lo + 1));
  };
  Raster canvas;
  if (base) {
    canvas = *base;
  } else {
    std::int64_t w = 1, h = 1;
    for (const PatchScore& p : map.patches) {
      require(p.coord.x >= 0 && p.coord.y >= 0, ErrorKind::kValidation,
              "patch coordinate outside canvas");
      w = std::max(w, span_of(p.coord.x).second);
      h = std::max(h, span_of(p.coord.y).second);
    }
    canvas = Raster(static_cast<std::size_t>(w), static_cast<std::size_t>(h));
  }
  const Raster original = canvas;
  for (const PatchScore& p : map.patches) {
    const auto [x0, x1] = span_of(p.coord.x);
    const auto [y0, y1] = span_of(p.coord.y);
    require(x0 >= 0 && y0 >= 0 && x1 <= static_cast<std::int64_t>(canvas.width) &&
                y1 <= static_cast<std::int64_t>(canvas.height),
            ErrorKind::kValidation,
            "patch " + std::to_string(p.index) + " at (" + std::to_string(p.coord.x) + ", " +
                std::to_string(p.coord.y) + ") falls outside the canvas");
    const Rgb colour = jet(p.score);
    for (auto y = y0; y < y1; ++y)
      for (auto x = x0; x < x1; ++x) {
        const auto ux = static_cast<std::size_t>(x);
        const auto uy = static_cast<std::size_t>(y);
        canvas.set(ux, uy, blend(original.at(ux, uy), colour, alpha));
      }
  }
  return canvas;
}

std::string attribution_json(const AttributionMap& map, double downsample) {
  nlohmann::json patches = nlohmann::json::array();
  for (const PatchScore& p : map.patches)
    patches.push_back(
        {{"index", p.index}, {"x", p.coord.x}, {"y", p.coord.y}, {"raw", p.raw}, {"score", p.score}});
  return nlohmann::json{{"wsi_id", map.wsi_id},
                        {"scale", map.scale},
                        {"tile_size", map.tile_size},
                        {"downsample", downsample},
                        {"patches", patches}}
      .dump();
}

TopPatches top_patches(const AttributionMap& map, std::size_t n) {
  const std::size_t count = map.patches.size();
  require(n >= 1 && count >= 3 * n, ErrorKind::kValidation,
          "top_patches needs at least " + std::to_string(3 * n) + " patches, have " +
              std::to_string(count));
  std::vector<double> s(count);
  for (std::size_t i = 0; i < count; ++i) s[i] = map.patches[i].score;
  std::vector<double> sorted = s;
  std::sort(sorted.begin(), sorted.end());
  const double median =
      count % 2 ? sorted[count / 2] : (sorted[count / 2 - 1] + sorted[count / 2]) / 2.0;

  std::vector<bool> taken(count, false);
  auto pick = [&](auto less) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < count; ++i)
      if (!taken[i]) idx.push_back(i);
    std::stable_sort(idx.begin(), idx.end(), less);
    idx.resize(n);
    for (std::size_t i : idx) taken[i] = true;
    return idx;
  };
  TopPatches t;
  t.high = pick([&](std::size_t a, std::size_t b) { return s[a] > s[b]; });
  t.low = pick([&](std::size_t a, std::size_t b) { return s[a] < s[b]; });
  t.middle = pick([&](std::size_t a, std::size_t b) {
    return std::fabs(s[a] - median) < std::fabs(s[b] - median);
  });
  for (auto* tier : {&t.high, &t.middle, &t.low})
    for (std::size_t& i : *tier) i = map.patches[i].index;
  return t;
}

}  // namespace daem
