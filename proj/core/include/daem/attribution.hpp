// Copyright 2026 The DAEM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "daem/image.hpp"
#include "daem/model.hpp"

namespace daem {

struct PatchScore {
  std::size_t index = 0;  // patch index within its scale
  GridPoint coord;
  double raw = 0.0;    // routed attention averaged over experts
  double score = 0.0;  // min-max normalised to [0, 1]
};

struct AttributionMap {
  std::string wsi_id;
  std::string scale;  // "20x" (256 px tiles) or "10x" (512 px tiles)
  int tile_size = kSmallTile;
  std::vector<PatchScore> patches;
};

struct Attribution {
  AttributionMap small;  // 20x
  AttributionMap large;  // 10x
  std::vector<double> cell_raw;    // TME branch, per cell (empty without cells)
  std::vector<double> cell_scores;
  /// Attention mass per expert and branch (indexed by Branch) before the
  /// per-branch renormalisation; each row sums to 1.
  std::array<std::array<double, kBranchCount>, kExpertCount> branch_mass{};
};

/// Attention of one expert routed through pooling provenance to the input
/// nodes of `branch`, renormalised to sum to 1 over that branch.
std::vector<double> routed_attention(const Prediction& p, std::size_t expert, Branch branch,
                                     std::size_t nodes);

/// Min-max normalisation; a zero range maps every entry to 0.5.
std::vector<double> normalize_scores(const std::vector<double>& raw);

Attribution attribute(const WsiBag& bag, const Prediction& prediction);
Attribution attribute(const WsiBag& bag, const ModelParams& params, const ModelConfig& config);

/// "20x"/"10x" (also accepts "small"/"large").
const AttributionMap& map_for_scale(const Attribution& a, const std::string& scale);

/// Alpha-blends jet-coloured tiles over `base` (or a white canvas sized to
/// the patches when absent). Patch coordinates are divided by `downsample`.
/// Throws kValidation if a tile falls outside a given base raster.
Raster render_heatmap(const AttributionMap& map, const std::optional<Raster>& base,
                      double downsample = 16.0, double alpha = 0.5);

std::string attribution_json(const AttributionMap& map, double downsample);

struct TopPatches {
  std::vector<std::size_t> high;    // patch indices, highest first
  std::vector<std::size_t> middle;  // nearest the median
  std::vector<std::size_t> low;     // lowest first
};

/// Disjoint tiers chosen in the order high, low, middle; ties by index.
/// Throws kValidation with fewer than 3n patches.
TopPatches top_patches(const AttributionMap& map, std::size_t n = 4);

}  // namespace daem
