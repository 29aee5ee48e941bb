// Copyright 2026 The DAEM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "daem/bag.hpp"
#include "daem/tensor.hpp"

namespace daem {

inline constexpr std::size_t kDefaultNeighbors = 9;
/// TME node features: one-hot type (7), probability, log nucleus area.
inline constexpr std::size_t kTmeFeatureDim = kCellTypeCount + 2;

enum class GraphScale { kSmall, kLarge, kTme };

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

struct Edge {
  std::size_t src = 0;
  std::size_t dst = 0;

  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

/// Directed k-NN graph with node features. Self terms are not stored as edges;
/// aggregation adds them.
struct SpatialGraph {
  GraphScale scale = GraphScale::kSmall;
  Tensor node_features;  // N × F
  std::vector<Point2> coords;
  std::vector<Edge> edges;  // grouped by src, neighbours nearest first

  std::size_t node_count() const { return coords.size(); }
};

/// For every node, edges to its min(k, N-1) nearest other nodes by Euclidean
/// distance; equal distances resolve to the lower index. Exact; larger
/// inputs are bucketed on a uniform grid.
std::vector<Edge> build_knn_graph(std::span<const Point2> coords,
                                  std::size_t k = kDefaultNeighbors);

/// k-NN computed separately within each cell type, so no edge joins cells of
/// different types.
SpatialGraph build_tme_graph(std::span<const CellRecord> cells,
                             std::size_t k = kDefaultNeighbors);

/// Patch graph for one tile scale; coordinates are tile centres.
SpatialGraph build_patch_graph(const PatchSet& patches, GraphScale scale,
                               std::size_t k = kDefaultNeighbors);

/// The three graphs consumed by the model.
struct BagGraphs {
  SpatialGraph small;
  SpatialGraph large;
  SpatialGraph tme;
};

/// A bag without cells gets a single all-zero TME node so the branch stays
/// defined.
BagGraphs build_bag_graphs(const WsiBag& bag, std::size_t k = kDefaultNeighbors);

}  // namespace daem
