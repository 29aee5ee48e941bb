// Copyright 2026 The DAEM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "daem/bag.hpp"
#include "daem/graph.hpp"

namespace daem {

struct TmeOptions {
  double linkage_um = 30.0;          // erythrocyte cluster linkage radius
  std::size_t min_cluster_cells = 5;
  bool area_weighted = false;  // STR/ITR/SVR from nucleus-area sums instead of counts
};

struct TmeMetrics {
  std::array<std::size_t, kCellTypeCount> counts{};
  std::array<double, kCellTypeCount> fractions{};  // all 0 for an empty map
  std::optional<double> str;   // stroma / tumor
  std::optional<double> itr;   // immune / tumor
  double mvd = 0.0;            // vessel-proxy clusters per mm²
  std::size_t vessel_clusters = 0;
  std::optional<double> svr;   // stroma / vessel clusters
  double tumor_density = 0.0;  // cells per mm²
  double immune_density = 0.0;
  double stroma_density = 0.0;
  std::optional<double> dead_cell_fraction;          // dead / (tumor + dead)
  std::optional<double> macrophage_tumor_ratio;
  double area_mm2 = 0.0;
};

/// Clusters of erythrocytes (single linkage within `radius_px`) with at least
/// `min_size` members, each as ascending cell indices, ordered by first index.
std::vector<std::vector<std::size_t>> erythrocyte_clusters(std::span<const CellRecord> cells,
                                                           double radius_px,
                                                           std::size_t min_size);

/// Throws kValidation unless area > 0 and mpp > 0.
TmeMetrics compute_tme_metrics(std::span<const CellRecord> cells, double tissue_area_px2,
                               double mpp, const TmeOptions& options = {});

/// Tissue area of a bag: number of small tiles × tile².
double tissue_area_px2(const WsiBag& bag);

/// The 16 named indicators in table order; undefined ratios are empty.
std::vector<std::pair<std::string, std::optional<double>>> tme_indicators(const TmeMetrics& m);

/// CSV with header `wsi_id,patient_id,section,label,subtype,<indicators...>`;
/// undefined values are written as `NA`.
std::string tme_csv_header();
std::string tme_csv_row(const WsiBag& bag, const TmeMetrics& m);

// ---------------------------------------------------------------------------
// Tumor region proposal.

struct TumorRegionOptions {
  double grid_px = 100.0;
  /// Strong-bin threshold; defaults to the 75th percentile of non-empty bins.
  std::optional<double> min_density;
};

struct TumorRegion {
  double grid_px = 100.0;
  std::int64_t origin_col = 0;  // grid index of occupancy column 0
  std::int64_t origin_row = 0;
  std::size_t cols = 0;
  std::size_t rows = 0;
  std::vector<std::uint8_t> occupancy;  // rows × cols, main region only (holes filled)
  std::vector<std::vector<Point2>> boundaries;  // closed loops, first vertex not repeated
  std::vector<std::size_t> candidates;          // tumor cells outside the region
  std::size_t tumor_cells = 0;
  std::size_t tumor_cells_inside = 0;
  double strong_threshold = 0.0;
  double grow_threshold = 0.0;

  bool empty() const { return tumor_cells_inside == 0; }
  bool contains(double x, double y) const;
};

/// Bins tumor cells on a square grid, keeps bins reachable from dense bins,
/// picks the connected component with most tumor cells and fills its holes.
TumorRegion propose_tumor_region(std::span<const CellRecord> cells,
                                 const TumorRegionOptions& options = {});

// ---------------------------------------------------------------------------
// Geometry.

struct Distance {
  double px = 0.0;
  double um = 0.0;
};

/// Perpendicular distance from p to the infinite line through a and b.
/// Throws kValidation when a == b or mpp ≤ 0.
Distance point_to_line_distance(Point2 p, Point2 a, Point2 b, double mpp);

}  // namespace daem
