// Copyright 2026 The DAEM Authors
// SPDX-License-Identifier: Apache-2.0

#include "daem/graph.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace daem {

namespace {

using Candidate = std::pair<double, std::size_t>;  // (squared distance, index)

void emit_nearest(std::vector<Candidate>& cand, std::size_t i, std::size_t kk,
                  std::vector<Edge>& edges) {
  std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(kk), cand.end());
  for (std::size_t t = 0; t < kk; ++t) edges.push_back({i, cand[t].second});
}

constexpr std::size_t kGridThreshold = 128;

}  // namespace

std::vector<Edge> build_knn_graph(std::span<const Point2> coords, std::size_t k) {
  const std::size_t n = coords.size();
  std::vector<Edge> edges;
  if (n <= 1 || k == 0) return edges;
  const std::size_t kk = std::min(k, n - 1);
  edges.reserve(n * kk);
  std::vector<Candidate> cand;
  cand.reserve(n - 1);

  double x0 = coords[0].x, x1 = x0, y0 = coords[0].y, y1 = y0;
  for (const Point2& p : coords) {
    x0 = std::min(x0, p.x), x1 = std::max(x1, p.x);
    y0 = std::min(y0, p.y), y1 = std::max(y1, p.y);
  }
  const double extent = std::max(x1 - x0, y1 - y0);

  if (n < kGridThreshold || !(extent > 0.0)) {
    for (std::size_t i = 0; i < n; ++i) {
      cand.clear();
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        const double dx = coords[j].x - coords[i].x;
        const double dy = coords[j].y - coords[i].y;
        cand.emplace_back(dx * dx + dy * dy, j);
      }
      emit_nearest(cand, i, kk, edges);
    }
    return edges;
  }

  // Uniform bucket grid with about two points per occupied cell on a square
  // layout. Rings of cells are scanned outward until no unvisited point can
  // beat the current k-th distance; the selection itself is the same
  // (distance, index) ordering as the exhaustive path.
  const auto side = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n) / 2.0)));
  const double cell = extent / static_cast<double>(side) * (1.0 + 1e-12);
  const auto cols = std::min(side, static_cast<std::size_t>((x1 - x0) / cell) + 1);
  const auto rows = std::min(side, static_cast<std::size_t>((y1 - y0) / cell) + 1);
  auto cell_of = [&](const Point2& p) {
    const auto cx = std::min(cols - 1, static_cast<std::size_t>((p.x - x0) / cell));
    const auto cy = std::min(rows - 1, static_cast<std::size_t>((p.y - y0) / cell));
    return std::pair<std::size_t, std::size_t>{cx, cy};
  };
  std::vector<std::size_t> start(cols * rows + 1, 0), order(n);
  for (const Point2& p : coords) {
    const auto [cx, cy] = cell_of(p);
    ++start[cy * cols + cx + 1];
  }
  for (std::size_t c = 0; c < cols * rows; ++c) start[c + 1] += start[c];
  {
    std::vector<std::size_t> fill(start.begin(), start.end() - 1);
    for (std::size_t j = 0; j < n; ++j) {
      const auto [cx, cy] = cell_of(coords[j]);
      order[fill[cy * cols + cx]++] = j;
    }
  }

  const std::size_t max_ring = std::max(cols, rows);
  for (std::size_t i = 0; i < n; ++i) {
    cand.clear();
    const auto [qx, qy] = cell_of(coords[i]);
    auto visit = [&](std::size_t cx, std::size_t cy) {
      const std::size_t c = cy * cols + cx;
      for (std::size_t t = start[c]; t < start[c + 1]; ++t) {
        const std::size_t j = order[t];
        if (j == i) continue;
        const double dx = coords[j].x - coords[i].x;
        const double dy = coords[j].y - coords[i].y;
        cand.emplace_back(dx * dx + dy * dy, j);
      }
    };
    for (std::size_t r = 0; r <= max_ring; ++r) {
      const auto lo_x = static_cast<std::ptrdiff_t>(qx) - static_cast<std::ptrdiff_t>(r);
      const auto hi_x = static_cast<std::ptrdiff_t>(qx + r);
      const auto lo_y = static_cast<std::ptrdiff_t>(qy) - static_cast<std::ptrdiff_t>(r);
      const auto hi_y = static_cast<std::ptrdiff_t>(qy + r);
      for (std::ptrdiff_t cy = lo_y; cy <= hi_y; ++cy) {
        if (cy < 0 || cy >= static_cast<std::ptrdiff_t>(rows)) continue;
        const bool edge_row = cy == lo_y || cy == hi_y;
        const std::ptrdiff_t step = edge_row ? 1 : hi_x - lo_x;
        for (std::ptrdiff_t cx = lo_x; cx <= hi_x; cx += std::max<std::ptrdiff_t>(step, 1)) {
          if (cx < 0 || cx >= static_cast<std::ptrdiff_t>(cols)) continue;
          visit(static_cast<std::size_t>(cx), static_cast<std::size_t>(cy));
        }
      }
      if (cand.size() < kk) continue;
      // Unvisited points sit at least r cells away; one cell of slack on each
      // side absorbs bucket assignment rounding.
      if (r < 2) continue;
      const double bound = static_cast<double>(r - 2) * cell;
      std::nth_element(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(kk - 1), cand.end());
      if (bound * bound > cand[kk - 1].first) break;
    }
    emit_nearest(cand, i, kk, edges);
  }
  return edges;
}

SpatialGraph build_tme_graph(std::span<const CellRecord> cells, std::size_t k) {
  SpatialGraph g;
  g.scale = GraphScale::kTme;
  g.node_features = Tensor::zeros(cells.size(), kTmeFeatureDim);
  g.coords.reserve(cells.size());
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const CellRecord& c = cells[i];
    g.coords.push_back({c.x, c.y});
    g.node_features(i, static_cast<std::size_t>(c.type)) = 1.0;
    g.node_features(i, kCellTypeCount) = c.prob;
    g.node_features(i, kCellTypeCount + 1) = std::log(c.nucleus_area);
  }

  for (CellType type : kAllCellTypes) {
    std::vector<std::size_t> members;
    std::vector<Point2> pts;
    for (std::size_t i = 0; i < cells.size(); ++i)
      if (cells[i].type == type) {
        members.push_back(i);
        pts.push_back(g.coords[i]);
      }
    for (const Edge& e : build_knn_graph(pts, k))
      g.edges.push_back({members[e.src], members[e.dst]});
  }
  // Keep edges grouped by source node like the patch graphs.
  std::stable_sort(g.edges.begin(), g.edges.end(),
                   [](const Edge& a, const Edge& b) { return a.src < b.src; });
  return g;
}

SpatialGraph build_patch_graph(const PatchSet& patches, GraphScale scale, std::size_t k) {
  SpatialGraph g;
  g.scale = scale;
  const std::size_t n = patches.count();
  const double half = patches.tile_size / 2.0;
  g.coords.reserve(n);
  for (const auto& c : patches.coords)
    g.coords.push_back({static_cast<double>(c.x) + half, static_cast<double>(c.y) + half});
  g.node_features = Tensor::zeros(n, kFeatureDim);
  for (std::size_t i = 0; i < n * kFeatureDim; ++i)
    g.node_features[i] = static_cast<double>(patches.features[i]);
  g.edges = build_knn_graph(g.coords, k);
  return g;
}

BagGraphs build_bag_graphs(const WsiBag& bag, std::size_t k) {
  BagGraphs out{build_patch_graph(bag.small, GraphScale::kSmall, k),
                build_patch_graph(bag.large, GraphScale::kLarge, k),
                build_tme_graph(bag.cells, k)};
  if (out.tme.node_count() == 0) {
    out.tme.coords.push_back({0.0, 0.0});
    out.tme.node_features = Tensor::zeros(1, kTmeFeatureDim);
  }
  return out;
}

}  // namespace daem
