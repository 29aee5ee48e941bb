// Copyright 2026 The DAEM Authors
// SPDX-License-Identifier: Apache-2.0

#include "daem/tme.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "daem/error.hpp"

namespace daem {

namespace {

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent_[std::max(a, b)] = std::min(a, b);
  }

 private:
  std::vector<std::size_t> parent_;
};

std::optional<double> ratio(double num, double den) {
  if (den <= 0.0) return std::nullopt;
  return num / den;
}

std::size_t type_index(CellType t) { return static_cast<std::size_t>(t); }

std::string format_optional(const std::optional<double>& v) {
  if (!v) return "NA";
  std::ostringstream os;
  os.precision(12);
  os << *v;
  return os.str();
}

}  // namespace

std::vector<std::vector<std::size_t>> erythrocyte_clusters(std::span<const CellRecord> cells,
                                                           double radius_px,
                                                           std::size_t min_size) {
  require(radius_px > 0.0, ErrorKind::kValidation, "linkage radius must be > 0");
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < cells.size(); ++i)
    if (cells[i].type == CellType::kErythrocyte) ids.push_back(i);

  // Bucket grid with cell size = radius; linked pairs are in adjacent buckets.
  std::map<std::pair<std::int64_t, std::int64_t>, std::vector<std::size_t>> buckets;
  auto key = [&](const CellRecord& c) {
    return std::make_pair(static_cast<std::int64_t>(std::floor(c.x / radius_px)),
                          static_cast<std::int64_t>(std::floor(c.y / radius_px)));
  };
  for (std::size_t k = 0; k < ids.size(); ++k) buckets[key(cells[ids[k]])].push_back(k);

  DisjointSets sets(ids.size());
  const double r2 = radius_px * radius_px;
  for (std::size_t k = 0; k < ids.size(); ++k) {
    const CellRecord& c = cells[ids[k]];
    const auto [bx, by] = key(c);
    for (std::int64_t dx = -1; dx <= 1; ++dx)
      for (std::int64_t dy = -1; dy <= 1; ++dy) {
        const auto it = buckets.find({bx + dx, by + dy});
        if (it == buckets.end()) continue;
        for (std::size_t other : it->second) {
          if (other <= k) continue;
          const double ex = cells[ids[other]].x - c.x;
          const double ey = cells[ids[other]].y - c.y;
          if (ex * ex + ey * ey <= r2) sets.unite(k, other);
        }
      }
  }
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t k = 0; k < ids.size(); ++k) groups[sets.find(k)].push_back(ids[k]);
  std::vector<std::vector<std::size_t>> out;
  for (auto& [root, members] : groups)
    if (members.size() >= min_size) out.push_back(std::move(members));
  return out;
}

TmeMetrics compute_tme_metrics(std::span<const CellRecord> cells, double tissue_area_px2,
                               double mpp, const TmeOptions& options) {
  require(tissue_area_px2 > 0.0 && std::isfinite(tissue_area_px2), ErrorKind::kValidation,
          "tissue area must be > 0");
  require(mpp > 0.0 && std::isfinite(mpp), ErrorKind::kValidation, "mpp must be > 0");
  TmeMetrics m;
  std::array<double, kCellTypeCount> area_sum{};
  for (const CellRecord& c : cells) {
    ++m.counts[type_index(c.type)];
    area_sum[type_index(c.type)] += c.nucleus_area;
  }
  const double total = static_cast<double>(cells.size());
  if (total > 0)
    for (std::size_t t = 0; t < kCellTypeCount; ++t)
      m.fractions[t] = static_cast<double>(m.counts[t]) / total;

  auto amount = [&](CellType t) {
    return options.area_weighted ? area_sum[type_index(t)]
                                 : static_cast<double>(m.counts[type_index(t)]);
  };
  auto count = [&](CellType t) { return static_cast<double>(m.counts[type_index(t)]); };

  m.area_mm2 = tissue_area_px2 * mpp * mpp / 1e6;
  m.vessel_clusters =
      erythrocyte_clusters(cells, options.linkage_um / mpp, options.min_cluster_cells).size();
  m.mvd = static_cast<double>(m.vessel_clusters) / m.area_mm2;
  m.str = ratio(amount(CellType::kStroma), amount(CellType::kTumor));
  m.itr = ratio(amount(CellType::kImmune), amount(CellType::kTumor));
  m.svr = ratio(amount(CellType::kStroma), static_cast<double>(m.vessel_clusters));
  m.tumor_density = count(CellType::kTumor) / m.area_mm2;
  m.immune_density = count(CellType::kImmune) / m.area_mm2;
  m.stroma_density = count(CellType::kStroma) / m.area_mm2;
  m.dead_cell_fraction =
      ratio(count(CellType::kDead), count(CellType::kTumor) + count(CellType::kDead));
  m.macrophage_tumor_ratio = ratio(count(CellType::kMacrophage), count(CellType::kTumor));
  return m;
}

double tissue_area_px2(const WsiBag& bag) {
  const double tile = static_cast<double>(bag.small.tile_size);
  return static_cast<double>(bag.small.count()) * tile * tile;
}

std::vector<std::pair<std::string, std::optional<double>>> tme_indicators(const TmeMetrics& m) {
  std::vector<std::pair<std::string, std::optional<double>>> out;
  for (CellType t : kAllCellTypes)
    out.emplace_back("frac_" + std::string(to_string(t)), m.fractions[type_index(t)]);
  out.emplace_back("str", m.str);
  out.emplace_back("itr", m.itr);
  out.emplace_back("mvd", m.mvd);
  out.emplace_back("svr", m.svr);
  out.emplace_back("tumor_density", m.tumor_density);
  out.emplace_back("immune_density", m.immune_density);
  out.emplace_back("stroma_density", m.stroma_density);
  out.emplace_back("dead_cell_fraction", m.dead_cell_fraction);
  out.emplace_back("macrophage_tumor_ratio", m.macrophage_tumor_ratio);
  return out;
}

std::string tme_csv_header() {
  std::string h = "wsi_id,patient_id,section,label,subtype";
  for (const auto& [name, v] : tme_indicators(TmeMetrics{})) h += "," + name;
  return h;
}

std::string tme_csv_row(const WsiBag& bag, const TmeMetrics& m) {
  std::ostringstream os;
  os << bag.wsi_id << "," << bag.patient_id << "," << to_string(bag.section) << ","
     << to_string(bag.label) << "," << to_string(bag.subtype);
  for (const auto& [name, v] : tme_indicators(m)) os << "," << format_optional(v);
  return os.str();
}

// ---------------------------------------------------------------------------

bool TumorRegion::contains(double x, double y) const {
  if (occupancy.empty()) return false;
  const auto c = static_cast<std::int64_t>(std::floor(x / grid_px)) - origin_col;
  const auto r = static_cast<std::int64_t>(std::floor(y / grid_px)) - origin_row;
  if (c < 0 || r < 0 || c >= static_cast<std::int64_t>(cols) || r >= static_cast<std::int64_t>(rows))
    return false;
  return occupancy[static_cast<std::size_t>(r) * cols + static_cast<std::size_t>(c)] != 0;
}

namespace {

// Closed boundary loops of the occupied cells, traced clockwise on screen
// (y down) with the region on the right. At pinch vertices the sharpest right
// turn is taken so every loop stays simple. Collinear vertices are dropped.
std::vector<std::vector<Point2>> trace_boundaries(const std::vector<std::uint8_t>& occ,
                                                  std::size_t cols, std::size_t rows,
                                                  std::int64_t origin_col,
                                                  std::int64_t origin_row, double grid) {
  using Vertex = std::pair<std::int64_t, std::int64_t>;  // (x, y) corner indices
  auto filled = [&](std::int64_t c, std::int64_t r) {
    return c >= 0 && r >= 0 && c < static_cast<std::int64_t>(cols) &&
           r < static_cast<std::int64_t>(rows) &&
           occ[static_cast<std::size_t>(r) * cols + static_cast<std::size_t>(c)] != 0;
  };
  std::map<Vertex, std::vector<Vertex>> out_edges;
  std::size_t edge_count = 0;
  for (std::int64_t r = 0; r < static_cast<std::int64_t>(rows); ++r)
    for (std::int64_t c = 0; c < static_cast<std::int64_t>(cols); ++c) {
      if (!filled(c, r)) continue;
      auto add = [&](Vertex a, Vertex b) {
        out_edges[a].push_back(b);
        ++edge_count;
      };
      if (!filled(c, r - 1)) add({c, r}, {c + 1, r});
      if (!filled(c + 1, r)) add({c + 1, r}, {c + 1, r + 1});
      if (!filled(c, r + 1)) add({c + 1, r + 1}, {c, r + 1});
      if (!filled(c - 1, r)) add({c, r + 1}, {c, r});
    }

  // Direction preference relative to the incoming direction: right, straight, left.
  auto turn_rank = [](Vertex d_in, Vertex d_out) {
    const std::int64_t cross = d_in.first * d_out.second - d_in.second * d_out.first;
    if (cross > 0) return 0;  // right turn in y-down coordinates
    if (cross == 0) return 1;
    return 2;
  };

  std::vector<std::vector<Point2>> loops;
  while (edge_count > 0) {
    auto start_it = out_edges.begin();
    while (start_it->second.empty()) ++start_it;
    const Vertex start = start_it->first;
    std::vector<Vertex> loop{start};
    Vertex cur = start;
    Vertex next = start_it->second.front();
    start_it->second.erase(start_it->second.begin());
    --edge_count;
    while (next != start) {
      const Vertex dir{next.first - cur.first, next.second - cur.second};
      loop.push_back(next);
      auto& cands = out_edges[next];
      require(!cands.empty(), ErrorKind::kValidation, "tumor region boundary is not closed");
      std::size_t best = 0;
      for (std::size_t i = 1; i < cands.size(); ++i) {
        const Vertex di{cands[i].first - next.first, cands[i].second - next.second};
        const Vertex db{cands[best].first - next.first, cands[best].second - next.second};
        if (turn_rank(dir, di) < turn_rank(dir, db)) best = i;
      }
      cur = next;
      next = cands[best];
      cands.erase(cands.begin() + static_cast<std::ptrdiff_t>(best));
      --edge_count;
    }
    // Drop collinear vertices.
    std::vector<Point2> poly;
    const std::size_t n = loop.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Vertex& p = loop[(i + n - 1) % n];
      const Vertex& q = loop[i];
      const Vertex& s = loop[(i + 1) % n];
      const std::int64_t cross =
          (q.first - p.first) * (s.second - q.second) - (q.second - p.second) * (s.first - q.first);
      if (cross == 0) continue;
      poly.push_back({static_cast<double>(origin_col + q.first) * grid,
                      static_cast<double>(origin_row + q.second) * grid});
    }
    loops.push_back(std::move(poly));
  }
  return loops;
}

}  // namespace

TumorRegion propose_tumor_region(std::span<const CellRecord> cells,
                                 const TumorRegionOptions& options) {
  require(options.grid_px > 0.0, ErrorKind::kValidation, "grid size must be > 0");
  TumorRegion region;
  region.grid_px = options.grid_px;
  std::vector<std::size_t> tumor;
  for (std::size_t i = 0; i < cells.size(); ++i)
    if (cells[i].type == CellType::kTumor) tumor.push_back(i);
  region.tumor_cells = tumor.size();
  if (tumor.empty()) return region;

  auto bin_of = [&](const CellRecord& c) {
    return std::make_pair(static_cast<std::int64_t>(std::floor(c.x / options.grid_px)),
                          static_cast<std::int64_t>(std::floor(c.y / options.grid_px)));
  };
  std::int64_t c0 = INT64_MAX, r0 = INT64_MAX, c1 = INT64_MIN, r1 = INT64_MIN;
  for (std::size_t i : tumor) {
    const auto [c, r] = bin_of(cells[i]);
    c0 = std::min(c0, c);
    r0 = std::min(r0, r);
    c1 = std::max(c1, c);
    r1 = std::max(r1, r);
  }
  region.origin_col = c0;
  region.origin_row = r0;
  region.cols = static_cast<std::size_t>(c1 - c0 + 1);
  region.rows = static_cast<std::size_t>(r1 - r0 + 1);
  const std::size_t cols = region.cols;
  const std::size_t rows = region.rows;
  auto index = [&](const CellRecord& c) {
    const auto [bc, br] = bin_of(c);
    return static_cast<std::size_t>(br - r0) * cols + static_cast<std::size_t>(bc - c0);
  };
  std::vector<double> counts(cols * rows, 0.0);
  for (std::size_t i : tumor) counts[index(cells[i])] += 1.0;

  if (options.min_density) {
    region.strong_threshold = *options.min_density;
  } else {
    std::vector<double> nonempty;
    for (double v : counts)
      if (v > 0.0) nonempty.push_back(v);
    std::sort(nonempty.begin(), nonempty.end());
    // Nearest-rank 75th percentile.
    const auto rank = static_cast<std::size_t>(std::ceil(0.75 * static_cast<double>(nonempty.size())));
    region.strong_threshold = nonempty[std::max<std::size_t>(rank, 1) - 1];
  }
  region.grow_threshold = std::max(1.0, std::ceil(region.strong_threshold / 4.0));

  // Grow from strong bins through 4-connected bins above the weak threshold.
  std::vector<int> label(cols * rows, -1);
  std::vector<double> component_cells;
  std::vector<std::size_t> stack;
  for (std::size_t seed = 0; seed < counts.size(); ++seed) {
    if (counts[seed] < region.strong_threshold || label[seed] >= 0) continue;
    const int id = static_cast<int>(component_cells.size());
    component_cells.push_back(0.0);
    stack.push_back(seed);
    label[seed] = id;
    while (!stack.empty()) {
      const std::size_t b = stack.back();
      stack.pop_back();
      component_cells[static_cast<std::size_t>(id)] += counts[b];
      const std::size_t r = b / cols;
      const std::size_t c = b % cols;
      const std::pair<long, long> nbrs[] = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}};
      for (const auto& [dc, dr] : nbrs) {
        const long nc = static_cast<long>(c) + dc;
        const long nr = static_cast<long>(r) + dr;
        if (nc < 0 || nr < 0 || nc >= static_cast<long>(cols) || nr >= static_cast<long>(rows))
          continue;
        const std::size_t nb = static_cast<std::size_t>(nr) * cols + static_cast<std::size_t>(nc);
        if (label[nb] >= 0 || counts[nb] < region.grow_threshold) continue;
        label[nb] = id;
        stack.push_back(nb);
      }
    }
  }
  if (component_cells.empty()) return region;
  const int main = static_cast<int>(std::max_element(component_cells.begin(), component_cells.end()) -
                                    component_cells.begin());

  // Fill holes: background reachable from outside the bounding box stays empty.
  const std::size_t pc = cols + 2;
  const std::size_t pr = rows + 2;
  std::vector<std::uint8_t> outside(pc * pr, 0);
  auto occupied_padded = [&](std::size_t c, std::size_t r) {
    if (c == 0 || r == 0 || c == pc - 1 || r == pr - 1) return false;
    return label[(r - 1) * cols + (c - 1)] == main;
  };
  stack.assign(1, 0);
  outside[0] = 1;
  while (!stack.empty()) {
    const std::size_t b = stack.back();
    stack.pop_back();
    const std::size_t r = b / pc;
    const std::size_t c = b % pc;
    const std::pair<long, long> nbrs[] = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}};
    for (const auto& [dc, dr] : nbrs) {
      const long nc = static_cast<long>(c) + dc;
      const long nr = static_cast<long>(r) + dr;
      if (nc < 0 || nr < 0 || nc >= static_cast<long>(pc) || nr >= static_cast<long>(pr)) continue;
      const std::size_t nb = static_cast<std::size_t>(nr) * pc + static_cast<std::size_t>(nc);
      if (outside[nb] || occupied_padded(static_cast<std::size_t>(nc), static_cast<std::size_t>(nr)))
        continue;
      outside[nb] = 1;
      stack.push_back(nb);
    }
  }
  region.occupancy.assign(cols * rows, 0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      region.occupancy[r * cols + c] = outside[(r + 1) * pc + (c + 1)] ? 0 : 1;

  for (std::size_t i : tumor) {
    if (region.occupancy[index(cells[i])])
      ++region.tumor_cells_inside;
    else
      region.candidates.push_back(i);
  }
  region.boundaries = trace_boundaries(region.occupancy, cols, rows, region.origin_col,
                                       region.origin_row, region.grid_px);
  return region;
}

Distance point_to_line_distance(Point2 p, Point2 a, Point2 b, double mpp) {
  require(mpp > 0.0 && std::isfinite(mpp), ErrorKind::kValidation, "mpp must be > 0");
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  const double len = std::hypot(dx, dy);
  require(len > 0.0, ErrorKind::kValidation, "degenerate line: a and b coincide");
  const double cross = dx * (p.y - a.y) - dy * (p.x - a.x);
  Distance d;
  d.px = std::fabs(cross) / len;
  d.um = d.px * mpp;
  return d;
}

}  // namespace daem
