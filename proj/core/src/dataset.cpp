// Copyright 2026 The DAEM Authors
// SPDX-License-Identifier: Apache-2.0

#include "daem/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <sstream>

#include "daem/error.hpp"

namespace daem {

namespace fs = std::filesystem;
using nlohmann::json;

Cohort load_cohort(const fs::path& dir) {
  require(fs::is_directory(dir), ErrorKind::kMissing, "cohort directory not found: " + dir.string());
  std::vector<fs::path> subdirs;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_directory() && fs::exists(entry.path() / kManifestName))
      subdirs.push_back(entry.path());
  std::sort(subdirs.begin(), subdirs.end());
  Cohort cohort;
  cohort.reserve(subdirs.size());
  for (const auto& d : subdirs) cohort.push_back(load_bag(d));
  return cohort;
}

void write_cohort(const Cohort& cohort, const fs::path& dir) {
  for (const auto& bag : cohort) write_bag(bag, dir / bag.wsi_id);
}

// ---------------------------------------------------------------------------

int FoldPlan::fold_of(const std::string& wsi_id) const {
  auto it = assignment.find(wsi_id);
  require(it != assignment.end(), ErrorKind::kValidation,
          "fold plan has no assignment for " + wsi_id);
  return it->second;
}

std::vector<std::size_t> FoldPlan::members(const Cohort& cohort, int k) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < cohort.size(); ++i)
    if (fold_of(cohort[i].wsi_id) == k) out.push_back(i);
  return out;
}

std::vector<std::size_t> FoldPlan::complement(const Cohort& cohort, int k) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < cohort.size(); ++i)
    if (fold_of(cohort[i].wsi_id) != k) out.push_back(i);
  return out;
}

FoldPlan make_folds(const Cohort& cohort, std::uint64_t seed, int folds) {
  require(folds >= 1, ErrorKind::kValidation, "folds must be positive");

  // Slide counts per patient in four strata: frozen, paraffin, STAS, non-STAS.
  constexpr std::size_t kStrata = 4;
  using Counts = std::array<double, kStrata>;
  std::map<std::string, Counts> per_patient;
  Counts totals{};
  for (const auto& bag : cohort) {
    Counts& c = per_patient[bag.patient_id];
    const std::size_t section = bag.section == SectionKind::kFrozen ? 0 : 1;
    const std::size_t label = bag.label == Label::kStas ? 2 : 3;
    c[section] += 1;
    c[label] += 1;
    totals[section] += 1;
    totals[label] += 1;
  }
  require(per_patient.size() >= static_cast<std::size_t>(folds), ErrorKind::kValidation,
          "make_folds: " + std::to_string(per_patient.size()) + " patients for " +
              std::to_string(folds) + " folds");

  std::vector<std::string> patients;
  for (const auto& [id, _] : per_patient) patients.push_back(id);
  SeededRng rng(seed);
  rng.shuffle(patients);

  Counts target;
  for (std::size_t s = 0; s < kStrata; ++s) target[s] = totals[s] / folds;

  std::vector<Counts> load(folds, Counts{});
  std::vector<int> patients_in(folds, 0);
  std::map<std::string, int> patient_fold;

  auto cost = [&](const Counts& c) {
    double v = 0.0;
    for (std::size_t s = 0; s < kStrata; ++s) {
      const double d = c[s] - target[s];
      v += d * d / std::max(target[s], 1.0);
    }
    return v;
  };

  std::size_t remaining = patients.size();
  for (const auto& pid : patients) {
    const Counts& add = per_patient[pid];
    const int empty = static_cast<int>(std::count(patients_in.begin(), patients_in.end(), 0));
    const bool only_empty = empty > 0 && remaining <= static_cast<std::size_t>(empty);

    int best = -1;
    double best_delta = std::numeric_limits<double>::infinity();
    double best_size = 0.0;
    for (int f = 0; f < folds; ++f) {
      if (only_empty && patients_in[f] != 0) continue;
      Counts after = load[f];
      for (std::size_t s = 0; s < kStrata; ++s) after[s] += add[s];
      const double delta = cost(after) - cost(load[f]);
      const double size = load[f][0] + load[f][1];
      if (best < 0 || delta < best_delta || (delta == best_delta && size < best_size)) {
        best = f;
        best_delta = delta;
        best_size = size;
      }
    }
    for (std::size_t s = 0; s < kStrata; ++s) load[best][s] += add[s];
    ++patients_in[best];
    patient_fold[pid] = best;
    --remaining;
  }

  FoldPlan plan;
  plan.seed = seed;
  plan.folds = folds;
  for (const auto& bag : cohort) plan.assignment[bag.wsi_id] = patient_fold.at(bag.patient_id);
  return plan;
}

std::string fold_plan_json(const FoldPlan& plan) {
  json j{{"seed", plan.seed}, {"folds", plan.folds}, {"assignment", plan.assignment}};
  return j.dump(1) + "\n";
}

FoldPlan parse_fold_plan(const std::string& text) {
  try {
    const json j = json::parse(text);
    FoldPlan plan;
    plan.seed = j.at("seed").get<std::uint64_t>();
    plan.folds = j.at("folds").get<int>();
    plan.assignment = j.at("assignment").get<std::map<std::string, int>>();
    for (const auto& [id, f] : plan.assignment)
      require(f >= 0 && f < plan.folds, ErrorKind::kValidation,
              "fold plan: fold index out of range for " + id);
    return plan;
  } catch (const json::exception& e) {
    fail(ErrorKind::kValidation, std::string("fold plan: ") + e.what());
  }
}

void write_fold_plan(const FoldPlan& plan, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), ErrorKind::kIo, "cannot write " + path.string());
  out << fold_plan_json(plan);
}

FoldPlan read_fold_plan(const fs::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::kMissing, "fold plan not found: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_fold_plan(ss.str());
}

// ---------------------------------------------------------------------------

namespace {

// Prototype feature vectors shared by every synthetic cohort, so cohorts drawn
// with different seeds come from the same "encoder".
struct Prototypes {
  std::vector<double> background;
  std::vector<double> tumor;
  std::vector<double> stas;
};

const Prototypes& prototypes() {
  static const Prototypes p = [] {
    SeededRng rng(0x5eed2026);
    Prototypes out;
    for (auto* v : {&out.background, &out.tumor, &out.stas}) {
      v->resize(kFeatureDim);
      for (double& x : *v) x = rng.normal();
    }
    return out;
  }();
  return p;
}

void append_feature(std::vector<float>& dst, const std::vector<double>& mean, double scale,
                    double noise, SeededRng& rng) {
  for (std::size_t d = 0; d < kFeatureDim; ++d)
    dst.push_back(static_cast<float>(scale * mean[d] + noise * rng.normal()));
}

std::string padded(int v, int width) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%0*d", width, v);
  return buf;
}

}  // namespace

SyntheticCohort generate_synthetic_cohort(int n_patients, SeededRng& rng,
                                          const SyntheticOptions& o) {
  require(n_patients >= 2, ErrorKind::kValidation, "synthetic cohort needs >= 2 patients");
  const Prototypes& proto = prototypes();

  std::vector<Label> labels;
  for (int i = 0; i < n_patients; ++i)
    labels.push_back(i < n_patients / 2 ? Label::kStas : Label::kNonStas);
  rng.shuffle(labels);

  std::vector<int> slides(n_patients);
  int total_slides = 0;
  for (int& s : slides) {
    s = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(o.slides_per_patient_max)));
    total_slides += s;
  }
  std::vector<char> frozen(total_slides, 0);
  const int n_frozen = static_cast<int>(std::lround(total_slides * o.frozen_share));
  for (int i = 0; i < n_frozen; ++i) frozen[i] = 1;
  rng.shuffle(frozen);

  SyntheticCohort out;
  int slide_index = 0;
  for (int p = 0; p < n_patients; ++p) {
    const std::string pid = "SYN-P" + padded(p + 1, 4);
    const Label label = labels[p];
    const Subtype subtype = label == Label::kStas
                                ? (rng.bernoulli(0.3) ? Subtype::kMicropapillary
                                                      : Subtype::kNonMicropapillary)
                                : Subtype::kNotApplicable;
    for (int s = 0; s < slides[p]; ++s, ++slide_index) {
      WsiBag bag;
      PlantInfo plant;
      bag.wsi_id = pid + "-S" + std::to_string(s + 1);
      bag.patient_id = pid;
      bag.label = label;
      bag.subtype = subtype;
      bag.section = frozen[slide_index] ? SectionKind::kFrozen : SectionKind::kParaffin;
      bag.mpp = o.mpp;
      const bool stas = label == Label::kStas;

      const std::int64_t ox = 1024 + 256 * static_cast<std::int64_t>(rng.below(8));
      const std::int64_t oy = 1024 + 256 * static_cast<std::int64_t>(rng.below(8));
      const double cx = ox + o.tissue_cols * 128.0;
      const double cy = oy + o.tissue_rows * 128.0;
      const std::int64_t fx = ox + 256 * static_cast<std::int64_t>(o.tissue_cols + o.focus_gap);
      const std::int64_t fy = oy;

      // Small tiles: tissue block (tumour core near the centre), then focus.
      for (int r = 0; r < o.tissue_rows; ++r)
        for (int c = 0; c < o.tissue_cols; ++c) {
          const GridPoint g{ox + 256 * c, oy + 256 * r};
          bag.small.coords.push_back(g);
          const double dx = (g.x + 128.0 - cx) / 256.0;
          const double dy = (g.y + 128.0 - cy) / 256.0;
          const bool core = dx * dx + dy * dy <= 1.6;
          append_feature(bag.small.features, core ? proto.tumor : proto.background, 1.0,
                         o.feature_noise, rng);
        }
      for (int r = 0; r < o.focus_rows; ++r)
        for (int c = 0; c < o.focus_cols; ++c) {
          if (stas) plant.small.push_back(bag.small.count());
          bag.small.coords.push_back({fx + 256 * c, fy + 256 * r});
          append_feature(bag.small.features, stas ? proto.stas : proto.background,
                         stas ? o.signal_scale : 1.0, o.feature_noise, rng);
        }

      // Large tiles cover the same regions at 512 px.
      const int lcols = (o.tissue_cols + 1) / 2;
      const int lrows = (o.tissue_rows + 1) / 2;
      for (int r = 0; r < lrows; ++r)
        for (int c = 0; c < lcols; ++c) {
          bag.large.coords.push_back({ox + 512 * c, oy + 512 * r});
          append_feature(bag.large.features, (r + c) % 2 == 0 ? proto.tumor : proto.background,
                         1.0, o.feature_noise, rng);
        }
      const int fcols = (o.focus_cols + 1) / 2;
      const int frows = (o.focus_rows + 1) / 2;
      for (int r = 0; r < frows; ++r)
        for (int c = 0; c < fcols; ++c) {
          if (stas) plant.large.push_back(bag.large.count());
          bag.large.coords.push_back({fx + 512 * c, fy + 512 * r});
          append_feature(bag.large.features, stas ? proto.stas : proto.background,
                         stas ? o.signal_scale : 1.0, o.feature_noise, rng);
        }

      // Cell map.
      const double tissue_w = o.tissue_cols * 256.0;
      const double tissue_h = o.tissue_rows * 256.0;
      auto add_cell = [&](double x, double y, CellType t) {
        const double prob = rng.uniform(0.6, 1.0);
        const double area = std::exp(std::log(40.0) + 0.3 * rng.normal());
        bag.cells.push_back({x, y, t, prob, area});
      };
      for (int i = 0; i < o.tumor_cells; ++i) {
        const double ang = rng.uniform(0.0, 2.0 * 3.141592653589793);
        const double rad = 200.0 * std::sqrt(rng.uniform());
        add_cell(cx + rad * std::cos(ang), cy + rad * std::sin(ang), CellType::kTumor);
      }
      for (int i = 0; i < o.stroma_cells; ++i)
        add_cell(ox + rng.uniform(0.0, tissue_w), oy + rng.uniform(0.0, tissue_h),
                 CellType::kStroma);
      for (int i = 0; i < o.immune_cells; ++i)
        add_cell(ox + rng.uniform(0.0, tissue_w), oy + rng.uniform(0.0, tissue_h),
                 CellType::kImmune);
      for (int k = 0; k < o.erythrocyte_clusters; ++k) {
        const double ex = ox + rng.uniform(0.1, 0.9) * tissue_w;
        const double ey = oy + rng.uniform(0.1, 0.9) * tissue_h;
        for (int i = 0; i < o.cells_per_erythrocyte_cluster; ++i)
          add_cell(ex + rng.uniform(-6.0, 6.0), ey + rng.uniform(-6.0, 6.0),
                   CellType::kErythrocyte);
      }
      constexpr std::array<CellType, 3> kMinor = {CellType::kMacrophage, CellType::kDead,
                                                  CellType::kOther};
      for (int i = 0; i < o.other_cells; ++i)
        add_cell(ox + rng.uniform(0.0, tissue_w), oy + rng.uniform(0.0, tissue_h),
                 kMinor[static_cast<std::size_t>(i) % kMinor.size()]);
      // Focus cells: tumour cells for STAS, alveolar macrophages otherwise.
      const double fcx = fx + o.focus_cols * 128.0;
      const double fcy = fy + o.focus_rows * 128.0;
      for (int i = 0; i < o.stas_cells; ++i) {
        if (stas) plant.cells.push_back(bag.cells.size());
        add_cell(fcx + rng.uniform(-60.0, 60.0), fcy + rng.uniform(-60.0, 60.0),
                 stas ? CellType::kTumor : CellType::kMacrophage);
      }

      const double base = stas ? 900.0 : 1800.0;
      bag.survival = EventTime{1.0 + base * -std::log(1.0 - rng.uniform()), rng.bernoulli(0.7)};
      bag.recurrence =
          EventTime{1.0 + 0.6 * base * -std::log(1.0 - rng.uniform()), rng.bernoulli(0.6)};

      out.bags.push_back(std::move(bag));
      out.plants.push_back(std::move(plant));
    }
  }
  return out;
}

}  // namespace daem
