// Copyright 2026 The DAEM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "daem/bag.hpp"
#include "daem/rng.hpp"

namespace daem {

using Cohort = std::vector<WsiBag>;

/// Loads every immediate subdirectory of `dir` that holds a manifest, in
/// lexicographic directory order.
Cohort load_cohort(const std::filesystem::path& dir);
/// Writes each bag to `dir/<wsi_id>/`.
void write_cohort(const Cohort& cohort, const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Patient-grouped stratified folds.

inline constexpr int kDefaultFolds = 5;

struct FoldPlan {
  std::uint64_t seed = 0;
  int folds = kDefaultFolds;
  std::map<std::string, int> assignment;  // wsi_id -> fold

  int fold_of(const std::string& wsi_id) const;
  /// Indices into `cohort` of bags in (or outside, for training) fold `k`.
  std::vector<std::size_t> members(const Cohort& cohort, int k) const;
  std::vector<std::size_t> complement(const Cohort& cohort, int k) const;

  friend bool operator==(const FoldPlan&, const FoldPlan&) = default;
};

/// Shuffles patients with `seed`, then assigns each to the fold whose
/// frozen/paraffin and STAS/non-STAS slide counts move closest to the
/// per-fold targets. Once the number of unfilled folds equals the number of
/// remaining patients, only empty folds are eligible, so no fold is empty.
FoldPlan make_folds(const Cohort& cohort, std::uint64_t seed, int folds = kDefaultFolds);

std::string fold_plan_json(const FoldPlan& plan);
FoldPlan parse_fold_plan(const std::string& text);
void write_fold_plan(const FoldPlan& plan, const std::filesystem::path& path);
FoldPlan read_fold_plan(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Synthetic cohorts with a planted STAS signal.

struct SyntheticOptions {
  // Main tissue block of small (256 px) tiles; large tiles cover the same
  // block at half the resolution.
  int tissue_cols = 5;
  int tissue_rows = 4;
  // Planted focus: small tiles placed `focus_gap` tiles right of the tissue.
  int focus_cols = 3;
  int focus_rows = 2;
  int focus_gap = 3;
  int slides_per_patient_max = 1;
  /// Exact share of slides marked frozen (rounded), e.g. 1/6 for FS:PS = 1:5.
  double frozen_share = 1.0 / 6.0;
  // Cell map.
  int tumor_cells = 24;
  int stroma_cells = 12;
  int immune_cells = 6;
  int erythrocyte_clusters = 2;
  int cells_per_erythrocyte_cluster = 5;
  int other_cells = 4;  // split across macrophage, dead and other
  int stas_cells = 5;
  double mpp = 0.5;
  double feature_noise = 1.0;
  double signal_scale = 1.0;
};

/// Indices of the planted STAS focus in one synthetic bag (empty for
/// non-STAS bags; their focus tiles carry background features).
struct PlantInfo {
  std::vector<std::size_t> small;
  std::vector<std::size_t> large;
  std::vector<std::size_t> cells;
};

struct SyntheticCohort {
  Cohort bags;
  std::vector<PlantInfo> plants;  // parallel to bags
};

/// Patients are labelled STAS / non-STAS in equal numbers (±1 for odd n).
/// Byte-identical output for identical (n, rng seed, options).
SyntheticCohort generate_synthetic_cohort(int n_patients, SeededRng& rng,
                                          const SyntheticOptions& options = {});

}  // namespace daem
