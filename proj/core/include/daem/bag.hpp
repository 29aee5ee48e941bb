// Copyright 2026 The DAEM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace daem {

inline constexpr std::size_t kFeatureDim = 768;
inline constexpr int kSmallTile = 256;
inline constexpr int kLargeTile = 512;

enum class SectionKind { kFrozen, kParaffin };
enum class Label { kNonStas = 0, kStas = 1 };
enum class Subtype { kNotApplicable, kMicropapillary, kNonMicropapillary };

enum class CellType { kTumor, kStroma, kImmune, kErythrocyte, kMacrophage, kDead, kOther };
inline constexpr std::size_t kCellTypeCount = 7;
inline constexpr std::array<CellType, kCellTypeCount> kAllCellTypes = {
    CellType::kTumor,      CellType::kStroma, CellType::kImmune, CellType::kErythrocyte,
    CellType::kMacrophage, CellType::kDead,   CellType::kOther};

std::string_view to_string(SectionKind v);
std::string_view to_string(Label v);
std::string_view to_string(Subtype v);
std::string_view to_string(CellType v);
SectionKind parse_section_kind(std::string_view s);
Label parse_label(std::string_view s);
Subtype parse_subtype(std::string_view s);
CellType parse_cell_type(std::string_view s);

struct CellRecord {
  double x = 0.0;  // level-0 pixels
  double y = 0.0;
  CellType type = CellType::kOther;
  double prob = 1.0;
  double nucleus_area = 1.0;  // pixels²

  friend bool operator==(const CellRecord&, const CellRecord&) = default;
};

struct GridPoint {
  std::int64_t x = 0;  // level-0 pixels, top-left corner of the tile
  std::int64_t y = 0;

  friend bool operator==(const GridPoint&, const GridPoint&) = default;
};

/// Patches of one tile size with their encoder features (N × 768, row-major).
struct PatchSet {
  int tile_size = kSmallTile;
  std::vector<GridPoint> coords;
  std::vector<float> features;

  std::size_t count() const { return coords.size(); }
  std::span<const float> feature(std::size_t i) const {
    return {features.data() + i * kFeatureDim, kFeatureDim};
  }

  friend bool operator==(const PatchSet&, const PatchSet&) = default;
};

struct EventTime {
  double time_days = 0.0;
  bool event = false;

  friend bool operator==(const EventTime&, const EventTime&) = default;
};

/// One whole-slide image reduced to its bag of patch features and cell map.
struct WsiBag {
  std::string wsi_id;
  std::string patient_id;
  SectionKind section = SectionKind::kParaffin;
  Label label = Label::kNonStas;
  Subtype subtype = Subtype::kNotApplicable;
  PatchSet small{kSmallTile, {}, {}};
  PatchSet large{kLargeTile, {}, {}};
  std::vector<CellRecord> cells;
  double mpp = 0.5;
  std::optional<EventTime> survival;
  std::optional<EventTime> recurrence;

  friend bool operator==(const WsiBag&, const WsiBag&) = default;
};

/// Throws Error(kValidation/kShape) naming the offending field.
void validate(const WsiBag& bag);

inline constexpr const char* kManifestName = "manifest.json";
inline constexpr const char* kSmallBlobName = "features_s.bin";
inline constexpr const char* kLargeBlobName = "features_l.bin";

/// Writes `dir/manifest.json`, `dir/features_s.bin`, `dir/features_l.bin`.
void write_bag(const WsiBag& bag, const std::filesystem::path& dir);

/// Accepts the manifest path or its directory. Checks blob lengths first
/// (kShape), then CRC-32 (kChecksum), then field validity.
WsiBag load_bag(const std::filesystem::path& manifest_or_dir);

std::uint32_t crc32(std::span<const unsigned char> bytes);

}  // namespace daem
