// Copyright 2026 The DAEM Authors
// SPDX-License-Identifier: Apache-2.0

#include "daem/bag.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <json.hpp>

#include "daem/error.hpp"

namespace daem {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;

template <typename E, std::size_t N>
E parse_enum(std::string_view s, const std::array<std::pair<E, std::string_view>, N>& table,
             const char* what) {
  for (const auto& [v, name] : table)
    if (name == s) return v;
  fail(ErrorKind::kValidation, std::string("unknown ") + what + " '" + std::string(s) + "'");
}

constexpr std::array<std::pair<SectionKind, std::string_view>, 2> kSectionNames{
    {{SectionKind::kFrozen, "frozen"}, {SectionKind::kParaffin, "paraffin"}}};
constexpr std::array<std::pair<Label, std::string_view>, 2> kLabelNames{
    {{Label::kNonStas, "non-STAS"}, {Label::kStas, "STAS"}}};
constexpr std::array<std::pair<Subtype, std::string_view>, 3> kSubtypeNames{
    {{Subtype::kNotApplicable, "n/a"},
     {Subtype::kMicropapillary, "micropapillary"},
     {Subtype::kNonMicropapillary, "non-micropapillary"}}};
constexpr std::array<std::pair<CellType, std::string_view>, kCellTypeCount> kCellNames{
    {{CellType::kTumor, "tumor"},
     {CellType::kStroma, "stroma"},
     {CellType::kImmune, "immune"},
     {CellType::kErythrocyte, "erythrocyte"},
     {CellType::kMacrophage, "macrophage"},
     {CellType::kDead, "dead"},
     {CellType::kOther, "other"}}};

template <typename E, std::size_t N>
std::string_view name_of(E v, const std::array<std::pair<E, std::string_view>, N>& table) {
  for (const auto& [e, name] : table)
    if (e == v) return name;
  return "?";
}

std::vector<unsigned char> encode_features(const std::vector<float>& features) {
  std::vector<unsigned char> bytes(features.size() * 4);
  for (std::size_t i = 0; i < features.size(); ++i) {
    std::uint32_t bits = std::bit_cast<std::uint32_t>(features[i]);
    for (int b = 0; b < 4; ++b) bytes[i * 4 + b] = static_cast<unsigned char>(bits >> (8 * b));
  }
  return bytes;
}

std::vector<float> decode_features(const std::vector<unsigned char>& bytes) {
  std::vector<float> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= std::uint32_t{bytes[i * 4 + b]} << (8 * b);
    out[i] = std::bit_cast<float>(bits);
  }
  return out;
}

std::vector<unsigned char> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::kMissing, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorKind::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  require(out.good(), ErrorKind::kIo, "short write to " + path.string());
}

json event_json(const EventTime& e) { return {{"time_days", e.time_days}, {"event", e.event}}; }

EventTime event_from(const json& j) {
  return {j.at("time_days").get<double>(), j.at("event").get<bool>()};
}

void validate_patches(const PatchSet& p, const char* name) {
  const std::string field(name);
  require(p.count() >= 1, ErrorKind::kValidation, field + ": at least one patch required");
  require(p.features.size() == p.count() * kFeatureDim, ErrorKind::kShape,
          field + ": feature length must be exactly 768 per patch");
  for (const auto& c : p.coords)
    require(c.x >= 0 && c.y >= 0, ErrorKind::kValidation,
            field + ": coordinates must be non-negative");
  for (float v : p.features)
    require(std::isfinite(v), ErrorKind::kValidation, field + ": non-finite feature value");
}

}  // namespace

std::string_view to_string(SectionKind v) { return name_of(v, kSectionNames); }
std::string_view to_string(Label v) { return name_of(v, kLabelNames); }
std::string_view to_string(Subtype v) { return name_of(v, kSubtypeNames); }
std::string_view to_string(CellType v) { return name_of(v, kCellNames); }
SectionKind parse_section_kind(std::string_view s) {
  return parse_enum(s, kSectionNames, "section kind");
}
Label parse_label(std::string_view s) { return parse_enum(s, kLabelNames, "label"); }
Subtype parse_subtype(std::string_view s) { return parse_enum(s, kSubtypeNames, "subtype"); }
CellType parse_cell_type(std::string_view s) { return parse_enum(s, kCellNames, "cell type"); }

std::uint32_t crc32(std::span<const unsigned char> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  std::size_t offset = 0;
  while (offset < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - offset, 1u << 30));
    crc = ::crc32(crc, bytes.data() + offset, chunk);
    offset += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

void validate(const WsiBag& bag) {
  require(!bag.wsi_id.empty(), ErrorKind::kValidation, "wsi_id: must be non-empty");
  require(!bag.patient_id.empty(), ErrorKind::kValidation, "patient_id: must be non-empty");
  require(std::isfinite(bag.mpp) && bag.mpp > 0.0, ErrorKind::kValidation,
          "mpp: must be positive");
  validate_patches(bag.small, "patches_small");
  validate_patches(bag.large, "patches_large");
  for (std::size_t i = 0; i < bag.cells.size(); ++i) {
    const CellRecord& c = bag.cells[i];
    const std::string where = "cells[" + std::to_string(i) + "]";
    require(std::isfinite(c.x) && std::isfinite(c.y), ErrorKind::kValidation,
            where + ": non-finite coordinate");
    require(c.prob >= 0.0 && c.prob <= 1.0, ErrorKind::kValidation,
            where + ".prob: must lie in [0, 1]");
    require(c.nucleus_area > 0.0 && std::isfinite(c.nucleus_area), ErrorKind::kValidation,
            where + ".area: must be positive");
  }
  for (const auto* e : {&bag.survival, &bag.recurrence})
    if (e->has_value())
      require((*e)->time_days > 0.0, ErrorKind::kValidation, "event time must be positive");
}

void write_bag(const WsiBag& bag, const fs::path& dir) {
  validate(bag);
  fs::create_directories(dir);

  const auto small_bytes = encode_features(bag.small.features);
  const auto large_bytes = encode_features(bag.large.features);

  auto patch_json = [](const PatchSet& p, const char* blob, std::uint32_t crc) {
    json coords = json::array();
    for (const auto& c : p.coords) coords.push_back({c.x, c.y});
    return json{{"tile_size", p.tile_size},
                {"count", p.count()},
                {"coords", std::move(coords)},
                {"blob", blob},
                {"crc32", crc}};
  };

  json cells = json::array();
  for (const auto& c : bag.cells)
    cells.push_back({{"x", c.x},
                     {"y", c.y},
                     {"type", to_string(c.type)},
                     {"prob", c.prob},
                     {"area", c.nucleus_area}});

  json m{{"format", "daem-bag"},
         {"version", kFormatVersion},
         {"wsi_id", bag.wsi_id},
         {"patient_id", bag.patient_id},
         {"section_kind", to_string(bag.section)},
         {"label", to_string(bag.label)},
         {"subtype", to_string(bag.subtype)},
         {"mpp", bag.mpp},
         {"feature_dim", kFeatureDim},
         {"patches_small", patch_json(bag.small, kSmallBlobName, crc32(small_bytes))},
         {"patches_large", patch_json(bag.large, kLargeBlobName, crc32(large_bytes))},
         {"cells", std::move(cells)}};
  if (bag.survival) m["survival"] = event_json(*bag.survival);
  if (bag.recurrence) m["recurrence"] = event_json(*bag.recurrence);

  write_file(dir / kSmallBlobName, small_bytes);
  write_file(dir / kLargeBlobName, large_bytes);
  const std::string text = m.dump(1);
  write_file(dir / kManifestName, std::vector<unsigned char>(text.begin(), text.end()));
}

WsiBag load_bag(const fs::path& manifest_or_dir) {
  const fs::path manifest_path = fs::is_directory(manifest_or_dir)
                                     ? manifest_or_dir / kManifestName
                                     : manifest_or_dir;
  require(fs::exists(manifest_path), ErrorKind::kMissing,
          "manifest not found: " + manifest_path.string());
  const fs::path dir = manifest_path.parent_path();

  json m;
  try {
    const auto bytes = read_file(manifest_path);
    m = json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    fail(ErrorKind::kValidation, manifest_path.string() + ": " + e.what());
  }

  try {
    require(m.value("format", "") == "daem-bag", ErrorKind::kValidation,
            manifest_path.string() + ": format must be 'daem-bag'");
    require(m.at("version").get<int>() == kFormatVersion, ErrorKind::kValidation,
            manifest_path.string() + ": unsupported version");
    require(m.at("feature_dim").get<std::size_t>() == kFeatureDim, ErrorKind::kShape,
            manifest_path.string() + ": feature_dim must be 768");

    WsiBag bag;
    bag.wsi_id = m.at("wsi_id").get<std::string>();
    bag.patient_id = m.at("patient_id").get<std::string>();
    bag.section = parse_section_kind(m.at("section_kind").get<std::string>());
    bag.label = parse_label(m.at("label").get<std::string>());
    bag.subtype = parse_subtype(m.value("subtype", std::string("n/a")));
    bag.mpp = m.at("mpp").get<double>();

    auto read_patches = [&](const char* key, PatchSet& out) {
      const json& p = m.at(key);
      out.tile_size = p.at("tile_size").get<int>();
      const std::size_t count = p.at("count").get<std::size_t>();
      for (const auto& c : p.at("coords"))
        out.coords.push_back({c.at(0).get<std::int64_t>(), c.at(1).get<std::int64_t>()});
      require(out.coords.size() == count, ErrorKind::kShape,
              std::string(key) + ": coords length disagrees with count");
      const fs::path blob = dir / p.at("blob").get<std::string>();
      const auto bytes = read_file(blob);
      require(bytes.size() == count * kFeatureDim * 4, ErrorKind::kShape,
              blob.string() + ": dimension mismatch, expected " +
                  std::to_string(count * kFeatureDim * 4) + " bytes, found " +
                  std::to_string(bytes.size()));
      require(crc32(bytes) == p.at("crc32").get<std::uint32_t>(), ErrorKind::kChecksum,
              blob.string() + ": checksum mismatch");
      out.features = decode_features(bytes);
    };
    read_patches("patches_small", bag.small);
    read_patches("patches_large", bag.large);

    for (const auto& c : m.at("cells"))
      bag.cells.push_back({c.at("x").get<double>(), c.at("y").get<double>(),
                           parse_cell_type(c.at("type").get<std::string>()),
                           c.at("prob").get<double>(), c.at("area").get<double>()});
    if (m.contains("survival")) bag.survival = event_from(m.at("survival"));
    if (m.contains("recurrence")) bag.recurrence = event_from(m.at("recurrence"));

    validate(bag);
    return bag;
  } catch (const json::exception& e) {
    fail(ErrorKind::kValidation, manifest_path.string() + ": " + e.what());
  }
}

}  // namespace daem
