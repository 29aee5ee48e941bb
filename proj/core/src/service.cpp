// Copyright 2026 The DAEM Authors
// SPDX-License-Identifier: Apache-2.0

#include "daem/service.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

#include "daem/error.hpp"
#include "daem/tme.hpp"

namespace daem {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Thumbnails.

Raster synthesize_thumbnail(const WsiBag& bag) {
  const double ds = kThumbnailDownsample;
  double w = 1.0, h = 1.0;
  for (const PatchSet* set : {&bag.small, &bag.large})
    for (const GridPoint& c : set->coords) {
      w = std::max(w, std::ceil(static_cast<double>(c.x + set->tile_size) / ds));
      h = std::max(h, std::ceil(static_cast<double>(c.y + set->tile_size) / ds));
    }
  for (const CellRecord& c : bag.cells) {
    w = std::max(w, std::floor(c.x / ds) + 1.0);
    h = std::max(h, std::floor(c.y / ds) + 1.0);
  }
  Raster r(static_cast<std::size_t>(w), static_cast<std::size_t>(h));
  const int tile = bag.small.tile_size / kThumbnailDownsample;
  for (const GridPoint& c : bag.small.coords) {
    const auto x0 = static_cast<std::size_t>(c.x / kThumbnailDownsample);
    const auto y0 = static_cast<std::size_t>(c.y / kThumbnailDownsample);
    for (std::size_t y = y0; y < y0 + static_cast<std::size_t>(tile); ++y)
      for (std::size_t x = x0; x < x0 + static_cast<std::size_t>(tile); ++x)
        r.set(x, y, {244, 222, 232});
  }
  std::vector<int> count(r.width * r.height, 0);
  for (const CellRecord& c : bag.cells)
    ++count[static_cast<std::size_t>(c.y / ds) * r.width + static_cast<std::size_t>(c.x / ds)];
  for (std::size_t y = 0; y < r.height; ++y)
    for (std::size_t x = 0; x < r.width; ++x) {
      const int n = count[y * r.width + x];
      if (n == 0) continue;
      const double t = std::min(1.0, n / 4.0);
      r.set(x, y, blend(r.at(x, y), {90, 40, 130}, 0.35 + 0.65 * t));
    }
  return r;
}

Raster downsample_raster(const Raster& r, int level) {
  require(level >= 0 && level <= kMaxThumbnailLevel, ErrorKind::kValidation,
          "thumbnail level must lie in [0, " + std::to_string(kMaxThumbnailLevel) + "]");
  if (level == 0) return r;
  const std::size_t f = std::size_t{1} << level;
  const std::size_t w = std::max<std::size_t>(1, (r.width + f - 1) / f);
  const std::size_t h = std::max<std::size_t>(1, (r.height + f - 1) / f);
  Raster out(w, h);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      std::array<std::uint64_t, 3> sum{};
      std::uint64_t n = 0;
      for (std::size_t yy = y * f; yy < std::min(r.height, (y + 1) * f); ++yy)
        for (std::size_t xx = x * f; xx < std::min(r.width, (x + 1) * f); ++xx) {
          const Rgb c = r.at(xx, yy);
          for (int k = 0; k < 3; ++k) sum[k] += c[k];
          ++n;
        }
      Rgb c{255, 255, 255};
      if (n > 0)
        for (int k = 0; k < 3; ++k) c[k] = static_cast<std::uint8_t>((sum[k] + n / 2) / n);
      out.set(x, y, c);
    }
  return out;
}

bool ensure_thumbnail(const WsiBag& bag, const std::filesystem::path& dir) {
  const auto path = dir / kThumbnailName;
  if (std::filesystem::exists(path)) return false;
  write_png(synthesize_thumbnail(bag), path);
  return true;
}

// ---------------------------------------------------------------------------
// Measurements.

std::string_view to_string(Panel p) { return p == Panel::kWsi ? "wsi" : "tme"; }

Panel parse_panel(std::string_view s) {
  if (s == "wsi") return Panel::kWsi;
  if (s == "tme") return Panel::kTme;
  fail(ErrorKind::kValidation, "unknown panel '" + std::string(s) + "' (expected wsi or tme)");
}

namespace {

json point_json(Point2 p) { return json::array({p.x, p.y}); }

json to_json(const Measurement& m) {
  return {{"id", m.id},   {"wsi_id", m.wsi_id}, {"panel", to_string(m.panel)},
          {"p", point_json(m.p)}, {"a", point_json(m.a)}, {"b", point_json(m.b)},
          {"mpp", m.mpp}, {"px", m.px},         {"um", m.um},
          {"note", m.note}, {"timestamp", m.timestamp}};
}

Point2 point_from(const json& j, const char* key) {
  require(j.contains(key), ErrorKind::kValidation, std::string("missing field '") + key + "'");
  const json& v = j.at(key);
  require(v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number(),
          ErrorKind::kValidation, std::string("field '") + key + "' must be [x, y]");
  return {v[0].get<double>(), v[1].get<double>()};
}

Measurement from_json(const json& j) {
  Measurement m;
  m.id = j.at("id").get<std::string>();
  m.wsi_id = j.at("wsi_id").get<std::string>();
  m.panel = parse_panel(j.at("panel").get<std::string>());
  m.p = point_from(j, "p");
  m.a = point_from(j, "a");
  m.b = point_from(j, "b");
  m.mpp = j.at("mpp").get<double>();
  m.note = j.value("note", "");
  m.timestamp = j.value("timestamp", "");
  const Distance d = point_to_line_distance(m.p, m.a, m.b, m.mpp);
  m.px = d.px;
  m.um = d.um;
  return m;
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms =
      std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[48];
  std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
  return out;
}

std::uint64_t id_number(const std::string& id) {
  if (id.size() < 2 || id[0] != 'm') return 0;
  try {
    return std::stoull(id.substr(1));
  } catch (const std::exception&) {
    return 0;
  }
}

}  // namespace

std::string measurement_json(const Measurement& m) { return to_json(m).dump(); }

MeasurementStore::MeasurementStore(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
  std::uint64_t next = 1;
  std::map<std::string, std::vector<Measurement>> items;
  auto upsert = [&](const Measurement& m) {
    items[m.wsi_id].push_back(m);
    next = std::max(next, id_number(m.id) + 1);
  };
  if (std::filesystem::exists(snapshot_path())) {
    std::ifstream in(snapshot_path());
    json snap;
    try {
      snap = json::parse(in);
    } catch (const json::exception& e) {
      fail(ErrorKind::kValidation, snapshot_path().string() + ": " + e.what());
    }
    next = std::max(next, snap.value("next_id", std::uint64_t{1}));
    for (const json& m : snap.at("measurements")) upsert(from_json(m));
  }
  if (std::filesystem::exists(log_path())) {
    std::ifstream in(log_path());
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      json rec;
      try {
        rec = json::parse(line);
      } catch (const json::exception&) {
        continue;  // torn final write
      }
      const std::string op = rec.value("op", "");
      if (op == "add") {
        upsert(from_json(rec.at("m")));
      } else if (op == "delete") {
        auto& v = items[rec.at("wsi_id").get<std::string>()];
        const std::string id = rec.at("id").get<std::string>();
        std::erase_if(v, [&](const Measurement& m) { return m.id == id; });
      }
    }
  }
  for (auto& [wsi, v] : items) {
    auto s = std::make_unique<Shard>();
    s->items = std::move(v);
    shards_[wsi] = std::move(s);
  }
  next_id_ = next;
  compact();
}

MeasurementStore::Shard& MeasurementStore::shard(const std::string& wsi_id) const {
  std::lock_guard lock(shards_mu_);
  auto& s = shards_[wsi_id];
  if (!s) s = std::make_unique<Shard>();
  return *s;
}

void MeasurementStore::append(const std::string& line) {
  std::lock_guard lock(log_mu_);
  std::ofstream out(log_path(), std::ios::app | std::ios::binary);
  out << line << '\n';
  out.flush();
  require(static_cast<bool>(out), ErrorKind::kIo, "cannot append to " + log_path().string());
}

Measurement MeasurementStore::add(const std::string& wsi_id, Point2 p, Point2 a, Point2 b,
                                  double mpp, Panel panel, std::string note) {
  const Distance d = point_to_line_distance(p, a, b, mpp);
  Measurement m;
  m.wsi_id = wsi_id;
  m.panel = panel;
  m.p = p;
  m.a = a;
  m.b = b;
  m.mpp = mpp;
  m.px = d.px;
  m.um = d.um;
  m.note = std::move(note);
  m.timestamp = utc_now();
  Shard& s = shard(wsi_id);
  std::lock_guard lock(s.mu);
  m.id = "m" + std::to_string(next_id_++);
  append(json{{"op", "add"}, {"m", to_json(m)}}.dump());
  s.items.push_back(m);
  return m;
}

std::vector<Measurement> MeasurementStore::list(const std::string& wsi_id) const {
  Shard& s = shard(wsi_id);
  std::vector<Measurement> out;
  {
    std::lock_guard lock(s.mu);
    out = s.items;
  }
  for (Measurement& m : out) {
    const Distance d = point_to_line_distance(m.p, m.a, m.b, m.mpp);
    m.px = d.px;
    m.um = d.um;
  }
  return out;
}

bool MeasurementStore::remove(const std::string& wsi_id, const std::string& id) {
  Shard& s = shard(wsi_id);
  std::lock_guard lock(s.mu);
  const auto it =
      std::find_if(s.items.begin(), s.items.end(), [&](const Measurement& m) { return m.id == id; });
  if (it == s.items.end()) return false;
  append(json{{"op", "delete"}, {"wsi_id", wsi_id}, {"id", id}}.dump());
  s.items.erase(it);
  return true;
}

void MeasurementStore::compact() {
  std::lock_guard shards_lock(shards_mu_);
  std::lock_guard log_lock(log_mu_);
  json all = json::array();
  for (const auto& [wsi, s] : shards_) {
    std::lock_guard lock(s->mu);
    for (const Measurement& m : s->items) all.push_back(to_json(m));
  }
  const json snap{{"next_id", next_id_.load()}, {"measurements", all}};
  const auto tmp = snapshot_path().string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << snap.dump() << '\n';
    out.flush();
    require(static_cast<bool>(out), ErrorKind::kIo, "cannot write " + tmp);
  }
  std::filesystem::rename(tmp, snapshot_path());
  std::ofstream(log_path(), std::ios::binary | std::ios::trunc).flush();
}

// ---------------------------------------------------------------------------
// Service.

struct Service::Server {
  httplib::Server http;
};

std::filesystem::path data_dir_from_env() {
  const char* v = std::getenv("DAEM_DATA_DIR");
  return v ? std::filesystem::path(v) : std::filesystem::path();
}

namespace {

HttpResponse json_response(int status, const json& body) {
  return {status, "application/json", body.dump()};
}

HttpResponse error_response(int status, const std::string& message) {
  return json_response(status, {{"error", message}, {"status", status}});
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : path) {
    if (c == '/') {
      if (!cur.empty()) parts.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) parts.push_back(std::move(cur));
  return parts;
}

int status_for(ErrorKind k) {
  switch (k) {
    case ErrorKind::kMissing:
      return 404;
    case ErrorKind::kValidation:
    case ErrorKind::kShape:
      return 422;
    default:
      return 500;
  }
}

}  // namespace

Service::Service(ServiceOptions options)
    : options_(std::move(options)),
      store_(options_.data_dir / "measurements"),
      workers_(std::clamp<std::ptrdiff_t>(options_.prediction_workers, 1, 64)) {
  require(std::filesystem::is_directory(options_.data_dir), ErrorKind::kMissing,
          "data directory " + options_.data_dir.string() + " does not exist");
  for (const auto& d : std::filesystem::directory_iterator(options_.data_dir)) {
    if (!d.is_directory() || !std::filesystem::exists(d.path() / kManifestName)) continue;
    WsiBag bag = load_bag(d.path());
    const std::string id = bag.wsi_id;
    require(!bags_.count(id), ErrorKind::kValidation, "duplicate wsi_id '" + id + "'");
    bags_.emplace(id, Entry{std::move(bag), d.path()});
  }
  if (!options_.checkpoint.empty()) {
    model_ = load_model(options_.checkpoint);
    model_hash_ = checkpoint_hash(options_.checkpoint);
  }
  server_ = std::make_unique<Server>();
}

Service::~Service() = default;

const Service::Entry& Service::entry(const std::string& id) const {
  const auto it = bags_.find(id);
  if (it == bags_.end()) fail(ErrorKind::kMissing, "unknown wsi '" + id + "'");
  return it->second;
}

std::shared_ptr<const Service::Cached> Service::cached(const std::string& id) {
  const Entry& e = entry(id);
  if (!model_) return nullptr;
  const std::string key = model_hash_ + "|" + id;
  {
    std::lock_guard lock(cache_mu_);
    if (const auto it = cache_.find(key); it != cache_.end()) return it->second;
  }
  workers_.acquire();
  std::shared_ptr<Cached> c;
  try {
    c = std::make_shared<Cached>();
    const BagGraphs graphs = build_bag_graphs(e.bag, model_->config.model.neighbors);
    c->prediction = predict(graphs, model_->params, model_->config.model);
    c->attribution = attribute(e.bag, c->prediction);
  } catch (...) {
    workers_.release();
    throw;
  }
  workers_.release();
  ++computed_;
  std::lock_guard lock(cache_mu_);
  return cache_.try_emplace(key, std::move(c)).first->second;
}

HttpResponse Service::list_wsis() {
  json out = json::array();
  for (const auto& [id, e] : bags_) {
    json item{{"id", id},
              {"patient_id", e.bag.patient_id},
              {"section", to_string(e.bag.section)},
              {"label", to_string(e.bag.label)},
              {"subtype", to_string(e.bag.subtype)},
              {"mpp", e.bag.mpp},
              {"small_patches", e.bag.small.count()},
              {"large_patches", e.bag.large.count()},
              {"cells", e.bag.cells.size()},
              {"prediction", nullptr}};
    if (const auto c = cached(id)) {
      const double p = c->prediction.prob_stas;
      item["prediction"] = {{"prob_stas", p},
                            {"label", to_string(p >= 0.5 ? Label::kStas : Label::kNonStas)}};
    }
    out.push_back(std::move(item));
  }
  return json_response(200, out);
}

HttpResponse Service::thumbnail(const std::string& id,
                                const std::map<std::string, std::string>& q) {
  const Entry& e = entry(id);
  int level = 0;
  if (const auto it = q.find("level"); it != q.end()) {
    try {
      std::size_t used = 0;
      level = std::stoi(it->second, &used);
      if (used != it->second.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      return error_response(400, "level must be an integer");
    }
    if (level < 0 || level > kMaxThumbnailLevel)
      return error_response(400, "level must lie in [0, " +
                                     std::to_string(kMaxThumbnailLevel) + "]");
  }
  const auto path = e.dir / kThumbnailName;
  const Raster base =
      std::filesystem::exists(path) ? read_png(path) : synthesize_thumbnail(e.bag);
  return {200, "image/png", encode_png(downsample_raster(base, level))};
}

HttpResponse Service::cells(const std::string& id) {
  const Entry& e = entry(id);
  json out = json::array();
  for (const CellRecord& c : e.bag.cells)
    out.push_back({{"x", c.x},
                   {"y", c.y},
                   {"type", to_string(c.type)},
                   {"prob", c.prob},
                   {"nucleus_area", c.nucleus_area}});
  return json_response(200, out);
}

HttpResponse Service::heatmap(const std::string& id,
                              const std::map<std::string, std::string>& q, bool scores) {
  entry(id);
  const auto it = q.find("scale");
  const std::string scale = it == q.end() ? "20x" : it->second;
  if (scale != "20x" && scale != "10x")
    return error_response(400, "scale must be 10x or 20x");
  const auto c = cached(id);
  if (!c) return error_response(503, "service started without a checkpoint");
  const AttributionMap& map = map_for_scale(c->attribution, scale);
  const double ds = kThumbnailDownsample;
  if (scores) return {200, "application/json", attribution_json(map, ds)};
  return {200, "image/png", encode_png(render_heatmap(map, std::nullopt, ds))};
}

HttpResponse Service::tumor_region(const std::string& id) {
  const Entry& e = entry(id);
  const TumorRegion r = propose_tumor_region(e.bag.cells);
  json loops = json::array();
  for (const auto& loop : r.boundaries) {
    json pts = json::array();
    for (const Point2& p : loop) pts.push_back(point_json(p));
    loops.push_back(std::move(pts));
  }
  json cand = json::array();
  for (std::size_t i : r.candidates)
    cand.push_back({{"index", i}, {"x", e.bag.cells[i].x}, {"y", e.bag.cells[i].y}});
  return json_response(200, {{"wsi_id", id},
                             {"grid_px", r.grid_px},
                             {"boundaries", loops},
                             {"candidates", cand},
                             {"candidate_count", r.candidates.size()},
                             {"tumor_cells", r.tumor_cells},
                             {"tumor_cells_inside", r.tumor_cells_inside},
                             {"strong_threshold", r.strong_threshold},
                             {"grow_threshold", r.grow_threshold}});
}

HttpResponse Service::post_measurement(const std::string& id, const std::string& body) {
  const Entry& e = entry(id);
  json j;
  try {
    j = json::parse(body);
  } catch (const json::exception& ex) {
    return error_response(400, std::string("malformed JSON body: ") + ex.what());
  }
  if (!j.is_object()) return error_response(400, "body must be a JSON object");
  Point2 p, a, b;
  Panel panel = Panel::kWsi;
  std::string note;
  try {
    p = point_from(j, "p");
    a = point_from(j, "a");
    b = point_from(j, "b");
    if (j.contains("panel")) {
      require(j["panel"].is_string(), ErrorKind::kValidation, "panel must be a string");
      panel = parse_panel(j["panel"].get<std::string>());
    }
    if (j.contains("note")) {
      require(j["note"].is_string(), ErrorKind::kValidation, "note must be a string");
      note = j["note"].get<std::string>();
    }
  } catch (const Error& ex) {
    return error_response(422, ex.what());
  }
  if (a.x == b.x && a.y == b.y) return error_response(422, "line endpoints a and b coincide");
  const Measurement m = store_.add(id, p, a, b, e.bag.mpp, panel, std::move(note));
  return json_response(201, to_json(m));
}

HttpResponse Service::handle(const std::string& method, const std::string& path,
                             const std::map<std::string, std::string>& query,
                             const std::string& body) {
  const auto parts = split_path(path);
  try {
    if (parts.size() == 1 && parts[0] == "wsis") {
      if (method != "GET") return error_response(405, "method not allowed");
      return list_wsis();
    }
    if (parts.size() >= 3 && parts[0] == "wsi") {
      const std::string& id = parts[1];
      const std::string& what = parts[2];
      if (parts.size() == 3 && what == "measurements") {
        entry(id);
        if (method == "POST") return post_measurement(id, body);
        if (method != "GET") return error_response(405, "method not allowed");
        json out = json::array();
        for (const Measurement& m : store_.list(id)) out.push_back(to_json(m));
        return json_response(200, out);
      }
      if (parts.size() == 4 && what == "measurements") {
        entry(id);
        if (method != "DELETE") return error_response(405, "method not allowed");
        if (!store_.remove(id, parts[3]))
          return error_response(404, "unknown measurement '" + parts[3] + "'");
        return json_response(200, {{"deleted", parts[3]}});
      }
      if (method != "GET") return error_response(405, "method not allowed");
      if (parts.size() == 3 && what == "thumbnail") return thumbnail(id, query);
      if (parts.size() == 3 && what == "cells") return cells(id);
      if (parts.size() == 3 && what == "heatmap") return heatmap(id, query, false);
      if (parts.size() == 4 && what == "heatmap" && parts[3] == "scores")
        return heatmap(id, query, true);
      if (parts.size() == 3 && what == "tumor-region") return tumor_region(id);
    }
    return error_response(404, "no route for " + method + " " + path);
  } catch (const Error& e) {
    return error_response(status_for(e.kind()), e.what());
  } catch (const std::exception& e) {
    return error_response(500, e.what());
  }
}

void Service::listen(const std::string& host, int port, const std::function<void(int)>& on_bound) {
  auto route = [this](const httplib::Request& req, httplib::Response& res) {
    std::map<std::string, std::string> q;
    for (const auto& [k, v] : req.params) q.emplace(k, v);
    const HttpResponse r = handle(req.method, req.path, q, req.body);
    res.status = r.status;
    res.set_content(r.body, r.content_type);
    if (req.method == "GET" && r.status == 200)
      res.set_header("Cache-Control", "public, max-age=60");
  };
  auto& http = server_->http;
  http.Get(".*", route);
  http.Post(".*", route);
  http.Delete(".*", route);
  http.Put(".*", route);
  int bound = port;
  if (port == 0) {
    bound = http.bind_to_any_port(host);
  } else if (!http.bind_to_port(host, port)) {
    bound = -1;
  }
  require(bound > 0, ErrorKind::kIo, "cannot bind " + host + ":" + std::to_string(port));
  if (on_bound) on_bound(bound);
  http.listen_after_bind();
}

void Service::stop() { server_->http.stop(); }

}  // namespace daem
