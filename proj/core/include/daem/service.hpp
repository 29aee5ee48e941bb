// Copyright 2026 The DAEM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <vector>

#include "daem/attribution.hpp"
#include "daem/dataset.hpp"
#include "daem/graph.hpp"
#include "daem/image.hpp"
#include "daem/trainer.hpp"

namespace daem {

// ---------------------------------------------------------------------------
// Thumbnails.

inline constexpr const char* kThumbnailName = "thumbnail.png";
/// Level-0 pixels per thumbnail pixel at level 0; level L halves again L times.
inline constexpr int kThumbnailDownsample = 16;
inline constexpr int kMaxThumbnailLevel = 8;

/// Cell-density stand-in for a slide thumbnail: tissue tiles tinted, cells
/// darkening their pixel. Deterministic.
Raster synthesize_thumbnail(const WsiBag& bag);

/// Box-averages 2^level × 2^level blocks (edge blocks are partial).
Raster downsample_raster(const Raster& r, int level);

/// Writes `dir/thumbnail.png` when it does not exist. Returns true if written.
bool ensure_thumbnail(const WsiBag& bag, const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Measurements.

enum class Panel { kWsi, kTme };
std::string_view to_string(Panel p);
Panel parse_panel(std::string_view s);

struct Measurement {
  std::string id;
  std::string wsi_id;
  Panel panel = Panel::kWsi;
  Point2 p, a, b;  // level-0 pixels
  double mpp = 0.0;
  double px = 0.0;
  double um = 0.0;
  std::string note;
  std::string timestamp;  // UTC, ISO-8601
};

std::string measurement_json(const Measurement& m);

/// Append-only NDJSON log plus a compacted snapshot. Opening replays
/// snapshot + log and compacts. Writes to one WSI are serialized; the log
/// append itself is serialized across WSIs.
class MeasurementStore {
 public:
  explicit MeasurementStore(std::filesystem::path dir);

  /// Distances are computed here from the endpoints and `mpp`.
  Measurement add(const std::string& wsi_id, Point2 p, Point2 a, Point2 b, double mpp,
                  Panel panel = Panel::kWsi, std::string note = {});
  /// Distances are recomputed from the stored endpoints on every read.
  std::vector<Measurement> list(const std::string& wsi_id) const;
  bool remove(const std::string& wsi_id, const std::string& id);
  /// Rewrites the snapshot and truncates the log.
  void compact();

  std::filesystem::path log_path() const { return dir_ / "measurements.ndjson"; }
  std::filesystem::path snapshot_path() const { return dir_ / "measurements.snapshot.json"; }

 private:
  struct Shard {
    mutable std::mutex mu;
    std::vector<Measurement> items;
  };
  Shard& shard(const std::string& wsi_id) const;
  void append(const std::string& line);

  std::filesystem::path dir_;
  mutable std::mutex shards_mu_;
  mutable std::map<std::string, std::unique_ptr<Shard>> shards_;
  std::mutex log_mu_;
  std::atomic<std::uint64_t> next_id_{1};
};

// ---------------------------------------------------------------------------
// HTTP service.

struct ServiceOptions {
  std::filesystem::path data_dir;    // cohort directory; measurements go to data_dir/measurements
  std::filesystem::path checkpoint;  // optional
  std::ptrdiff_t prediction_workers = 2;
};

struct HttpResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

/// Route handling is independent of the socket layer so it can be exercised
/// in-process; `listen` wires it to an HTTP server.
class Service {
 public:
  explicit Service(ServiceOptions options);
  ~Service();

  HttpResponse handle(const std::string& method, const std::string& path,
                      const std::map<std::string, std::string>& query,
                      const std::string& body);

  /// Binds (port 0 = any free port) and serves until stop(). Returns the
  /// bound port through `on_bound` before blocking.
  void listen(const std::string& host, int port,
              const std::function<void(int)>& on_bound = {});
  void stop();

  std::size_t bag_count() const { return bags_.size(); }
  std::size_t predictions_computed() const { return computed_.load(); }

 private:
  struct Entry {
    WsiBag bag;
    std::filesystem::path dir;
  };
  struct Cached {
    Prediction prediction;
    Attribution attribution;
  };

  const Entry& entry(const std::string& id) const;
  std::shared_ptr<const Cached> cached(const std::string& id);

  HttpResponse list_wsis();
  HttpResponse thumbnail(const std::string& id, const std::map<std::string, std::string>& q);
  HttpResponse cells(const std::string& id);
  HttpResponse heatmap(const std::string& id, const std::map<std::string, std::string>& q,
                       bool scores);
  HttpResponse tumor_region(const std::string& id);
  HttpResponse post_measurement(const std::string& id, const std::string& body);

  ServiceOptions options_;
  std::map<std::string, Entry> bags_;
  std::optional<ModelCheckpoint> model_;
  std::string model_hash_;
  MeasurementStore store_;

  std::mutex cache_mu_;
  std::map<std::string, std::shared_ptr<const Cached>> cache_;  // key: hash|wsi
  std::counting_semaphore<64> workers_;
  std::atomic<std::size_t> computed_{0};

  struct Server;
  std::unique_ptr<Server> server_;
};

/// Data directory from DAEM_DATA_DIR, or empty.
std::filesystem::path data_dir_from_env();

}  // namespace daem
