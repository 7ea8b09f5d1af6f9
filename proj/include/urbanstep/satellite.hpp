#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "urbanstep/core/types.hpp"
#include "urbanstep/tiler.hpp"

namespace urbanstep {

struct LonLat {
  double lon = 0.0;
  double lat = 0.0;
};

// Projected meters -> WGS84 degrees. Supports EPSG:3857, UTM zones
// (EPSG:326xx north, 327xx south) and, for any other CRS, a local anchor
// that maps one projected point to one geographic point with an
// equirectangular approximation.
class GeoReference {
 public:
  static GeoReference web_mercator();
  static GeoReference utm(int zone, bool north);
  static GeoReference anchored(Point anchor, LonLat at);
  // Throws Config for CRS strings it cannot invert.
  static GeoReference from_crs(const std::string& crs);

  LonLat to_lonlat(Point p) const;
  const std::string& description() const { return description_; }

 private:
  enum class Kind { WebMercator, Utm, Anchored };
  Kind kind_ = Kind::WebMercator;
  int zone_ = 0;
  bool north_ = true;
  Point anchor_;
  LonLat anchor_at_;
  std::string description_;
};

// XYZ slippy-map source. `url_template` must contain {z}, {x} and {y}; a
// {key} placeholder is filled from the environment variable `api_key_env`.
struct TileSource {
  std::string url_template;
  int zoom = 17;
  std::string api_key_env;

  // Throws Config on missing placeholders or a zoom outside [0, 22].
  void validate() const;
  // Stable short hash of the template, used in cache paths.
  std::string cache_key() const;
};

struct TileXY {
  int z = 0;
  int x = 0;
  int y = 0;

  bool operator==(const TileXY&) const = default;
};

// Global Web-Mercator pixel coordinates for 1x1 tiles (multiply by tile size).
double mercator_x(double lon, int zoom);
double mercator_y(double lat, int zoom);

// Tiles whose extent intersects the cell footprint, row-major.
std::vector<TileXY> covering_tiles(const GridCell& cell, const GeoReference& geo, int zoom);

struct FetchOptions {
  std::filesystem::path cache_dir;  // empty disables caching
  int image_size = kDefaultImageSize;
  int max_in_flight = 8;
  int attempts = 3;
  std::chrono::milliseconds backoff{200};  // doubled after each failed attempt
  std::chrono::milliseconds timeout{std::chrono::seconds(30)};
};

// Thread-safe. Requests across concurrent fetch() calls share the in-flight
// limit.
class SatelliteFetcher {
 public:
  // Throws Config when the source is invalid or its API key variable is unset.
  SatelliteFetcher(TileSource source, GeoReference geo, FetchOptions options = {});
  ~SatelliteFetcher();

  // Mosaic of the covering tiles, bilinearly resampled onto the cell's
  // footprint. Served from the cache when present.
  CanonicalImage fetch(const GridCell& cell);

  std::filesystem::path cache_path(const GridCell& cell) const;
  // Upstream HTTP attempts made so far.
  std::uint64_t request_count() const { return requests_.load(); }

 private:
  std::vector<std::uint8_t> get_tile(const TileXY& t);

  struct Gate;
  TileSource source_;
  GeoReference geo_;
  FetchOptions options_;
  std::string api_key_;
  std::unique_ptr<Gate> gate_;
  std::atomic<std::uint64_t> requests_{0};
};

}  // namespace urbanstep
