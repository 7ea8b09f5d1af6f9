#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "urbanstep/rasterizer.hpp"
#include "urbanstep/satellite.hpp"
#include "urbanstep/tiler.hpp"

namespace urbanstep {

struct LayerPaths {
  std::optional<std::filesystem::path> water;
  std::optional<std::filesystem::path> railways;
  std::optional<std::filesystem::path> major_roads;
  std::optional<std::filesystem::path> minor_roads;
  // Mixed road layer split by `road_attribute` against the major allowlist.
  std::optional<std::filesystem::path> roads;
  std::optional<std::filesystem::path> land_use;
  std::optional<std::filesystem::path> buildings;
};

struct GeoAnchor {
  Point projected;
  LonLat geographic;
};

// One city's configuration. Relative paths resolve against the config
// file's directory; every referenced layer must exist at load time.
struct CityProfile {
  std::filesystem::path source;
  std::string city;
  std::string crs;
  LayerPaths layers;
  std::string land_use_attribute = "landuse";
  std::map<std::string, LandUseCategory> land_use_mapping;
  std::string road_attribute = "highway";
  std::vector<std::string> major_road_values = {"motorway", "motorway_link", "trunk", "trunk_link", "primary",
                                                "primary_link"};
  std::string height_attribute = "height";
  std::optional<BBox> extent;
  RenderSpec render;
  std::optional<TileSource> tile_source;
  std::optional<GeoAnchor> geo_anchor;
  std::filesystem::path cache_dir;
  std::optional<std::string> backend_endpoint;
  std::optional<std::string> model_id;
  double test_ratio = 0.1;
  std::uint64_t seed = 0;

  // Anchor when configured, otherwise derived from the CRS.
  GeoReference geo_reference() const;
};

// Throws Config on unknown keys, wrong types, missing required fields,
// unknown land-use categories or missing files.
CityProfile parse_profile(const nlohmann::json& j, const std::filesystem::path& base_dir);
CityProfile load_profile(const std::filesystem::path& path);

struct GeoJsonFeature {
  std::vector<Polygon> polygons;
  std::vector<LineString> lines;
  nlohmann::json properties;
};

struct GeoJsonLayer {
  std::optional<std::string> crs;  // normalized to "EPSG:n" when recognizable
  std::vector<GeoJsonFeature> features;
};

// FeatureCollection with Polygon, MultiPolygon, LineString,
// MultiLineString and GeometryCollection members; points are ignored.
// Throws Parse on malformed input.
GeoJsonLayer parse_geojson(const std::string& text);
GeoJsonLayer read_geojson(const std::filesystem::path& path);

struct IngestReport {
  std::size_t water = 0;
  std::size_t railways = 0;
  std::size_t major_roads = 0;
  std::size_t minor_roads = 0;
  std::size_t land_use = 0;
  std::size_t buildings = 0;
  std::size_t unmapped_land_use = 0;  // features whose value has no mapping
  std::size_t missing_heights = 0;
  std::map<std::string, std::size_t> unmapped_values;

  nlohmann::json to_json() const;
};

// Loads and maps every configured layer. A layer whose GeoJSON names a
// different CRS than the profile is rejected (Config).
CityLayers load_city_layers(const CityProfile& profile, IngestReport* report = nullptr);

std::vector<double> building_heights(const CityLayers& layers);
// Bounding box of every coordinate; throws Validation when there is none.
BBox layers_extent(const CityLayers& layers);

}  // namespace urbanstep
