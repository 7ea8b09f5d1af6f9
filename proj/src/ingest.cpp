#include "urbanstep/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "urbanstep/error.hpp"
#include "urbanstep/log.hpp"

namespace urbanstep {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Reads fields of one config object and rejects the keys nobody asked for.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) fail(ErrorCategory::Config, where_ + " must be an object");
  }

  const json* get(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() || it->is_null() ? nullptr : &*it;
  }

  std::string string(const std::string& key, std::optional<std::string> fallback = std::nullopt) {
    const json* v = get(key);
    if (!v) {
      if (fallback) return *fallback;
      fail(ErrorCategory::Config, where_ + "." + key + " is required");
    }
    if (!v->is_string()) fail(ErrorCategory::Config, where_ + "." + key + " must be a string");
    return v->get<std::string>();
  }

  double number(const std::string& key, double fallback) {
    const json* v = get(key);
    if (!v) return fallback;
    if (!v->is_number()) fail(ErrorCategory::Config, where_ + "." + key + " must be a number");
    return v->get<double>();
  }

  std::string path(const std::string& key) const { return where_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.contains(it.key())) fail(ErrorCategory::Config, "unknown key " + where_ + "." + it.key());
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

fs::path existing(const fs::path& base, const std::string& rel, const std::string& what) {
  fs::path p = fs::path(rel).is_absolute() ? fs::path(rel) : base / rel;
  if (!fs::exists(p)) fail(ErrorCategory::Config, what + " does not exist: " + p.string());
  return p;
}

std::optional<std::string> normalize_crs(const std::string& name) {
  for (const char* prefix : {"urn:ogc:def:crs:EPSG::", "urn:ogc:def:crs:EPSG:", "EPSG:", "epsg:"}) {
    if (name.starts_with(prefix)) return "EPSG:" + name.substr(std::string_view(prefix).size());
  }
  if (name == "urn:ogc:def:crs:OGC:1.3:CRS84" || name == "urn:ogc:def:crs:OGC::CRS84") return "EPSG:4326";
  return name;
}

}  // namespace

GeoReference CityProfile::geo_reference() const {
  if (geo_anchor) return GeoReference::anchored(geo_anchor->projected, geo_anchor->geographic);
  return GeoReference::from_crs(crs);
}

CityProfile parse_profile(const json& j, const fs::path& base_dir) {
  CityProfile p;
  ObjectReader root(j, "config");
  p.city = root.string("city");
  p.crs = root.string("crs");

  if (const json* layers = root.get("layers")) {
    ObjectReader r(*layers, "config.layers");
    auto layer = [&](const char* key, std::optional<fs::path>& out) {
      if (r.get(key)) out = existing(base_dir, r.string(key), "layer " + std::string(key));
    };
    layer("water", p.layers.water);
    layer("railways", p.layers.railways);
    layer("major_roads", p.layers.major_roads);
    layer("minor_roads", p.layers.minor_roads);
    layer("roads", p.layers.roads);
    layer("land_use", p.layers.land_use);
    layer("buildings", p.layers.buildings);
    r.finish();
  }

  if (const json* lu = root.get("land_use")) {
    ObjectReader r(*lu, "config.land_use");
    p.land_use_attribute = r.string("attribute", p.land_use_attribute);
    if (const json* m = r.get("mapping")) {
      if (!m->is_object()) fail(ErrorCategory::Config, "config.land_use.mapping must be an object");
      for (auto it = m->begin(); it != m->end(); ++it) {
        if (!it->is_string()) fail(ErrorCategory::Config, "land-use mapping values must be category names");
        const auto cat = land_use_from_name(it->get<std::string>());
        if (!cat) {
          fail(ErrorCategory::Config, "land-use mapping '" + it.key() + "' -> '" + it->get<std::string>() +
                                          "' is not one of Residential, Commercial, Manufacturing, Park, MixedUse");
        }
        p.land_use_mapping[it.key()] = *cat;
      }
    }
    r.finish();
  }
  if (p.layers.land_use && p.land_use_mapping.empty()) {
    fail(ErrorCategory::Config, "config.land_use.mapping is required when a land_use layer is configured");
  }

  if (const json* roads = root.get("roads")) {
    ObjectReader r(*roads, "config.roads");
    p.road_attribute = r.string("attribute", p.road_attribute);
    if (const json* v = r.get("major_values")) {
      if (!v->is_array() || !std::ranges::all_of(*v, [](const json& e) { return e.is_string(); })) {
        fail(ErrorCategory::Config, "config.roads.major_values must be an array of strings");
      }
      p.major_road_values = v->get<std::vector<std::string>>();
    }
    r.finish();
  }

  if (const json* b = root.get("buildings")) {
    ObjectReader r(*b, "config.buildings");
    p.height_attribute = r.string("height_attribute", p.height_attribute);
    r.finish();
  }

  if (const json* e = root.get("extent")) {
    if (!e->is_array() || e->size() != 4 || !std::ranges::all_of(*e, [](const json& v) { return v.is_number(); })) {
      fail(ErrorCategory::Config, "config.extent must be [min_x, min_y, max_x, max_y]");
    }
    p.extent = BBox{(*e)[0].get<double>(), (*e)[1].get<double>(), (*e)[2].get<double>(), (*e)[3].get<double>()};
    if (p.extent->width() <= 0 || p.extent->height() <= 0) fail(ErrorCategory::Config, "config.extent is empty");
  }

  if (const json* rs = root.get("render")) {
    ObjectReader r(*rs, "config.render");
    p.render.image_size = static_cast<int>(r.number("image_size", p.render.image_size));
    p.render.major_road_width = r.number("major_road_width", p.render.major_road_width);
    p.render.minor_road_width = r.number("minor_road_width", p.render.minor_road_width);
    p.render.railway_width = r.number("railway_width", p.render.railway_width);
    r.finish();
    try {
      p.render.validate(ImageKind::Stage2Plan);
    } catch (const Error& e) {
      fail(ErrorCategory::Config, std::string("config.render: ") + e.what());
    }
  }

  if (const json* ts = root.get("tile_source")) {
    ObjectReader r(*ts, "config.tile_source");
    TileSource src;
    src.url_template = r.string("url_template");
    src.zoom = static_cast<int>(r.number("zoom", src.zoom));
    src.api_key_env = r.string("api_key_env", "");
    r.finish();
    src.validate();
    p.tile_source = src;
  }

  if (const json* a = root.get("geo_anchor")) {
    ObjectReader r(*a, "config.geo_anchor");
    GeoAnchor g;
    auto required = [&](const char* key) {
      if (!r.get(key)) fail(ErrorCategory::Config, r.path(key) + " is required");
      return r.number(key, 0.0);
    };
    g.projected = {required("x"), required("y")};
    g.geographic = {required("lon"), required("lat")};
    r.finish();
    p.geo_anchor = g;
  }

  p.cache_dir = base_dir / root.string("cache_dir", "cache");

  if (const json* b = root.get("backend")) {
    ObjectReader r(*b, "config.backend");
    if (r.get("endpoint")) p.backend_endpoint = r.string("endpoint");
    if (r.get("model_id")) p.model_id = r.string("model_id");
    r.finish();
  }

  if (const json* s = root.get("split")) {
    ObjectReader r(*s, "config.split");
    p.test_ratio = r.number("test_ratio", p.test_ratio);
    if (const json* seed = r.get("seed")) {
      if (!seed->is_number_unsigned()) fail(ErrorCategory::Config, "config.split.seed must be a non-negative integer");
      p.seed = seed->get<std::uint64_t>();
    }
    r.finish();
    if (!(p.test_ratio > 0.0 && p.test_ratio < 1.0)) fail(ErrorCategory::Config, "config.split.test_ratio must lie in (0, 1)");
  }

  root.finish();
  return p;
}

CityProfile load_profile(const fs::path& path) {
  if (!fs::exists(path)) fail(ErrorCategory::Config, "config file does not exist: " + path.string());
  std::ifstream in(path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) fail(ErrorCategory::Config, "config file is not valid JSON: " + path.string());
  CityProfile p = parse_profile(j, fs::absolute(path).parent_path());
  p.source = path;
  return p;
}

// ---- GeoJSON ----

namespace {

Point to_point(const json& c) {
  if (!c.is_array() || c.size() < 2 || !c[0].is_number() || !c[1].is_number()) {
    throw ParseError(0, "coordinate must be [x, y]");
  }
  return {c[0].get<double>(), c[1].get<double>()};
}

std::vector<Point> to_points(const json& arr) {
  if (!arr.is_array()) throw ParseError(0, "coordinates must be an array");
  std::vector<Point> pts;
  pts.reserve(arr.size());
  for (const auto& c : arr) pts.push_back(to_point(c));
  return pts;
}

Ring to_ring(const json& arr) {
  Ring r = to_points(arr);
  if (r.size() > 1 && r.front() == r.back()) r.pop_back();
  return r;
}

Polygon to_polygon(const json& rings) {
  if (!rings.is_array() || rings.empty()) throw ParseError(0, "polygon needs at least one ring");
  Polygon p;
  p.outer = to_ring(rings[0]);
  for (std::size_t i = 1; i < rings.size(); ++i) p.holes.push_back(to_ring(rings[i]));
  return p;
}

void read_geometry(const json& g, GeoJsonFeature& f) {
  if (g.is_null()) return;
  const std::string type = g.at("type").get<std::string>();
  if (type == "GeometryCollection") {
    for (const auto& sub : g.at("geometries")) read_geometry(sub, f);
    return;
  }
  const json& c = g.at("coordinates");
  if (type == "Polygon") {
    f.polygons.push_back(to_polygon(c));
  } else if (type == "MultiPolygon") {
    for (const auto& p : c) f.polygons.push_back(to_polygon(p));
  } else if (type == "LineString") {
    f.lines.push_back(to_points(c));
  } else if (type == "MultiLineString") {
    for (const auto& l : c) f.lines.push_back(to_points(l));
  } else if (type != "Point" && type != "MultiPoint") {
    throw ParseError(0, "unsupported geometry type " + type);
  }
}

// Property as a string key for mappings; integers print without decimals.
std::optional<std::string> property_key(const json& props, const std::string& attr) {
  if (!props.is_object()) return std::nullopt;
  auto it = props.find(attr);
  if (it == props.end() || it->is_null()) return std::nullopt;
  if (it->is_string()) return it->get<std::string>();
  if (it->is_number_integer()) return std::to_string(it->get<long long>());
  if (it->is_number()) return it->dump();
  if (it->is_boolean()) return it->get<bool>() ? "true" : "false";
  return std::nullopt;
}

std::optional<double> property_number(const json& props, const std::string& attr) {
  if (!props.is_object()) return std::nullopt;
  auto it = props.find(attr);
  if (it == props.end() || it->is_null()) return std::nullopt;
  if (it->is_number()) return it->get<double>();
  if (it->is_string()) {
    const std::string s = it->get<std::string>();
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() && *end == '\0' && std::isfinite(v)) return v;
  }
  return std::nullopt;
}

}  // namespace

GeoJsonLayer parse_geojson(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ParseError(0, "not valid JSON");
  if (!j.is_object() || j.value("type", "") != "FeatureCollection") throw ParseError(0, "expected a FeatureCollection");
  GeoJsonLayer layer;
  if (auto crs = j.find("crs"); crs != j.end() && crs->is_object()) {
    const auto& props = crs->value("properties", json::object());
    if (props.contains("name") && props["name"].is_string()) layer.crs = normalize_crs(props["name"].get<std::string>());
  }
  const auto& features = j.value("features", json::array());
  for (std::size_t i = 0; i < features.size(); ++i) {
    GeoJsonFeature f;
    try {
      read_geometry(features[i].value("geometry", json()), f);
    } catch (const ParseError& e) {
      throw ParseError(i, std::string("feature ") + std::to_string(i) + ": " + e.what());
    } catch (const json::exception& e) {
      throw ParseError(i, std::string("feature ") + std::to_string(i) + ": " + e.what());
    }
    f.properties = features[i].value("properties", json::object());
    layer.features.push_back(std::move(f));
  }
  return layer;
}

GeoJsonLayer read_geojson(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCategory::Io, "cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_geojson(ss.str());
  } catch (const ParseError& e) {
    throw ParseError(e.position(), path.string() + ": " + e.what());
  }
}

json IngestReport::to_json() const {
  return {{"water", water},
          {"railways", railways},
          {"major_roads", major_roads},
          {"minor_roads", minor_roads},
          {"land_use", land_use},
          {"buildings", buildings},
          {"unmapped_land_use", unmapped_land_use},
          {"missing_heights", missing_heights},
          {"unmapped_values", unmapped_values}};
}

CityLayers load_city_layers(const CityProfile& profile, IngestReport* report) {
  IngestReport local;
  IngestReport& rep = report ? *report : local;
  CityLayers layers;
  layers.crs = profile.crs;
  const auto expected = normalize_crs(profile.crs);

  auto load = [&](const fs::path& path) {
    GeoJsonLayer l = read_geojson(path);
    if (l.crs && *l.crs != *expected) {
      fail(ErrorCategory::Config, path.string() + " declares CRS " + *l.crs + " but the profile uses " + profile.crs +
                                      "; reproject the layer first");
    }
    return l;
  };

  if (profile.layers.water) {
    for (auto& f : load(*profile.layers.water).features) {
      for (auto& p : f.polygons) layers.water.push_back(std::move(p));
    }
  }
  if (profile.layers.railways) {
    for (auto& f : load(*profile.layers.railways).features) {
      for (auto& l : f.lines) layers.railways.push_back(std::move(l));
    }
  }
  if (profile.layers.major_roads) {
    for (auto& f : load(*profile.layers.major_roads).features) {
      for (auto& l : f.lines) layers.major_roads.push_back(std::move(l));
    }
  }
  if (profile.layers.minor_roads) {
    for (auto& f : load(*profile.layers.minor_roads).features) {
      for (auto& l : f.lines) layers.minor_roads.push_back(std::move(l));
    }
  }
  if (profile.layers.roads) {
    const std::set<std::string> major(profile.major_road_values.begin(), profile.major_road_values.end());
    for (auto& f : load(*profile.layers.roads).features) {
      const auto tag = property_key(f.properties, profile.road_attribute);
      auto& dst = tag && major.contains(*tag) ? layers.major_roads : layers.minor_roads;
      for (auto& l : f.lines) dst.push_back(std::move(l));
    }
  }
  if (profile.layers.land_use) {
    for (auto& f : load(*profile.layers.land_use).features) {
      const auto value = property_key(f.properties, profile.land_use_attribute);
      auto it = value ? profile.land_use_mapping.find(*value) : profile.land_use_mapping.end();
      if (it == profile.land_use_mapping.end()) {
        ++rep.unmapped_land_use;
        ++rep.unmapped_values[value.value_or("<missing>")];
        continue;
      }
      for (auto& p : f.polygons) layers.land_use.push_back({std::move(p), it->second});
    }
  }
  if (profile.layers.buildings) {
    for (auto& f : load(*profile.layers.buildings).features) {
      const auto h = property_number(f.properties, profile.height_attribute);
      if (!h && !f.polygons.empty()) ++rep.missing_heights;
      for (auto& p : f.polygons) layers.buildings.push_back({std::move(p), h});
    }
  }

  rep.water = layers.water.size();
  rep.railways = layers.railways.size();
  rep.major_roads = layers.major_roads.size();
  rep.minor_roads = layers.minor_roads.size();
  rep.land_use = layers.land_use.size();
  rep.buildings = layers.buildings.size();
  if (rep.unmapped_land_use > 0) {
    log_warning(std::to_string(rep.unmapped_land_use) + " land-use feature(s) had no category mapping and were skipped");
  }
  return layers;
}

std::vector<double> building_heights(const CityLayers& layers) {
  std::vector<double> h;
  for (const auto& b : layers.buildings) {
    if (b.height) h.push_back(*b.height);
  }
  return h;
}

BBox layers_extent(const CityLayers& layers) {
  BBox box{1e300, 1e300, -1e300, -1e300};
  auto add = [&](const std::vector<Point>& pts) {
    for (const auto& p : pts) {
      box.min_x = std::min(box.min_x, p.x);
      box.min_y = std::min(box.min_y, p.y);
      box.max_x = std::max(box.max_x, p.x);
      box.max_y = std::max(box.max_y, p.y);
    }
  };
  for (const auto& p : layers.water) add(p.outer);
  for (const auto& l : layers.railways) add(l);
  for (const auto& l : layers.major_roads) add(l);
  for (const auto& l : layers.minor_roads) add(l);
  for (const auto& p : layers.land_use) add(p.shape.outer);
  for (const auto& b : layers.buildings) add(b.footprint.outer);
  if (box.min_x > box.max_x) fail(ErrorCategory::Validation, "layers contain no coordinates");
  return box;
}

}  // namespace urbanstep
