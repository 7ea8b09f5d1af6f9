#include "urbanstep/satellite.hpp"

#include <algorithm>
#include <cmath>
#include <condition_variable>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <numbers>
#include <thread>

#include "httplib.h"
#include "urbanstep/core/codec.hpp"
#include "urbanstep/error.hpp"

namespace urbanstep {

namespace {

constexpr double kWgs84A = 6378137.0;
constexpr double kWgs84F = 1.0 / 298.257223563;
constexpr double kUtmK0 = 0.9996;
constexpr double kDeg = 180.0 / std::numbers::pi;

LonLat utm_inverse(double easting, double northing, int zone, bool north) {
  const double e2 = kWgs84F * (2.0 - kWgs84F);
  const double ep2 = e2 / (1.0 - e2);
  const double x = easting - 500000.0;
  const double y = north ? northing : northing - 10000000.0;
  const double m = y / kUtmK0;
  const double mu = m / (kWgs84A * (1.0 - e2 / 4.0 - 3.0 * e2 * e2 / 64.0 - 5.0 * e2 * e2 * e2 / 256.0));
  const double s = std::sqrt(1.0 - e2);
  const double e1 = (1.0 - s) / (1.0 + s);
  const double phi1 = mu + (3.0 * e1 / 2.0 - 27.0 * std::pow(e1, 3) / 32.0) * std::sin(2.0 * mu) +
                      (21.0 * e1 * e1 / 16.0 - 55.0 * std::pow(e1, 4) / 32.0) * std::sin(4.0 * mu) +
                      (151.0 * std::pow(e1, 3) / 96.0) * std::sin(6.0 * mu) +
                      (1097.0 * std::pow(e1, 4) / 512.0) * std::sin(8.0 * mu);
  const double sin1 = std::sin(phi1);
  const double cos1 = std::cos(phi1);
  const double tan1 = std::tan(phi1);
  const double c1 = ep2 * cos1 * cos1;
  const double t1 = tan1 * tan1;
  const double w = 1.0 - e2 * sin1 * sin1;
  const double n1 = kWgs84A / std::sqrt(w);
  const double r1 = kWgs84A * (1.0 - e2) / std::pow(w, 1.5);
  const double d = x / (n1 * kUtmK0);
  const double lat =
      phi1 - (n1 * tan1 / r1) *
                 (d * d / 2.0 - (5.0 + 3.0 * t1 + 10.0 * c1 - 4.0 * c1 * c1 - 9.0 * ep2) * std::pow(d, 4) / 24.0 +
                  (61.0 + 90.0 * t1 + 298.0 * c1 + 45.0 * t1 * t1 - 252.0 * ep2 - 3.0 * c1 * c1) * std::pow(d, 6) /
                      720.0);
  const double lon0 = (zone - 1) * 6.0 - 180.0 + 3.0;
  const double dlon = (d - (1.0 + 2.0 * t1 + c1) * std::pow(d, 3) / 6.0 +
                       (5.0 - 2.0 * c1 + 28.0 * t1 - 3.0 * c1 * c1 + 8.0 * ep2 + 24.0 * t1 * t1) * std::pow(d, 5) /
                           120.0) /
                      cos1;
  return {lon0 + dlon * kDeg, lat * kDeg};
}

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
  return s;
}

}  // namespace

GeoReference GeoReference::web_mercator() {
  GeoReference g;
  g.kind_ = Kind::WebMercator;
  g.description_ = "EPSG:3857";
  return g;
}

GeoReference GeoReference::utm(int zone, bool north) {
  if (zone < 1 || zone > 60) fail(ErrorCategory::Config, "UTM zone must lie in [1, 60]");
  GeoReference g;
  g.kind_ = Kind::Utm;
  g.zone_ = zone;
  g.north_ = north;
  g.description_ = "UTM " + std::to_string(zone) + (north ? "N" : "S");
  return g;
}

GeoReference GeoReference::anchored(Point anchor, LonLat at) {
  GeoReference g;
  g.kind_ = Kind::Anchored;
  g.anchor_ = anchor;
  g.anchor_at_ = at;
  g.description_ = "local anchor";
  return g;
}

GeoReference GeoReference::from_crs(const std::string& crs) {
  std::string code = crs;
  for (const char* prefix : {"EPSG:", "epsg:", "urn:ogc:def:crs:EPSG::"}) {
    if (code.starts_with(prefix)) code = code.substr(std::string_view(prefix).size());
  }
  if (code == "3857" || code == "900913") return web_mercator();
  if (code.size() == 5 && std::ranges::all_of(code, [](char c) { return c >= '0' && c <= '9'; })) {
    const int n = std::stoi(code);
    if (n >= 32601 && n <= 32660) return utm(n - 32600, true);
    if (n >= 32701 && n <= 32760) return utm(n - 32700, false);
  }
  fail(ErrorCategory::Config, "cannot derive geographic coordinates from CRS '" + crs +
                                  "'; use EPSG:3857, a UTM EPSG code, or configure a geo anchor");
}

LonLat GeoReference::to_lonlat(Point p) const {
  switch (kind_) {
    case Kind::WebMercator:
      return {p.x / kWgs84A * kDeg, (2.0 * std::atan(std::exp(p.y / kWgs84A)) - std::numbers::pi / 2.0) * kDeg};
    case Kind::Utm:
      return utm_inverse(p.x, p.y, zone_, north_);
    case Kind::Anchored: {
      const double m_per_deg = kWgs84A / kDeg;
      const double lat = anchor_at_.lat + (p.y - anchor_.y) / m_per_deg;
      const double lon = anchor_at_.lon + (p.x - anchor_.x) / (m_per_deg * std::cos(anchor_at_.lat / kDeg));
      return {lon, lat};
    }
  }
  return {};
}

void TileSource::validate() const {
  for (const char* ph : {"{z}", "{x}", "{y}"}) {
    if (url_template.find(ph) == std::string::npos) {
      fail(ErrorCategory::Config, std::string("tile URL template lacks ") + ph);
    }
  }
  if (!url_template.starts_with("http://") && !url_template.starts_with("https://")) {
    fail(ErrorCategory::Config, "tile URL template must be http(s)");
  }
  if (zoom < 0 || zoom > 22) fail(ErrorCategory::Config, "tile zoom must lie in [0, 22]");
  if (url_template.find("{key}") != std::string::npos && api_key_env.empty()) {
    fail(ErrorCategory::Config, "tile URL template uses {key} but no api_key_env is configured");
  }
}

std::string TileSource::cache_key() const {
  const std::string h = sha256_hex(std::span(reinterpret_cast<const std::uint8_t*>(url_template.data()),
                                             url_template.size()));
  return h.substr(0, 16);
}

double mercator_x(double lon, int zoom) { return (lon + 180.0) / 360.0 * std::ldexp(1.0, zoom); }

double mercator_y(double lat, int zoom) {
  const double phi = lat / kDeg;
  return (1.0 - std::asinh(std::tan(phi)) / std::numbers::pi) / 2.0 * std::ldexp(1.0, zoom);
}

std::vector<TileXY> covering_tiles(const GridCell& cell, const GeoReference& geo, int zoom) {
  // Walk the footprint boundary: under UTM the cell is not a lon/lat rectangle.
  const BBox fp = cell.footprint();
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  constexpr int kSteps = 16;
  for (int i = 0; i <= kSteps; ++i) {
    const double t = static_cast<double>(i) / kSteps;
    for (Point p : {Point{fp.min_x + t * fp.width(), fp.min_y}, Point{fp.min_x + t * fp.width(), fp.max_y},
                    Point{fp.min_x, fp.min_y + t * fp.height()}, Point{fp.max_x, fp.min_y + t * fp.height()}}) {
      const LonLat ll = geo.to_lonlat(p);
      const double mx = mercator_x(ll.lon, zoom);
      const double my = mercator_y(ll.lat, zoom);
      x0 = std::min(x0, mx);
      x1 = std::max(x1, mx);
      y0 = std::min(y0, my);
      y1 = std::max(y1, my);
    }
  }
  const int limit = (1 << zoom) - 1;
  auto lo = [&](double v) { return std::clamp(static_cast<int>(std::floor(v)), 0, limit); };
  auto hi = [&](double v) { return std::clamp(static_cast<int>(std::ceil(v)) - 1, 0, limit); };
  std::vector<TileXY> tiles;
  for (int ty = lo(y0); ty <= std::max(lo(y0), hi(y1)); ++ty) {
    for (int tx = lo(x0); tx <= std::max(lo(x0), hi(x1)); ++tx) tiles.push_back({zoom, tx, ty});
  }
  return tiles;
}

struct SatelliteFetcher::Gate {
  std::mutex mutex;
  std::condition_variable cv;
  int available = 0;

  void acquire() {
    std::unique_lock lock(mutex);
    cv.wait(lock, [&] { return available > 0; });
    --available;
  }
  void release() {
    {
      std::lock_guard lock(mutex);
      ++available;
    }
    cv.notify_one();
  }
};

SatelliteFetcher::SatelliteFetcher(TileSource source, GeoReference geo, FetchOptions options)
    : source_(std::move(source)), geo_(std::move(geo)), options_(std::move(options)), gate_(std::make_unique<Gate>()) {
  source_.validate();
  if (!source_.api_key_env.empty()) {
    const char* key = std::getenv(source_.api_key_env.c_str());
    if (key == nullptr || *key == '\0') {
      fail(ErrorCategory::Config, "environment variable " + source_.api_key_env + " (tile API key) is not set");
    }
    api_key_ = key;
  }
  if (options_.max_in_flight < 1) fail(ErrorCategory::Config, "max_in_flight must be at least 1");
  if (options_.attempts < 1) fail(ErrorCategory::Config, "attempts must be at least 1");
  if (options_.image_size < 1) fail(ErrorCategory::Config, "image size must be positive");
  gate_->available = options_.max_in_flight;
}

SatelliteFetcher::~SatelliteFetcher() = default;

std::filesystem::path SatelliteFetcher::cache_path(const GridCell& cell) const {
  return options_.cache_dir / "satellite" / source_.cache_key() / ("z" + std::to_string(source_.zoom)) /
         (cell.id + "_" + std::to_string(options_.image_size) + ".png");
}

std::vector<std::uint8_t> SatelliteFetcher::get_tile(const TileXY& t) {
  std::string url = replace_all(source_.url_template, "{z}", std::to_string(t.z));
  url = replace_all(url, "{x}", std::to_string(t.x));
  url = replace_all(url, "{y}", std::to_string(t.y));
  url = replace_all(url, "{key}", api_key_);
  const std::size_t host_end = url.find('/', url.find("://") + 3);
  const std::string base = url.substr(0, host_end);
  const std::string path = host_end == std::string::npos ? "/" : url.substr(host_end);
  const std::string label = std::to_string(t.z) + "/" + std::to_string(t.x) + "/" + std::to_string(t.y);

  httplib::Client client(base);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(options_.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(options_.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_follow_location(true);

  std::string last_error;
  auto delay = options_.backoff;
  for (int attempt = 1; attempt <= options_.attempts; ++attempt) {
    gate_->acquire();
    ++requests_;
    auto res = client.Get(path);
    gate_->release();
    if (res && res->status == 200) return {res->body.begin(), res->body.end()};
    last_error = res ? "HTTP " + std::to_string(res->status) : httplib::to_string(res.error());
    if (attempt < options_.attempts) {
      std::this_thread::sleep_for(delay);
      delay *= 2;
    }
  }
  fail(ErrorCategory::Network, "tile " + label + " failed after " + std::to_string(options_.attempts) +
                                   " attempts: " + last_error);
}

CanonicalImage SatelliteFetcher::fetch(const GridCell& cell) {
  const bool caching = !options_.cache_dir.empty();
  const auto cached = caching ? cache_path(cell) : std::filesystem::path{};
  if (caching && std::filesystem::exists(cached)) return read_png(cached, ImageKind::Satellite, cell.id);

  const auto tiles = covering_tiles(cell, geo_, source_.zoom);
  std::vector<CanonicalImage> images(tiles.size());
  std::vector<std::exception_ptr> errors(tiles.size());
  {
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t i = next++; i < tiles.size(); i = next++) {
        try {
          images[i] = decode_image(get_tile(tiles[i]), ImageKind::Satellite);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    };
    const std::size_t n = std::min<std::size_t>(tiles.size(), static_cast<std::size_t>(options_.max_in_flight));
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < n; ++i) pool.emplace_back(worker);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  const int ts = images.front().width();
  for (const auto& img : images) {
    if (img.width() != ts || img.height() != ts) fail(ErrorCategory::Protocol, "tile source returned mixed tile sizes");
  }
  const int tx0 = tiles.front().x;
  const int ty0 = tiles.front().y;
  const int cols = tiles.back().x - tx0 + 1;
  const int rows = tiles.back().y - ty0 + 1;
  const int mw = cols * ts;
  const int mh = rows * ts;
  auto sample = [&](int px, int py, int ch) -> double {
    px = std::clamp(px, 0, mw - 1);
    py = std::clamp(py, 0, mh - 1);
    const auto& img = images[static_cast<std::size_t>((py / ts) * cols + px / ts)];
    const Rgb c = img.pixel(px % ts, py % ts);
    return ch == 0 ? c.r : ch == 1 ? c.g : c.b;
  };

  const int size = options_.image_size;
  CanonicalImage out(ImageKind::Satellite, size, cell.id);
  const BBox fp = cell.footprint();
  for (int j = 0; j < size; ++j) {
    for (int i = 0; i < size; ++i) {
      const Point p{fp.min_x + (i + 0.5) / size * fp.width(), fp.max_y - (j + 0.5) / size * fp.height()};
      const LonLat ll = geo_.to_lonlat(p);
      const double gx = (mercator_x(ll.lon, source_.zoom) - tx0) * ts - 0.5;
      const double gy = (mercator_y(ll.lat, source_.zoom) - ty0) * ts - 0.5;
      const int x0 = static_cast<int>(std::floor(gx));
      const int y0 = static_cast<int>(std::floor(gy));
      const double fx = gx - x0;
      const double fy = gy - y0;
      std::uint8_t rgb[3];
      for (int ch = 0; ch < 3; ++ch) {
        const double v = (1 - fx) * (1 - fy) * sample(x0, y0, ch) + fx * (1 - fy) * sample(x0 + 1, y0, ch) +
                         (1 - fx) * fy * sample(x0, y0 + 1, ch) + fx * fy * sample(x0 + 1, y0 + 1, ch);
        rgb[ch] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
      out.set_pixel(i, j, {rgb[0], rgb[1], rgb[2]});
    }
  }
  if (caching) write_png(cached, out);
  return out;
}

}  // namespace urbanstep
