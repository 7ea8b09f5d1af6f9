#include "doctest.h"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <numbers>
#include <thread>

#include "httplib.h"
#include "urbanstep/core/codec.hpp"
#include "urbanstep/error.hpp"
#include "urbanstep/satellite.hpp"

using namespace urbanstep;

namespace {

constexpr double kA = 6378137.0;
constexpr double kF = 1.0 / 298.257223563;
constexpr double kRad = std::numbers::pi / 180.0;

// Meridian arc length by Simpson integration of the meridional radius.
double meridian_arc(double lat_deg) {
  const double e2 = kF * (2 - kF);
  const int n = 20000;
  const double h = lat_deg * kRad / n;
  auto m = [&](double phi) { return kA * (1 - e2) / std::pow(1 - e2 * std::sin(phi) * std::sin(phi), 1.5); };
  double s = m(0) + m(lat_deg * kRad);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4 : 2) * m(i * h);
  return s * h / 3;
}

// Transverse Mercator forward (Snyder) for round-trip checks.
Point utm_forward(double lon, double lat, int zone) {
  const double e2 = kF * (2 - kF);
  const double ep2 = e2 / (1 - e2);
  const double phi = lat * kRad;
  const double lam0 = ((zone - 1) * 6 - 180 + 3) * kRad;
  const double n = kA / std::sqrt(1 - e2 * std::sin(phi) * std::sin(phi));
  const double t = std::tan(phi) * std::tan(phi);
  const double c = ep2 * std::cos(phi) * std::cos(phi);
  const double a = std::cos(phi) * (lon * kRad - lam0);
  const double k0 = 0.9996;
  const double m = meridian_arc(lat);
  const double x = k0 * n * (a + (1 - t + c) * std::pow(a, 3) / 6 +
                             (5 - 18 * t + t * t + 72 * c - 58 * ep2) * std::pow(a, 5) / 120);
  const double y = k0 * (m + n * std::tan(phi) *
                                 (a * a / 2 + (5 - t + 9 * c + 4 * c * c) * std::pow(a, 4) / 24 +
                                  (61 - 58 * t + t * t + 600 * c - 330 * ep2) * std::pow(a, 6) / 720));
  return {x + 500000.0, y};
}

GridCell manhattan_cell() {
  const Point p = utm_forward(-73.9857, 40.7484, 18);
  GridCell c;
  c.id = "r0c0";
  c.x = std::floor(p.x / 450) * 450;
  c.y = std::floor(p.y / 450) * 450;
  return c;
}

std::vector<std::uint8_t> solid_tile(Rgb color, int size = 256) {
  return encode_png(CanonicalImage(ImageKind::Satellite, size, {}, color));
}

struct TileServer {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::atomic<int> hits{0};
  std::atomic<int> in_flight{0};
  std::atomic<int> max_in_flight{0};
  std::atomic<int> fail_first{0};
  std::atomic<int> delay_ms{0};

  TileServer() {
    server.Get(R"(/tiles/(\d+)/(\d+)/(\d+)\.png)", [this](const httplib::Request& req, httplib::Response& res) {
      ++hits;
      const int now = ++in_flight;
      int seen = max_in_flight.load();
      while (now > seen && !max_in_flight.compare_exchange_weak(seen, now)) {
      }
      if (delay_ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms.load()));
      --in_flight;
      if (fail_first > 0) {
        --fail_first;
        res.status = 503;
        return;
      }
      if (req.has_param("key") && req.get_param_value("key") != "secret") {
        res.status = 403;
        return;
      }
      const int x = std::stoi(req.matches[2]);
      const auto png = solid_tile(x % 2 ? Rgb{200, 40, 40} : Rgb{40, 40, 200});
      res.set_content(std::string(png.begin(), png.end()), "image/png");
    });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~TileServer() {
    server.stop();
    thread.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port) + "/tiles/{z}/{x}/{y}.png"; }
};

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("urbanstep-sat-" + std::to_string(::getpid()) + "-" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    std::filesystem::remove_all(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

FetchOptions fast_options(const std::filesystem::path& cache, int size = 64) {
  FetchOptions o;
  o.cache_dir = cache;
  o.image_size = size;
  o.backoff = std::chrono::milliseconds(1);
  o.timeout = std::chrono::seconds(5);
  return o;
}

}  // namespace

TEST_CASE("UTM inverse matches the meridian arc and a forward projection") {
  const auto g = GeoReference::utm(18, true);
  LonLat ll = g.to_lonlat({500000.0, 0.0});
  CHECK(ll.lon == doctest::Approx(-75.0).epsilon(1e-12));
  CHECK(std::abs(ll.lat) < 1e-9);

  for (double lat : {10.0, 40.0, 40.7484, 65.0}) {
    ll = g.to_lonlat({500000.0, 0.9996 * meridian_arc(lat)});
    CHECK(std::abs(ll.lat - lat) < 1e-7);
    CHECK(std::abs(ll.lon + 75.0) < 1e-9);
  }
  for (double lon : {-77.9, -76.0, -73.9857, -72.1}) {
    for (double lat : {25.0, 40.7484, 55.0}) {
      ll = g.to_lonlat(utm_forward(lon, lat, 18));
      CHECK(std::abs(ll.lon - lon) < 1e-6);
      CHECK(std::abs(ll.lat - lat) < 1e-6);
    }
  }
  const auto south = GeoReference::from_crs("EPSG:32723");
  ll = south.to_lonlat({500000.0, 10000000.0 - 0.9996 * meridian_arc(23.0)});
  CHECK(ll.lat == doctest::Approx(-23.0).epsilon(1e-9));
  CHECK(ll.lon == doctest::Approx(-45.0).epsilon(1e-12));
}

TEST_CASE("web mercator and anchored references") {
  const auto wm = GeoReference::from_crs("EPSG:3857");
  CHECK(wm.to_lonlat({0, 0}).lon == 0.0);
  CHECK(wm.to_lonlat({std::numbers::pi * kA, 0}).lon == doctest::Approx(180.0));
  // y of 45 degrees: R ln tan(pi/4 + phi/2)
  const double y45 = kA * std::log(std::tan(std::numbers::pi / 4 + 45 * kRad / 2));
  CHECK(wm.to_lonlat({0, y45}).lat == doctest::Approx(45.0).epsilon(1e-12));

  const auto anchored = GeoReference::anchored({1000, 2000}, {-73.9, 40.7});
  CHECK(anchored.to_lonlat({1000, 2000}).lat == doctest::Approx(40.7));
  CHECK(anchored.to_lonlat({1000, 2000 + kA * kRad}).lat == doctest::Approx(41.7));

  CHECK_THROWS_AS(GeoReference::from_crs("EPSG:2263"), Error);
}

TEST_CASE("a 450 m cell at zoom 17 needs at least four tiles") {
  const auto geo = GeoReference::utm(18, true);
  const GridCell cell = manhattan_cell();
  const auto tiles = covering_tiles(cell, geo, 17);
  // Tile edge in ground meters at this latitude.
  const double lat = geo.to_lonlat({cell.x + 225, cell.y - 225}).lat;
  const double edge = 2 * std::numbers::pi * kA * std::cos(lat * kRad) / std::ldexp(1.0, 17);
  const int per_axis = static_cast<int>(std::ceil(450.0 / edge));
  CHECK(per_axis >= 2);
  CHECK(tiles.size() >= static_cast<std::size_t>(per_axis * per_axis));
  CHECK(tiles.size() >= 4);
  // Every footprint corner falls inside the returned tiles.
  const BBox fp = cell.footprint();
  for (Point p : {Point{fp.min_x, fp.min_y}, Point{fp.max_x, fp.max_y}, Point{fp.min_x, fp.max_y}}) {
    const LonLat ll = geo.to_lonlat(p);
    const TileXY t{17, static_cast<int>(mercator_x(ll.lon, 17)), static_cast<int>(mercator_y(ll.lat, 17))};
    CHECK(std::ranges::find(tiles, t) != tiles.end());
  }
}

TEST_CASE("tile source validation and API key lookup") {
  TileSource s{"http://example.com/{z}/{x}.png", 17, ""};
  CHECK_THROWS_AS(s.validate(), Error);
  s.url_template = "http://example.com/{z}/{x}/{y}.png?token={key}";
  CHECK_THROWS_AS(s.validate(), Error);
  s.api_key_env = "URBANSTEP_TEST_MISSING_KEY";
  ::unsetenv("URBANSTEP_TEST_MISSING_KEY");
  try {
    SatelliteFetcher f(s, GeoReference::web_mercator());
    FAIL("missing key accepted");
  } catch (const Error& e) {
    CHECK(e.category() == ErrorCategory::Config);
  }
}

TEST_CASE("fetch mosaics upstream tiles and serves repeats from cache") {
  TileServer srv;
  TempDir cache;
  ::setenv("URBANSTEP_TEST_KEY", "secret", 1);
  TileSource src{srv.url() + "?key={key}", 17, "URBANSTEP_TEST_KEY"};
  SatelliteFetcher fetcher(src, GeoReference::utm(18, true), fast_options(cache.path));
  const GridCell cell = manhattan_cell();
  const auto expected_tiles = covering_tiles(cell, GeoReference::utm(18, true), 17).size();

  const CanonicalImage first = fetcher.fetch(cell);
  CHECK(first.kind() == ImageKind::Satellite);
  CHECK(first.width() == 64);
  CHECK(fetcher.request_count() == expected_tiles);
  CHECK(srv.hits == static_cast<int>(expected_tiles));
  CHECK(std::filesystem::exists(fetcher.cache_path(cell)));

  // Columns alternate colors, so both appear and pixels are pure blends of the two.
  bool red = false, blue = false;
  for (int y = 0; y < first.height(); ++y) {
    for (int x = 0; x < first.width(); ++x) {
      const Rgb c = first.pixel(x, y);
      red |= c.r == 200;
      blue |= c.b == 200;
      CHECK(c.g == 40);
      CHECK(c.r + c.b == doctest::Approx(240).epsilon(0.01));
    }
  }
  CHECK(red);
  CHECK(blue);

  const CanonicalImage second = fetcher.fetch(cell);
  CHECK(fetcher.request_count() == expected_tiles);
  CHECK(second == first);

  SatelliteFetcher other(src, GeoReference::utm(18, true), fast_options(cache.path));
  CHECK(other.fetch(cell) == first);
  CHECK(other.request_count() == 0);
}

TEST_CASE("transient failures are retried, persistent ones are network errors") {
  TileServer srv;
  TileSource src{srv.url(), 3, ""};
  GridCell cell;
  cell.id = "big";
  cell.x = -1000;
  cell.y = 1000;
  cell.side = 100;  // well inside one z3 tile
  REQUIRE(covering_tiles(cell, GeoReference::web_mercator(), 3).size() == 1);

  srv.fail_first = 2;
  SatelliteFetcher ok(src, GeoReference::web_mercator(), fast_options({}, 8));
  CHECK(ok.fetch(cell).width() == 8);
  CHECK(ok.request_count() == 3);

  srv.fail_first = 3;
  SatelliteFetcher bad(src, GeoReference::web_mercator(), fast_options({}, 8));
  try {
    bad.fetch(cell);
    FAIL("expected failure");
  } catch (const Error& e) {
    CHECK(e.category() == ErrorCategory::Network);
  }
  CHECK(bad.request_count() == 3);
}

TEST_CASE("in-flight requests stay within the limit") {
  TileServer srv;
  srv.delay_ms = 30;
  TileSource src{srv.url(), 17, ""};
  auto opts = fast_options({}, 16);
  opts.max_in_flight = 2;
  SatelliteFetcher fetcher(src, GeoReference::utm(18, true), opts);
  std::vector<std::thread> threads;
  for (int i = 0; i < 3; ++i) {
    threads.emplace_back([&, i] {
      GridCell c = manhattan_cell();
      c.id = "c" + std::to_string(i);
      c.x += 450.0 * i;
      fetcher.fetch(c);
    });
  }
  for (auto& t : threads) t.join();
  CHECK(srv.max_in_flight <= 2);
  CHECK(srv.max_in_flight >= 1);
}
