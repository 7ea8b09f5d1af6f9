#include "doctest.h"

#include <cmath>
#include <set>
#include <tuple>

#include "urbanstep/error.hpp"
#include "urbanstep/tiler.hpp"

using namespace urbanstep;

namespace {

// Independent enumeration: every (base cell, dx, dy) footprint tested for
// containment with integer arithmetic on a 150 m lattice.
std::set<std::pair<long, long>> enumerate_shifted_origins(long extent_w, long extent_h) {
  std::set<std::pair<long, long>> kept;
  for (long by = 0; by + 450 <= extent_h; by += 450) {
    for (long bx = 0; bx + 450 <= extent_w; bx += 450) {
      for (long dy : {0L, 150L, 300L}) {
        for (long dx : {0L, 150L, 300L}) {
          const long x = bx + dx;
          const long y = by + dy;  // distance of the top edge below the extent top
          if (x + 450 <= extent_w && y + 450 <= extent_h) kept.insert({x, y});
        }
      }
    }
  }
  return kept;
}

Polygon rect(double x0, double y0, double x1, double y1) {
  return Polygon{{{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}}, {}};
}

}  // namespace

TEST_CASE("partition counts") {
  CHECK(partition({0, 0, 1350, 900}).size() == 6);
  CHECK(partition({0, 0, 449, 449}).empty());
  const auto cells = partition({100, 200, 1000, 1100});
  REQUIRE(cells.size() == 4);
  CHECK(cells[0].id == "r0c0");
  CHECK(cells[0].x == 100);
  CHECK(cells[0].y == 1100);
  CHECK(cells[1].id == "r0c1");
  CHECK(cells[2].footprint() == BBox{100, 200, 550, 650});
}

TEST_CASE("augment: single cell extent keeps only the original") {
  const BBox extent{0, 0, 450, 450};
  const auto out = augment(partition(extent), extent);
  REQUIRE(out.size() == 1);
  CHECK(out[0].is_base());
}

TEST_CASE("augment: 3x3 extent matches the footprint enumeration") {
  const BBox extent{0, 0, 1350, 1350};
  const auto base = partition(extent);
  REQUIRE(base.size() == 9);
  const auto out = augment(base, extent);

  const auto oracle = enumerate_shifted_origins(1350, 1350);
  CHECK(oracle.size() == 49);  // frozen from the enumeration: 7 positions per axis
  std::set<std::pair<long, long>> got;
  for (const auto& c : out) got.insert({std::lround(c.x - extent.min_x), std::lround(extent.max_y - c.y)});
  CHECK(out.size() == 49);
  CHECK(got == oracle);
  CHECK(out.size() <= 9 * base.size());
}

TEST_CASE("augment rejects shifted input") {
  const BBox extent{0, 0, 900, 900};
  const auto out = augment(partition(extent), extent);
  CHECK_THROWS_AS(augment(out, extent), Error);
}

TEST_CASE("augment size equals 9x iff every shift fits") {
  // Extent with a 300 m margin on the right and bottom: all shifts fit.
  const BBox extent{0, 0, 1200, 1200};
  const auto base = partition(extent);
  REQUIRE(base.size() == 4);
  const auto out = augment(base, extent);
  CHECK(out.size() == 36);
}

TEST_CASE("split labels") {
  const BBox extent{0, 0, 4500, 450};
  const auto base = partition(extent);
  REQUIRE(base.size() == 10);
  const TileSet ts = split(base, 0.1, 42, extent);
  CHECK(ts.count(SplitLabel::Test) == 1);
  CHECK(ts.count(SplitLabel::Excluded) == 0);
  CHECK(ts.count(SplitLabel::Train) == 9);
  CHECK_THROWS_AS(split(base, 0.0, 1), Error);
  CHECK_THROWS_AS(split(base, 1.0, 1), Error);
}

TEST_CASE("split: train and test footprints never overlap, deterministic per seed") {
  const BBox extent{0, 0, 450 * 7, 450 * 5};
  const auto cells = augment(partition(extent), extent);
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const TileSet ts = split(cells, 0.1, seed, extent);
    REQUIRE(ts.labels.size() == cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (ts.labels[i] == SplitLabel::Test) REQUIRE(cells[i].is_base());
      if (ts.labels[i] != SplitLabel::Train) continue;
      for (std::size_t j = 0; j < cells.size(); ++j) {
        if (ts.labels[j] == SplitLabel::Test) REQUIRE_FALSE(overlaps(cells[i].footprint(), cells[j].footprint()));
      }
    }
    CHECK(ts == split(cells, 0.1, seed, extent));
    CHECK(tileset_to_json(ts) == tileset_to_json(split(cells, 0.1, seed, extent)));
  }
  CHECK(split(cells, 0.1, 1, extent).labels != split(cells, 0.1, 2, extent).labels);
}

TEST_CASE("tileset manifest round trip") {
  const BBox extent{0, 0, 1350, 900};
  const TileSet ts = split(augment(partition(extent), extent), 0.2, 7, extent, "EPSG:32618");
  CHECK(tileset_from_json(tileset_to_json(ts)) == ts);
  CHECK_THROWS_AS(tileset_from_json("{\"cells\": 3}"), Error);
}

TEST_CASE("clip: polygon inside is translated unchanged") {
  GridCell cell = partition({1000, 2000, 1450, 2450})[0];
  CityLayers layers;
  layers.crs = "EPSG:3857";
  layers.land_use.push_back({rect(1100, 2100, 1200, 2300), LandUseCategory::Park});
  const auto b = clip(cell, layers, "EPSG:3857");
  REQUIRE(b.land_use.size() == 1);
  CHECK(b.land_use[0].category == LandUseCategory::Park);
  CHECK(polygon_area(b.land_use[0].shape) == doctest::Approx(100.0 * 200.0));
  const BBox bb = bounds(b.land_use[0].shape.outer);
  CHECK(bb == BBox{100, 150, 200, 350});  // y measured down from the tile top (2450)
}

TEST_CASE("clip: straddling rectangles keep exactly the inside area") {
  GridCell cell = partition({0, 0, 450, 450})[0];
  const BBox fp = cell.footprint();
  CityLayers layers;
  layers.crs = "x";
  const std::vector<BBox> boxes = {{-100, -100, 100, 100}, {300, 200, 700, 260}, {-50, 400, 500, 600}, {10, 10, 20, 20}};
  for (const auto& bx : boxes) layers.water.push_back(rect(bx.min_x, bx.min_y, bx.max_x, bx.max_y));
  // Diamond centred on the tile corner; one quarter (2450 m^2) lies inside.
  layers.water.push_back(Polygon{{{450, 380}, {520, 450}, {450, 520}, {380, 450}}, {}});
  const auto b = clip(cell, layers, "x");
  REQUIRE(b.water.size() == 5);
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const double full = boxes[i].width() * boxes[i].height();
    const double outside = full - overlap_area(boxes[i], fp);
    CHECK(polygon_area(b.water[i]) == doctest::Approx(full - outside));
  }
  CHECK(polygon_area(b.water[4]) == doctest::Approx(2450.0));
}

TEST_CASE("clip: empty and mismatched layers") {
  GridCell cell = partition({0, 0, 450, 450})[0];
  CityLayers layers;
  layers.crs = "EPSG:1";
  layers.major_roads.push_back({{1000, 1000}, {2000, 2000}});
  const auto b = clip(cell, layers, "EPSG:1");
  CHECK(b.major_roads.empty());
  CHECK(b.water.empty());
  CHECK_THROWS_AS(clip(cell, layers, "EPSG:2"), Error);
}

TEST_CASE("clip: line crossing the tile") {
  GridCell cell = partition({0, 0, 450, 450})[0];
  CityLayers layers;
  layers.railways.push_back({{-100, 225}, {550, 225}});
  layers.minor_roads.push_back({{-10, -10}, {100, 100}, {-10, 210}});
  const auto b = clip(cell, layers, "");
  REQUIRE(b.railways.size() == 1);
  CHECK(b.railways[0].front() == Point{0, 225});
  CHECK(b.railways[0].back() == Point{450, 225});
  REQUIRE(b.minor_roads.size() == 1);
  CHECK(b.minor_roads[0].size() == 3);
}
