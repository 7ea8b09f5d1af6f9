// Vector-side design metrics via Boost.Geometry overlays.

#include <algorithm>
#include <map>

#include <boost/geometry.hpp>
#include <boost/geometry/geometries/multi_polygon.hpp>
#include <boost/geometry/geometries/point_xy.hpp>
#include <boost/geometry/geometries/polygon.hpp>

#include "urbanstep/error.hpp"
#include "urbanstep/log.hpp"
#include "urbanstep/metrics.hpp"

namespace urbanstep {

namespace bg = boost::geometry;

namespace {

using BgPoint = bg::model::d2::point_xy<double>;
using BgPolygon = bg::model::polygon<BgPoint>;
using BgMulti = bg::model::multi_polygon<BgPolygon>;
using BgLine = bg::model::linestring<BgPoint>;

constexpr int kPointsPerCircle = 90;

BgPolygon to_bg(const Polygon& p) {
  BgPolygon out;
  for (const auto& pt : p.outer) bg::append(out.outer(), BgPoint(pt.x, pt.y));
  for (const auto& h : p.holes) {
    out.inners().emplace_back();
    for (const auto& pt : h) bg::append(out.inners().back(), BgPoint(pt.x, pt.y));
  }
  bg::correct(out);
  return out;
}

BgMulti unite(std::vector<BgMulti> parts) {
  // Pairwise reduction keeps each overlay small.
  if (parts.empty()) return {};
  while (parts.size() > 1) {
    std::vector<BgMulti> next;
    for (std::size_t i = 0; i + 1 < parts.size(); i += 2) {
      BgMulti u;
      bg::union_(parts[i], parts[i + 1], u);
      next.push_back(std::move(u));
    }
    if (parts.size() % 2 == 1) next.push_back(std::move(parts.back()));
    parts = std::move(next);
  }
  return std::move(parts.front());
}

BgMulti polygons_region(const std::vector<const Polygon*>& polys) {
  std::vector<BgMulti> parts;
  for (const Polygon* p : polys) {
    if (p->outer.size() < 3) continue;
    BgMulti m;
    m.push_back(to_bg(*p));
    parts.push_back(std::move(m));
  }
  return unite(std::move(parts));
}

BgMulti strokes_region(const std::vector<LineString>& lines, double width) {
  bg::strategy::buffer::distance_symmetric<double> distance(width / 2.0);
  bg::strategy::buffer::side_straight side;
  bg::strategy::buffer::join_round join(kPointsPerCircle);
  bg::strategy::buffer::end_round end(kPointsPerCircle);
  bg::strategy::buffer::point_circle circle(kPointsPerCircle);
  std::vector<BgMulti> parts;
  for (const auto& l : lines) {
    if (l.empty()) continue;
    BgMulti buffered;
    if (l.size() == 1) {
      bg::buffer(BgPoint(l[0].x, l[0].y), buffered, distance, side, join, end, circle);
    } else {
      BgLine line;
      for (const auto& pt : l) bg::append(line, BgPoint(pt.x, pt.y));
      bg::buffer(line, buffered, distance, side, join, end, circle);
    }
    parts.push_back(std::move(buffered));
  }
  return unite(std::move(parts));
}

// Visible area per class for a bottom-to-top stack, clipped to the tile.
std::map<PixelClass, double> visible_areas(const std::vector<std::pair<PixelClass, BgMulti>>& stack_bottom_up,
                                           const BgPolygon& tile) {
  std::map<PixelClass, double> areas;
  BgMulti covered;
  for (auto it = stack_bottom_up.rbegin(); it != stack_bottom_up.rend(); ++it) {
    BgMulti in_tile;
    bg::intersection(it->second, tile, in_tile);
    BgMulti visible;
    bg::difference(in_tile, covered, visible);
    areas[it->first] += bg::area(visible);
    BgMulti grown;
    bg::union_(covered, in_tile, grown);
    covered = std::move(grown);
  }
  return areas;
}

}  // namespace

MetricReport metrics_from_vector(const VectorLayerBundle& bundle, const JenksBreaks& breaks, const RenderSpec& spec) {
  spec.validate(ImageKind::Stage2Plan);
  const double side = bundle.side;
  BgPolygon tile;
  bg::append(tile.outer(), BgPoint(0, 0));
  bg::append(tile.outer(), BgPoint(0, side));
  bg::append(tile.outer(), BgPoint(side, side));
  bg::append(tile.outer(), BgPoint(side, 0));
  bg::append(tile.outer(), BgPoint(0, 0));
  bg::correct(tile);

  std::map<PixelClass, BgMulti> regions;
  {
    std::vector<const Polygon*> water;
    for (const auto& w : bundle.water) water.push_back(&w);
    regions[PixelClass::Water] = polygons_region(water);
  }
  regions[PixelClass::Railway] = strokes_region(bundle.railways, spec.railway_width);
  regions[PixelClass::MajorRoad] = strokes_region(bundle.major_roads, spec.major_road_width);
  regions[PixelClass::MinorRoad] = strokes_region(bundle.minor_roads, spec.minor_road_width);
  for (std::size_t c = 0; c < kLandUseCount; ++c) {
    std::vector<const Polygon*> parcels;
    for (const auto& p : bundle.land_use) {
      if (static_cast<std::size_t>(p.category) == c) parcels.push_back(&p.shape);
    }
    regions[to_pixel_class(static_cast<LandUseCategory>(c))] = polygons_region(parcels);
  }
  std::size_t missing = 0;
  for (std::size_t h = 0; h < kHeightClassCount; ++h) {
    std::vector<const Polygon*> fps;
    for (const auto& b : bundle.buildings) {
      const HeightClass cls = b.height ? classify_height(*b.height, breaks) : HeightClass::LowStory;
      if (static_cast<std::size_t>(cls) == h) fps.push_back(&b.footprint);
      if (h == 0 && !b.height) ++missing;
    }
    regions[to_pixel_class(static_cast<HeightClass>(h))] = polygons_region(fps);
  }
  if (missing > 0) {
    log_warning("tile " + bundle.tile_id + ": " + std::to_string(missing) +
                " building(s) without height counted as LowStory");
  }

  auto stack_for = [&](ImageKind kind) {
    const auto drawn = classes_for(kind);
    std::vector<std::pair<PixelClass, BgMulti>> stack;
    for (PixelClass c : spec.draw_order) {
      if (std::find(drawn.begin(), drawn.end(), c) != drawn.end()) stack.emplace_back(c, regions[c]);
    }
    return stack;
  };
  const auto stage1 = visible_areas(stack_for(ImageKind::Stage1Plan), tile);
  const auto stage2 = visible_areas(stack_for(ImageKind::Stage2Plan), tile);
  auto area_of = [](const std::map<PixelClass, double>& areas, PixelClass c) {
    auto it = areas.find(c);
    return it == areas.end() ? 0.0 : it->second;
  };

  const double tile_area = side * side;
  MetricReport report;
  report.provenance = Provenance::Vector;
  report.tile_id = bundle.tile_id;
  auto& m = report.metrics;
  m.road_density =
      std::clamp((area_of(stage1, PixelClass::MajorRoad) + area_of(stage1, PixelClass::MinorRoad)) / tile_area, 0.0, 1.0);
  double land = 0.0;
  for (std::size_t c = 0; c < kLandUseCount; ++c) land += area_of(stage1, to_pixel_class(static_cast<LandUseCategory>(c)));
  for (std::size_t c = 0; c < kLandUseCount; ++c) {
    m.land_use[c] = land > 0.0 ? area_of(stage1, to_pixel_class(static_cast<LandUseCategory>(c))) / land : 0.0;
  }
  double built = 0.0;
  for (std::size_t h = 0; h < kHeightClassCount; ++h) {
    m.height_coverage[h] = std::clamp(area_of(stage2, to_pixel_class(static_cast<HeightClass>(h))) / tile_area, 0.0, 1.0);
    built += m.height_coverage[h];
  }
  m.open_space = 1.0 - built;
  return report;
}

}  // namespace urbanstep
