#include "urbanstep/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "urbanstep/error.hpp"
#include "urbanstep/log.hpp"

namespace urbanstep {

std::vector<PixelClass> classes_for(ImageKind kind) {
  std::vector<PixelClass> out = {PixelClass::Water, PixelClass::Railway, PixelClass::MajorRoad};
  if (kind == ImageKind::SiteConstraints) return out;
  out.push_back(PixelClass::MinorRoad);
  for (std::size_t i = 0; i < kLandUseCount; ++i) out.push_back(to_pixel_class(static_cast<LandUseCategory>(i)));
  if (kind == ImageKind::Stage1Plan) return out;
  for (std::size_t i = 0; i < kHeightClassCount; ++i) out.push_back(to_pixel_class(static_cast<HeightClass>(i)));
  return out;
}

void RenderSpec::validate(ImageKind kind) const {
  if (image_size <= 0) fail(ErrorCategory::Validation, "image_size must be positive");
  if (!(major_road_width > 0 && minor_road_width > 0 && railway_width > 0)) {
    fail(ErrorCategory::Validation, "stroke widths must be positive");
  }
  for (PixelClass c : classes_for(kind)) {
    const auto n = std::count(draw_order.begin(), draw_order.end(), c);
    if (n != 1) {
      fail(ErrorCategory::Validation, "draw order must list " + std::string(name(c)) + " exactly once");
    }
  }
}

void fill_polygon(ClassMap& map, const Polygon& polygon, PixelClass cls, double scale) {
  struct Edge {
    double x0, y0, x1, y1;
  };
  std::vector<Edge> edges;
  double min_y = std::numeric_limits<double>::infinity();
  double max_y = -min_y;
  auto add_ring = [&](const Ring& ring) {
    if (ring.size() < 3) return;
    for (std::size_t i = 0, j = ring.size() - 1; i < ring.size(); j = i++) {
      const Edge e{ring[j].x * scale, ring[j].y * scale, ring[i].x * scale, ring[i].y * scale};
      if (e.y0 == e.y1) continue;
      edges.push_back(e);
      min_y = std::min({min_y, e.y0, e.y1});
      max_y = std::max({max_y, e.y0, e.y1});
    }
  };
  add_ring(polygon.outer);
  for (const auto& h : polygon.holes) add_ring(h);
  if (edges.empty()) return;

  const int row_lo = std::max(0, static_cast<int>(std::floor(min_y - 0.5)));
  const int row_hi = std::min(map.height - 1, static_cast<int>(std::ceil(max_y - 0.5)));
  std::vector<double> xs;
  for (int row = row_lo; row <= row_hi; ++row) {
    const double yc = row + 0.5;
    xs.clear();
    for (const auto& e : edges) {
      const bool crosses = (e.y0 <= yc && yc < e.y1) || (e.y1 <= yc && yc < e.y0);
      if (crosses) xs.push_back(e.x0 + (yc - e.y0) * (e.x1 - e.x0) / (e.y1 - e.y0));
    }
    std::sort(xs.begin(), xs.end());
    for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
      // Pixel centers in [xs[k], xs[k+1]).
      const int c0 = std::max(0, static_cast<int>(std::ceil(xs[k] - 0.5)));
      const int c1 = std::min(map.width, static_cast<int>(std::ceil(xs[k + 1] - 0.5)));
      for (int col = c0; col < c1; ++col) map.at(col, row) = cls;
    }
  }
}

void stroke_line(ClassMap& map, const LineString& line, double width_px, PixelClass cls, double scale) {
  const double r = 0.5 * width_px;
  const double r2 = r * r;
  auto paint_disc_segment = [&](Point a, Point b) {
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min(a.x, b.x) - r - 0.5)));
    const int x1 = std::min(map.width - 1, static_cast<int>(std::ceil(std::max(a.x, b.x) + r - 0.5)));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min(a.y, b.y) - r - 0.5)));
    const int y1 = std::min(map.height - 1, static_cast<int>(std::ceil(std::max(a.y, b.y) + r - 0.5)));
    const double dx = b.x - a.x;
    const double dy = b.y - a.y;
    const double len2 = dx * dx + dy * dy;
    for (int row = y0; row <= y1; ++row) {
      const double py = row + 0.5;
      for (int col = x0; col <= x1; ++col) {
        const double px = col + 0.5;
        double t = len2 > 0 ? ((px - a.x) * dx + (py - a.y) * dy) / len2 : 0.0;
        t = std::clamp(t, 0.0, 1.0);
        const double ex = a.x + t * dx - px;
        const double ey = a.y + t * dy - py;
        if (ex * ex + ey * ey <= r2) map.at(col, row) = cls;
      }
    }
  };
  if (line.size() == 1) {
    const Point p{line[0].x * scale, line[0].y * scale};
    paint_disc_segment(p, p);
    return;
  }
  for (std::size_t i = 0; i + 1 < line.size(); ++i) {
    paint_disc_segment({line[i].x * scale, line[i].y * scale}, {line[i + 1].x * scale, line[i + 1].y * scale});
  }
}

ClassMap rasterize(const VectorLayerBundle& bundle, ImageKind kind, const RenderSpec& spec,
                   const JenksBreaks* breaks) {
  if (kind == ImageKind::Satellite) fail(ErrorCategory::Validation, "satellite images are fetched, not rasterized");
  spec.validate(kind);
  if (kind == ImageKind::Stage2Plan && breaks == nullptr) {
    fail(ErrorCategory::Validation, "stage-2 rendering needs height breaks");
  }
  if (!(bundle.side > 0)) fail(ErrorCategory::Validation, "bundle side must be positive");

  const bool with_land_use = kind != ImageKind::SiteConstraints;
  if (with_land_use) {
    for (const auto& parcel : bundle.land_use) {
      if (static_cast<std::size_t>(parcel.category) >= kLandUseCount) {
        std::ostringstream os;
        os << "tile " << bundle.tile_id << ": unknown land-use category id " << static_cast<int>(parcel.category);
        fail(ErrorCategory::Validation, os.str());
      }
    }
  }

  // Resolve building classes once; the draw loop below paints by class.
  std::vector<HeightClass> building_class;
  if (kind == ImageKind::Stage2Plan) {
    building_class.reserve(bundle.buildings.size());
    std::size_t missing = 0;
    for (const auto& b : bundle.buildings) {
      if (b.height) {
        building_class.push_back(classify_height(*b.height, *breaks));
      } else {
        building_class.push_back(HeightClass::LowStory);
        ++missing;
      }
    }
    if (missing > 0) {
      log_warning("tile " + bundle.tile_id + ": " + std::to_string(missing) +
                  " building(s) without height classified as LowStory");
    }
  }

  const double scale = spec.image_size / bundle.side;
  ClassMap map(spec.image_size, spec.image_size, PixelClass::Background);
  const auto drawn = classes_for(kind);
  for (PixelClass cls : spec.draw_order) {
    if (std::find(drawn.begin(), drawn.end(), cls) == drawn.end()) continue;
    switch (cls) {
      case PixelClass::Water:
        for (const auto& p : bundle.water) fill_polygon(map, p, cls, scale);
        break;
      case PixelClass::Railway:
        for (const auto& l : bundle.railways) stroke_line(map, l, spec.railway_width * scale, cls, scale);
        break;
      case PixelClass::MajorRoad:
        for (const auto& l : bundle.major_roads) stroke_line(map, l, spec.major_road_width * scale, cls, scale);
        break;
      case PixelClass::MinorRoad:
        for (const auto& l : bundle.minor_roads) stroke_line(map, l, spec.minor_road_width * scale, cls, scale);
        break;
      case PixelClass::BuildingLow:
      case PixelClass::BuildingMid:
      case PixelClass::BuildingHigh:
        for (std::size_t i = 0; i < bundle.buildings.size(); ++i) {
          if (to_pixel_class(building_class[i]) == cls) fill_polygon(map, bundle.buildings[i].footprint, cls, scale);
        }
        break;
      default:
        if (auto lu = land_use_of(cls)) {
          for (const auto& parcel : bundle.land_use) {
            if (parcel.category == *lu) fill_polygon(map, parcel.shape, cls, scale);
          }
        }
        break;
    }
  }
  return map;
}

CanonicalImage render_site_constraints(const VectorLayerBundle& bundle, const RenderSpec& spec) {
  return paint(rasterize(bundle, ImageKind::SiteConstraints, spec), ImageKind::SiteConstraints, default_palette(),
               bundle.tile_id);
}

CanonicalImage render_stage1(const VectorLayerBundle& bundle, const RenderSpec& spec) {
  return paint(rasterize(bundle, ImageKind::Stage1Plan, spec), ImageKind::Stage1Plan, default_palette(),
               bundle.tile_id);
}

CanonicalImage render_stage2(const VectorLayerBundle& bundle, const RenderSpec& spec, const JenksBreaks& breaks) {
  return paint(rasterize(bundle, ImageKind::Stage2Plan, spec, &breaks), ImageKind::Stage2Plan, default_palette(),
               bundle.tile_id);
}

}  // namespace urbanstep
