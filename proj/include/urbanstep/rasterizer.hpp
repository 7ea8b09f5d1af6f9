#pragma once

#include <vector>

#include "urbanstep/core/palette.hpp"
#include "urbanstep/core/types.hpp"
#include "urbanstep/geometry.hpp"
#include "urbanstep/jenks.hpp"
#include "urbanstep/tiler.hpp"

namespace urbanstep {

struct RenderSpec {
  int image_size = kDefaultImageSize;
  double major_road_width = 24.0;  // meters
  double minor_road_width = 12.0;
  double railway_width = 8.0;
  // Bottom to top. Land use sits below every linear feature; buildings on top.
  std::vector<PixelClass> draw_order = {
      PixelClass::Residential, PixelClass::Commercial, PixelClass::Manufacturing, PixelClass::Park,
      PixelClass::MixedUse,    PixelClass::Water,      PixelClass::MinorRoad,     PixelClass::Railway,
      PixelClass::MajorRoad,   PixelClass::BuildingLow, PixelClass::BuildingMid,  PixelClass::BuildingHigh,
  };

  // Throws Validation on non-positive sizes/strokes or a draw order missing
  // (or repeating) a class that `kind` draws.
  void validate(ImageKind kind) const;
};

// Classes drawn for each canonical kind.
std::vector<PixelClass> classes_for(ImageKind kind);

// Hard-edged rasterization into a class map: a pixel takes a polygon's class
// when its center is inside (even-odd), and a stroke's class when its center
// lies within half the stroke width of the centerline (round caps/joins).
// `breaks` is required for Stage2Plan.
ClassMap rasterize(const VectorLayerBundle& bundle, ImageKind kind, const RenderSpec& spec,
                   const JenksBreaks* breaks = nullptr);

CanonicalImage render_site_constraints(const VectorLayerBundle& bundle, const RenderSpec& spec = {});
CanonicalImage render_stage1(const VectorLayerBundle& bundle, const RenderSpec& spec = {});
CanonicalImage render_stage2(const VectorLayerBundle& bundle, const RenderSpec& spec, const JenksBreaks& breaks);

// Low-level primitives, coordinates in pixels.
void fill_polygon(ClassMap& map, const Polygon& polygon, PixelClass cls, double scale = 1.0);
void stroke_line(ClassMap& map, const LineString& line, double width_px, PixelClass cls, double scale = 1.0);

}  // namespace urbanstep
