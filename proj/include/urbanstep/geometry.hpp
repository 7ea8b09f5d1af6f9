#pragma once

#include <vector>

namespace urbanstep {

struct Point {
  double x = 0.0;
  double y = 0.0;

  bool operator==(const Point&) const = default;
};

using Ring = std::vector<Point>;
using LineString = std::vector<Point>;

struct Polygon {
  Ring outer;
  std::vector<Ring> holes;

  bool operator==(const Polygon&) const = default;
};

// Axis-aligned box, min inclusive, max inclusive.
struct BBox {
  double min_x = 0.0;
  double min_y = 0.0;
  double max_x = 0.0;
  double max_y = 0.0;

  double width() const { return max_x - min_x; }
  double height() const { return max_y - min_y; }
  bool operator==(const BBox&) const = default;
};

// True when `inner` lies within `outer`, allowing `eps` slack on each side.
bool contains(const BBox& outer, const BBox& inner, double eps = 1e-6);
// Positive-area overlap; boxes that only share an edge do not overlap.
bool overlaps(const BBox& a, const BBox& b, double eps = 1e-6);
double overlap_area(const BBox& a, const BBox& b);

double ring_area(const Ring& ring);  // signed, shoelace
double polygon_area(const Polygon& polygon);
BBox bounds(const Ring& ring);

// Sutherland-Hodgman against a rectangle, applied ring by ring. Rings that
// vanish are dropped; an empty result means the polygon lies outside.
Ring clip_ring(const Ring& ring, const BBox& box);
std::vector<Polygon> clip_polygon(const Polygon& polygon, const BBox& box);
// Liang-Barsky per segment; returns the inside pieces as separate lines.
std::vector<LineString> clip_linestring(const LineString& line, const BBox& box);

}  // namespace urbanstep
