#include "urbanstep/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace urbanstep {

bool contains(const BBox& outer, const BBox& inner, double eps) {
  return inner.min_x >= outer.min_x - eps && inner.min_y >= outer.min_y - eps && inner.max_x <= outer.max_x + eps &&
         inner.max_y <= outer.max_y + eps;
}

bool overlaps(const BBox& a, const BBox& b, double eps) {
  return std::min(a.max_x, b.max_x) - std::max(a.min_x, b.min_x) > eps &&
         std::min(a.max_y, b.max_y) - std::max(a.min_y, b.min_y) > eps;
}

double overlap_area(const BBox& a, const BBox& b) {
  const double w = std::min(a.max_x, b.max_x) - std::max(a.min_x, b.min_x);
  const double h = std::min(a.max_y, b.max_y) - std::max(a.min_y, b.min_y);
  return (w > 0 && h > 0) ? w * h : 0.0;
}

double ring_area(const Ring& ring) {
  if (ring.size() < 3) return 0.0;
  double twice = 0.0;
  for (std::size_t i = 0, j = ring.size() - 1; i < ring.size(); j = i++) {
    twice += ring[j].x * ring[i].y - ring[i].x * ring[j].y;
  }
  return 0.5 * twice;
}

double polygon_area(const Polygon& polygon) {
  double a = std::abs(ring_area(polygon.outer));
  for (const auto& h : polygon.holes) a -= std::abs(ring_area(h));
  return std::max(a, 0.0);
}

BBox bounds(const Ring& ring) {
  BBox b{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
         -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const auto& p : ring) {
    b.min_x = std::min(b.min_x, p.x);
    b.min_y = std::min(b.min_y, p.y);
    b.max_x = std::max(b.max_x, p.x);
    b.max_y = std::max(b.max_y, p.y);
  }
  return b;
}

namespace {

enum class Edge { Left, Right, Bottom, Top };

bool inside(const Point& p, Edge e, const BBox& b) {
  switch (e) {
    case Edge::Left: return p.x >= b.min_x;
    case Edge::Right: return p.x <= b.max_x;
    case Edge::Bottom: return p.y >= b.min_y;
    case Edge::Top: return p.y <= b.max_y;
  }
  return false;
}

Point intersect(const Point& a, const Point& c, Edge e, const BBox& b) {
  double t = 0.0;
  switch (e) {
    case Edge::Left: t = (b.min_x - a.x) / (c.x - a.x); return {b.min_x, a.y + t * (c.y - a.y)};
    case Edge::Right: t = (b.max_x - a.x) / (c.x - a.x); return {b.max_x, a.y + t * (c.y - a.y)};
    case Edge::Bottom: t = (b.min_y - a.y) / (c.y - a.y); return {a.x + t * (c.x - a.x), b.min_y};
    case Edge::Top: t = (b.max_y - a.y) / (c.y - a.y); return {a.x + t * (c.x - a.x), b.max_y};
  }
  return a;
}

}  // namespace

Ring clip_ring(const Ring& ring, const BBox& box) {
  Ring out = ring;
  if (!out.empty() && out.front() == out.back()) out.pop_back();
  for (Edge e : {Edge::Left, Edge::Right, Edge::Bottom, Edge::Top}) {
    if (out.empty()) break;
    Ring in = std::move(out);
    out.clear();
    Point prev = in.back();
    bool prev_in = inside(prev, e, box);
    for (const Point& cur : in) {
      const bool cur_in = inside(cur, e, box);
      if (cur_in) {
        if (!prev_in) out.push_back(intersect(prev, cur, e, box));
        out.push_back(cur);
      } else if (prev_in) {
        out.push_back(intersect(prev, cur, e, box));
      }
      prev = cur;
      prev_in = cur_in;
    }
  }
  if (out.size() < 3 || std::abs(ring_area(out)) <= 0.0) return {};
  return out;
}

std::vector<Polygon> clip_polygon(const Polygon& polygon, const BBox& box) {
  Polygon out;
  out.outer = clip_ring(polygon.outer, box);
  if (out.outer.empty()) return {};
  for (const auto& h : polygon.holes) {
    Ring c = clip_ring(h, box);
    if (!c.empty()) out.holes.push_back(std::move(c));
  }
  return {std::move(out)};
}

std::vector<LineString> clip_linestring(const LineString& line, const BBox& box) {
  std::vector<LineString> pieces;
  LineString current;
  for (std::size_t i = 0; i + 1 < line.size(); ++i) {
    const Point a = line[i];
    const Point b = line[i + 1];
    const double dx = b.x - a.x;
    const double dy = b.y - a.y;
    double t0 = 0.0;
    double t1 = 1.0;
    bool visible = true;
    const double p[4] = {-dx, dx, -dy, dy};
    const double q[4] = {a.x - box.min_x, box.max_x - a.x, a.y - box.min_y, box.max_y - a.y};
    for (int k = 0; k < 4 && visible; ++k) {
      if (p[k] == 0.0) {
        if (q[k] < 0.0) visible = false;
      } else {
        const double t = q[k] / p[k];
        if (p[k] < 0.0) {
          t0 = std::max(t0, t);
        } else {
          t1 = std::min(t1, t);
        }
        if (t0 > t1) visible = false;
      }
    }
    if (!visible) {
      if (current.size() >= 2) pieces.push_back(std::move(current));
      current.clear();
      continue;
    }
    const Point s{a.x + t0 * dx, a.y + t0 * dy};
    const Point e{a.x + t1 * dx, a.y + t1 * dy};
    if (current.empty() || !(current.back() == s)) {
      if (current.size() >= 2) pieces.push_back(std::move(current));
      current.clear();
      current.push_back(s);
    }
    current.push_back(e);
    if (t1 < 1.0) {
      pieces.push_back(std::move(current));
      current.clear();
    }
  }
  if (current.size() >= 2) pieces.push_back(std::move(current));
  return pieces;
}

}  // namespace urbanstep
