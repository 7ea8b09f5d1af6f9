#include "support/fixtures.hpp"

#include <cmath>

#include "urbanstep/core/random.hpp"
#include "urbanstep/rasterizer.hpp"

namespace urbanstep::testing {

Polygon rect(double x0, double y0, double x1, double y1) {
  return Polygon{{{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}}, {}};
}

VectorLayerBundle synthetic_bundle(std::uint64_t seed, double side) {
  Rng rng(seed);
  VectorLayerBundle b;
  b.tile_id = "synthetic-" + std::to_string(seed);
  b.side = side;

  // Parcel lattice with jittered cut lines.
  const int nx = 2 + static_cast<int>(rng.below(3));
  const int ny = 2 + static_cast<int>(rng.below(3));
  std::vector<double> xs = {0.0}, ys = {0.0};
  for (int i = 1; i < nx; ++i) xs.push_back(side * (i + rng.uniform(-0.25, 0.25)) / nx);
  for (int i = 1; i < ny; ++i) ys.push_back(side * (i + rng.uniform(-0.25, 0.25)) / ny);
  xs.push_back(side);
  ys.push_back(side);
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      if (rng.uniform() < 0.1) continue;  // unassigned parcel
      const auto cat = static_cast<LandUseCategory>(rng.below(kLandUseCount));
      b.land_use.push_back({rect(xs[i], ys[j], xs[i + 1], ys[j + 1]), cat});
      // Buildings along the parcel, inset from its edges.
      const int count = static_cast<int>(rng.below(4));
      for (int k = 0; k < count; ++k) {
        const double w = xs[i + 1] - xs[i];
        const double h = ys[j + 1] - ys[j];
        const double bw = rng.uniform(0.15, 0.4) * w;
        const double bh = rng.uniform(0.15, 0.4) * h;
        const double x0 = xs[i] + rng.uniform(0.05, 0.95) * (w - bw);
        const double y0 = ys[j] + rng.uniform(0.05, 0.95) * (h - bh);
        b.buildings.push_back({rect(x0, y0, x0 + bw, y0 + bh), rng.uniform(3.0, 120.0)});
      }
    }
  }

  // Roads along some parcel boundaries.
  for (std::size_t i = 1; i + 1 < xs.size(); ++i) {
    auto& layer = rng.uniform() < 0.4 ? b.major_roads : b.minor_roads;
    if (rng.uniform() < 0.8) layer.push_back({{xs[i], 0.0}, {xs[i], side}});
  }
  for (std::size_t j = 1; j + 1 < ys.size(); ++j) {
    auto& layer = rng.uniform() < 0.4 ? b.major_roads : b.minor_roads;
    if (rng.uniform() < 0.8) layer.push_back({{0.0, ys[j]}, {side, ys[j]}});
  }
  if (rng.uniform() < 0.3) b.minor_roads.push_back({{0.0, rng.uniform(0, side)}, {side, rng.uniform(0, side)}});

  if (rng.uniform() < 0.4) {
    const double w = rng.uniform(0.1, 0.3) * side;
    b.water.push_back(rect(0.0, side - w, rng.uniform(0.3, 0.9) * side, side));
  }
  if (rng.uniform() < 0.3) {
    const double y = rng.uniform(0.1, 0.9) * side;
    b.railways.push_back({{0.0, y}, {side * 0.5, y + rng.uniform(-40, 40)}, {side, y}});
  }
  return b;
}

CanonicalImage synthetic_site(std::uint64_t seed, int size) {
  Rng rng(seed ^ 0x5151);
  VectorLayerBundle b;
  b.tile_id = "site-" + std::to_string(seed);
  b.side = 450.0;
  if (rng.uniform() < 0.5) {
    const double w = rng.uniform(30, 120);
    b.water.push_back(rect(0, 450 - w, 450, 450));
  }
  if (rng.uniform() < 0.4) {
    const double y = rng.uniform(60, 300);
    b.railways.push_back({{0, y}, {450, y + rng.uniform(-30, 30)}});
  }
  const int majors = static_cast<int>(rng.below(3));
  for (int i = 0; i < majors; ++i) {
    if (rng.uniform() < 0.5) {
      const double x = rng.uniform(50, 400);
      b.major_roads.push_back({{x, 0}, {x + rng.uniform(-60, 60), 450}});
    } else {
      const double y = rng.uniform(50, 400);
      b.major_roads.push_back({{0, y}, {450, y + rng.uniform(-60, 60)}});
    }
  }
  RenderSpec spec;
  spec.image_size = size;
  return render_site_constraints(b, spec);
}

std::array<double, kLandUseCount> random_land_use(std::uint64_t seed) {
  Rng rng(seed ^ 0xABCD);
  std::array<double, kLandUseCount> p{};
  double s = 0.0;
  for (auto& v : p) {
    v = rng.uniform() < 0.35 ? 0.0 : -std::log(1.0 - rng.uniform());
    s += v;
  }
  if (s == 0.0) {
    p[rng.below(kLandUseCount)] = 1.0;
    return p;
  }
  for (auto& v : p) v /= s;
  return p;
}

}  // namespace urbanstep::testing
