#pragma once

#include <cstdint>

#include "urbanstep/core/types.hpp"
#include "urbanstep/tiler.hpp"

namespace urbanstep::testing {

Polygon rect(double x0, double y0, double x1, double y1);

// Random but plausible tile: a lattice of land-use parcels, a few major and
// minor roads, maybe water and a railway, and rectangular buildings inside
// parcels. All shapes are at least ~10 m across.
VectorLayerBundle synthetic_bundle(std::uint64_t seed, double side = 450.0);

// Site-constraint image with a random mix of water, a railway and major roads.
CanonicalImage synthetic_site(std::uint64_t seed, int size = kDefaultImageSize);

// Land-use vector drawn from a sparse Dirichlet-like process, sums to 1.
std::array<double, kLandUseCount> random_land_use(std::uint64_t seed);

}  // namespace urbanstep::testing
