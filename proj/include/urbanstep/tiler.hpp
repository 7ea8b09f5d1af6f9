#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "urbanstep/core/types.hpp"
#include "urbanstep/geometry.hpp"

namespace urbanstep {

inline constexpr double kCellSize = 450.0;

// One square tile. `x`/`y` are the top-left corner (min x, max y) in the
// projected CRS; shifted cells move right (+x) and down (-y) by thirds of
// the side.
struct GridCell {
  std::string id;
  double x = 0.0;
  double y = 0.0;
  double side = kCellSize;
  int shift_x = 0;  // thirds of `side`, 0..2
  int shift_y = 0;
  std::string parent_id;
  int row = 0;  // of the parent base cell
  int col = 0;

  bool is_base() const { return shift_x == 0 && shift_y == 0; }
  BBox footprint() const { return {x, y - side, x + side, y}; }
  bool operator==(const GridCell&) const = default;
};

enum class SplitLabel : std::uint8_t { Train, Test, Excluded };
std::string_view name(SplitLabel s);

struct TileSet {
  std::string crs;
  BBox extent;
  std::vector<GridCell> cells;
  std::vector<SplitLabel> labels;  // parallel to cells
  std::uint64_t seed = 0;
  double test_ratio = 0.1;

  std::size_t count(SplitLabel label) const;
  bool operator==(const TileSet&) const = default;
};

// Row-major base cells (row 0 at the top of the extent) fully inside the
// extent. Partial edge cells are dropped.
std::vector<GridCell> partition(const BBox& extent, double cell_size = kCellSize);

// Emits the 9 right/down shifts (0, 1/3, 2/3 of the side on each axis) of
// every base cell, keeping those whose footprint lies inside the extent.
// Throws Validation on a non-base input cell.
std::vector<GridCell> augment(std::span<const GridCell> cells, const BBox& extent);

// Labels round(test_ratio * #base) base cells (at least one) as Test, every
// other cell overlapping a test footprint as Excluded, the rest Train.
TileSet split(std::vector<GridCell> cells, double test_ratio, std::uint64_t seed, const BBox& extent = {},
              std::string crs = {});

std::string tileset_to_json(const TileSet& tiles);
TileSet tileset_from_json(const std::string& text);

struct LandUseParcel {
  Polygon shape;
  LandUseCategory category = LandUseCategory::Residential;
};

struct Building {
  Polygon footprint;
  std::optional<double> height;  // unit-agnostic (meters or stories)
};

// Vector layers of a whole city in one projected CRS.
struct CityLayers {
  std::string crs;
  std::vector<Polygon> water;
  std::vector<LineString> railways;
  std::vector<LineString> major_roads;
  std::vector<LineString> minor_roads;
  std::vector<LandUseParcel> land_use;
  std::vector<Building> buildings;
};

// Layers clipped to one tile, in tile-local meters: origin at the tile's
// top-left corner, x to the right, y downward.
struct VectorLayerBundle {
  std::string tile_id;
  double side = kCellSize;
  std::vector<Polygon> water;
  std::vector<LineString> railways;
  std::vector<LineString> major_roads;
  std::vector<LineString> minor_roads;
  std::vector<LandUseParcel> land_use;
  std::vector<Building> buildings;
};

// Throws Config when the layers' CRS differs from `grid_crs`.
VectorLayerBundle clip(const GridCell& cell, const CityLayers& layers, const std::string& grid_crs);

}  // namespace urbanstep
