#include "urbanstep/tiler.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"

#include "urbanstep/core/random.hpp"
#include "urbanstep/error.hpp"

namespace urbanstep {

using nlohmann::json;

std::string_view name(SplitLabel s) {
  switch (s) {
    case SplitLabel::Train: return "train";
    case SplitLabel::Test: return "test";
    case SplitLabel::Excluded: return "excluded";
  }
  return "unknown";
}

std::size_t TileSet::count(SplitLabel label) const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), label));
}

std::vector<GridCell> partition(const BBox& extent, double cell_size) {
  if (!(cell_size > 0.0)) fail(ErrorCategory::Validation, "cell size must be positive");
  std::vector<GridCell> cells;
  if (extent.width() < cell_size || extent.height() < cell_size) return cells;
  const int cols = static_cast<int>(std::floor(extent.width() / cell_size + 1e-9));
  const int rows = static_cast<int>(std::floor(extent.height() / cell_size + 1e-9));
  cells.reserve(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols));
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      GridCell cell;
      cell.id = "r" + std::to_string(r) + "c" + std::to_string(c);
      cell.x = extent.min_x + c * cell_size;
      cell.y = extent.max_y - r * cell_size;
      cell.side = cell_size;
      cell.parent_id = cell.id;
      cell.row = r;
      cell.col = c;
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

std::vector<GridCell> augment(std::span<const GridCell> cells, const BBox& extent) {
  std::vector<GridCell> out;
  out.reserve(cells.size() * 9);
  for (const auto& base : cells) {
    if (!base.is_base()) {
      fail(ErrorCategory::Validation, "augment expects base cells, got shifted cell " + base.id);
    }
    for (int sy = 0; sy < 3; ++sy) {
      for (int sx = 0; sx < 3; ++sx) {
        GridCell cell = base;
        cell.shift_x = sx;
        cell.shift_y = sy;
        cell.x = base.x + sx * base.side / 3.0;
        cell.y = base.y - sy * base.side / 3.0;
        cell.parent_id = base.id;
        if (!cell.is_base()) cell.id = base.id + "+" + std::to_string(sx) + std::to_string(sy);
        if (contains(extent, cell.footprint())) out.push_back(std::move(cell));
      }
    }
  }
  return out;
}

TileSet split(std::vector<GridCell> cells, double test_ratio, std::uint64_t seed, const BBox& extent,
              std::string crs) {
  if (!(test_ratio > 0.0 && test_ratio < 1.0)) {
    fail(ErrorCategory::Validation, "test_ratio must lie in (0,1)");
  }
  TileSet tiles;
  tiles.crs = std::move(crs);
  tiles.extent = extent;
  tiles.seed = seed;
  tiles.test_ratio = test_ratio;
  tiles.cells = std::move(cells);
  tiles.labels.assign(tiles.cells.size(), SplitLabel::Train);

  std::vector<std::size_t> base;
  for (std::size_t i = 0; i < tiles.cells.size(); ++i) {
    if (tiles.cells[i].is_base()) base.push_back(i);
  }
  if (base.empty()) return tiles;

  const auto wanted = static_cast<std::size_t>(std::llround(test_ratio * static_cast<double>(base.size())));
  const std::size_t k = std::clamp<std::size_t>(wanted, 1, base.size());

  // Partial Fisher-Yates: the first k slots are a uniform sample without replacement.
  Rng rng(seed);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(base.size() - i));
    std::swap(base[i], base[j]);
  }
  std::vector<BBox> test_boxes;
  for (std::size_t i = 0; i < k; ++i) {
    tiles.labels[base[i]] = SplitLabel::Test;
    test_boxes.push_back(tiles.cells[base[i]].footprint());
  }
  for (std::size_t i = 0; i < tiles.cells.size(); ++i) {
    if (tiles.labels[i] == SplitLabel::Test) continue;
    const BBox fp = tiles.cells[i].footprint();
    for (const auto& t : test_boxes) {
      if (overlaps(fp, t)) {
        tiles.labels[i] = SplitLabel::Excluded;
        break;
      }
    }
  }
  return tiles;
}

std::string tileset_to_json(const TileSet& tiles) {
  json cells = json::array();
  for (std::size_t i = 0; i < tiles.cells.size(); ++i) {
    const auto& c = tiles.cells[i];
    cells.push_back({{"id", c.id},
                     {"x", c.x},
                     {"y", c.y},
                     {"side", c.side},
                     {"shift", {c.shift_x, c.shift_y}},
                     {"parent", c.parent_id},
                     {"row", c.row},
                     {"col", c.col},
                     {"split", i < tiles.labels.size() ? name(tiles.labels[i]) : "train"}});
  }
  json doc = {{"version", 1},
              {"crs", tiles.crs},
              {"extent", {tiles.extent.min_x, tiles.extent.min_y, tiles.extent.max_x, tiles.extent.max_y}},
              {"seed", tiles.seed},
              {"test_ratio", tiles.test_ratio},
              {"counts",
               {{"train", tiles.count(SplitLabel::Train)},
                {"test", tiles.count(SplitLabel::Test)},
                {"excluded", tiles.count(SplitLabel::Excluded)}}},
              {"cells", cells}};
  return doc.dump(2);
}

TileSet tileset_from_json(const std::string& text) {
  TileSet tiles;
  try {
    const json doc = json::parse(text);
    tiles.crs = doc.value("crs", "");
    const auto& e = doc.at("extent");
    tiles.extent = {e.at(0).get<double>(), e.at(1).get<double>(), e.at(2).get<double>(), e.at(3).get<double>()};
    tiles.seed = doc.at("seed").get<std::uint64_t>();
    tiles.test_ratio = doc.at("test_ratio").get<double>();
    for (const auto& c : doc.at("cells")) {
      GridCell cell;
      cell.id = c.at("id").get<std::string>();
      cell.x = c.at("x").get<double>();
      cell.y = c.at("y").get<double>();
      cell.side = c.at("side").get<double>();
      cell.shift_x = c.at("shift").at(0).get<int>();
      cell.shift_y = c.at("shift").at(1).get<int>();
      cell.parent_id = c.at("parent").get<std::string>();
      cell.row = c.value("row", 0);
      cell.col = c.value("col", 0);
      const auto label = c.at("split").get<std::string>();
      if (label == "train") {
        tiles.labels.push_back(SplitLabel::Train);
      } else if (label == "test") {
        tiles.labels.push_back(SplitLabel::Test);
      } else if (label == "excluded") {
        tiles.labels.push_back(SplitLabel::Excluded);
      } else {
        fail(ErrorCategory::Validation, "unknown split label '" + label + "' for cell " + cell.id);
      }
      tiles.cells.push_back(std::move(cell));
    }
  } catch (const json::exception& ex) {
    fail(ErrorCategory::Validation, std::string("malformed tileset manifest: ") + ex.what());
  }
  return tiles;
}

namespace {

Ring to_local(const Ring& ring, const GridCell& cell) {
  Ring out;
  out.reserve(ring.size());
  for (const auto& p : ring) out.push_back({p.x - cell.x, cell.y - p.y});
  return out;
}

std::vector<Polygon> clip_local(const Polygon& poly, const GridCell& cell) {
  std::vector<Polygon> out;
  for (auto& clipped : clip_polygon(poly, cell.footprint())) {
    Polygon local;
    local.outer = to_local(clipped.outer, cell);
    for (const auto& h : clipped.holes) local.holes.push_back(to_local(h, cell));
    out.push_back(std::move(local));
  }
  return out;
}

std::vector<LineString> clip_local(const LineString& line, const GridCell& cell) {
  std::vector<LineString> out;
  for (auto& piece : clip_linestring(line, cell.footprint())) out.push_back(to_local(piece, cell));
  return out;
}

bool box_may_intersect(const Ring& ring, const BBox& box) {
  const BBox b = bounds(ring);
  return !(b.max_x < box.min_x || b.min_x > box.max_x || b.max_y < box.min_y || b.min_y > box.max_y);
}

}  // namespace

VectorLayerBundle clip(const GridCell& cell, const CityLayers& layers, const std::string& grid_crs) {
  if (layers.crs != grid_crs) {
    fail(ErrorCategory::Config,
         "CRS mismatch: layers are in '" + layers.crs + "' but the grid is in '" + grid_crs + "'");
  }
  const BBox fp = cell.footprint();
  VectorLayerBundle bundle;
  bundle.tile_id = cell.id;
  bundle.side = cell.side;

  for (const auto& w : layers.water) {
    if (!box_may_intersect(w.outer, fp)) continue;
    for (auto& p : clip_local(w, cell)) bundle.water.push_back(std::move(p));
  }
  auto clip_lines = [&](const std::vector<LineString>& src, std::vector<LineString>& dst) {
    for (const auto& l : src) {
      if (!box_may_intersect(l, fp)) continue;
      for (auto& piece : clip_local(l, cell)) dst.push_back(std::move(piece));
    }
  };
  clip_lines(layers.railways, bundle.railways);
  clip_lines(layers.major_roads, bundle.major_roads);
  clip_lines(layers.minor_roads, bundle.minor_roads);
  for (const auto& parcel : layers.land_use) {
    if (!box_may_intersect(parcel.shape.outer, fp)) continue;
    for (auto& p : clip_local(parcel.shape, cell)) bundle.land_use.push_back({std::move(p), parcel.category});
  }
  for (const auto& b : layers.buildings) {
    if (!box_may_intersect(b.footprint.outer, fp)) continue;
    for (auto& p : clip_local(b.footprint, cell)) bundle.buildings.push_back({std::move(p), b.height});
  }
  return bundle;
}

}  // namespace urbanstep
