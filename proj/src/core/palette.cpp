#include "urbanstep/core/palette.hpp"

#include <cmath>
#include <limits>

#include "json.hpp"

#include "urbanstep/error.hpp"

namespace urbanstep {

namespace {

int squared_distance(Rgb a, Rgb b) {
  const int dr = int{a.r} - int{b.r};
  const int dg = int{a.g} - int{b.g};
  const int db = int{a.b} - int{b.b};
  return dr * dr + dg * dg + db * db;
}

constexpr std::array<Rgb, kPixelClassCount> kDefaultColors = {{
    {255, 255, 255},  // Background
    {0, 112, 255},    // Water
    {139, 69, 19},    // Railway
    {0, 0, 0},        // MajorRoad
    {85, 110, 120},   // MinorRoad
    {255, 255, 0},    // Residential
    {255, 0, 0},      // Commercial
    {160, 32, 240},   // Manufacturing
    {0, 176, 80},     // Park
    {255, 165, 0},    // MixedUse
    {205, 205, 205},  // BuildingLow
    {150, 150, 150},  // BuildingMid
    {60, 60, 60},     // BuildingHigh
}};

}  // namespace

Palette::Palette(const std::array<Rgb, kPixelClassCount>& colors) : colors_(colors) {
  for (std::size_t i = 0; i < colors_.size(); ++i) {
    for (std::size_t j = i + 1; j < colors_.size(); ++j) {
      if (colors_[i] == colors_[j]) {
        fail(ErrorCategory::Config, "palette is not injective: " + std::string(name(static_cast<PixelClass>(i))) +
                                        " and " + std::string(name(static_cast<PixelClass>(j))) + " share a color");
      }
      if (std::sqrt(static_cast<double>(squared_distance(colors_[i], colors_[j]))) < kMinPaletteDistance) {
        fail(ErrorCategory::Config, "palette colors of " + std::string(name(static_cast<PixelClass>(i))) + " and " +
                                        std::string(name(static_cast<PixelClass>(j))) + " are closer than 80");
      }
    }
  }
}

PixelClass Palette::decode(Rgb rgb) const {
  std::size_t best = 0;
  int best_d = std::numeric_limits<int>::max();
  for (std::size_t i = 0; i < colors_.size(); ++i) {
    const int d = squared_distance(rgb, colors_[i]);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return static_cast<PixelClass>(best);
}

double Palette::min_pairwise_distance() const {
  int best = std::numeric_limits<int>::max();
  for (std::size_t i = 0; i < colors_.size(); ++i) {
    for (std::size_t j = i + 1; j < colors_.size(); ++j) best = std::min(best, squared_distance(colors_[i], colors_[j]));
  }
  return std::sqrt(static_cast<double>(best));
}

std::string Palette::to_json() const {
  nlohmann::json classes = nlohmann::json::array();
  for (std::size_t i = 0; i < colors_.size(); ++i) {
    classes.push_back({{"name", name(static_cast<PixelClass>(i))},
                       {"id", i},
                       {"rgb", {colors_[i].r, colors_[i].g, colors_[i].b}}});
  }
  return nlohmann::json{{"version", kPaletteVersion}, {"classes", classes}}.dump(2);
}

const Palette& default_palette() {
  static const Palette palette(kDefaultColors);
  return palette;
}

Rgb encode_class(PixelClass c) { return default_palette().encode(c); }

PixelClass decode_color(Rgb rgb) { return default_palette().decode(rgb); }

ClassMap classify_image(const CanonicalImage& img, const Palette& palette) {
  if (img.empty()) fail(ErrorCategory::Validation, "cannot classify an empty image");
  ClassMap map(img.width(), img.height());
  const auto data = img.data();
  // Canonical renders are long runs of one color; reuse the last decode.
  Rgb last{data[0], data[1], data[2]};
  PixelClass last_class = palette.decode(last);
  for (std::size_t p = 0; p < map.cells.size(); ++p) {
    const Rgb c{data[3 * p], data[3 * p + 1], data[3 * p + 2]};
    if (c != last) {
      last = c;
      last_class = palette.decode(c);
    }
    map.cells[p] = last_class;
  }
  return map;
}

CanonicalImage paint(const ClassMap& map, ImageKind kind, const Palette& palette, std::string tile_id) {
  std::vector<std::uint8_t> rgb(map.cells.size() * 3);
  for (std::size_t p = 0; p < map.cells.size(); ++p) {
    const Rgb c = palette.encode(map.cells[p]);
    rgb[3 * p] = c.r;
    rgb[3 * p + 1] = c.g;
    rgb[3 * p + 2] = c.b;
  }
  return CanonicalImage(kind, map.width, map.height, std::move(rgb), std::move(tile_id));
}

double palette_conformance(const CanonicalImage& img, double threshold, const Palette& palette) {
  if (img.empty()) return 0.0;
  const int limit = static_cast<int>(std::floor(threshold * threshold));
  const auto data = img.data();
  std::size_t within = 0;
  const std::size_t n = data.size() / 3;
  for (std::size_t p = 0; p < n; ++p) {
    const Rgb c{data[3 * p], data[3 * p + 1], data[3 * p + 2]};
    if (squared_distance(c, palette.encode(palette.decode(c))) <= limit) ++within;
  }
  return static_cast<double>(within) / static_cast<double>(n);
}

}  // namespace urbanstep
