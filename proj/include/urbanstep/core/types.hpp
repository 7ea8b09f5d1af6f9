#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace urbanstep {

enum class LandUseCategory : std::uint8_t {
  Residential = 0,
  Commercial = 1,
  Manufacturing = 2,
  Park = 3,
  MixedUse = 4,
};
inline constexpr std::size_t kLandUseCount = 5;

enum class HeightClass : std::uint8_t {
  LowStory = 0,
  MediumStory = 1,
  HighStory = 2,
};
inline constexpr std::size_t kHeightClassCount = 3;

enum class PixelClass : std::uint8_t {
  Background = 0,
  Water = 1,
  Railway = 2,
  MajorRoad = 3,
  MinorRoad = 4,
  Residential = 5,
  Commercial = 6,
  Manufacturing = 7,
  Park = 8,
  MixedUse = 9,
  BuildingLow = 10,
  BuildingMid = 11,
  BuildingHigh = 12,
};
inline constexpr std::size_t kPixelClassCount = 13;

constexpr PixelClass to_pixel_class(LandUseCategory c) {
  return static_cast<PixelClass>(static_cast<int>(PixelClass::Residential) + static_cast<int>(c));
}
constexpr PixelClass to_pixel_class(HeightClass h) {
  return static_cast<PixelClass>(static_cast<int>(PixelClass::BuildingLow) + static_cast<int>(h));
}
std::optional<LandUseCategory> land_use_of(PixelClass c);
std::optional<HeightClass> height_of(PixelClass c);
constexpr bool is_road(PixelClass c) { return c == PixelClass::MajorRoad || c == PixelClass::MinorRoad; }
constexpr bool is_site_constraint(PixelClass c) {
  return c == PixelClass::Water || c == PixelClass::Railway || c == PixelClass::MajorRoad;
}

std::string_view name(PixelClass c);
std::string_view name(LandUseCategory c);
std::string_view name(HeightClass c);
std::optional<PixelClass> pixel_class_from_name(std::string_view s);
std::optional<LandUseCategory> land_use_from_name(std::string_view s);

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;

  auto operator<=>(const Rgb&) const = default;
};

enum class ImageKind : std::uint8_t { SiteConstraints, Stage1Plan, Stage2Plan, Satellite };

std::string_view name(ImageKind k);
std::optional<ImageKind> image_kind_from_name(std::string_view s);

// Generation stage. Combined is the single-shot variant covering stages 1 and 2.
enum class Stage : std::uint8_t { One = 1, Two = 2, Three = 3, Combined = 4 };

std::string_view name(Stage s);  // "1", "2", "3", "combined"
std::optional<Stage> stage_from_name(std::string_view s);
// Kind of the image a stage is conditioned on, and of the image it produces.
ImageKind constraint_kind(Stage s);
ImageKind output_kind(Stage s);

inline constexpr int kDefaultImageSize = 512;

// Square RGB raster tagged with the design state it represents.
class CanonicalImage {
 public:
  CanonicalImage() = default;
  CanonicalImage(ImageKind kind, int size, std::string tile_id = {}, Rgb fill = {255, 255, 255});
  CanonicalImage(ImageKind kind, int width, int height, std::vector<std::uint8_t> rgb,
                 std::string tile_id = {});

  ImageKind kind() const { return kind_; }
  int width() const { return width_; }
  int height() const { return height_; }
  const std::string& tile_id() const { return tile_id_; }
  void set_tile_id(std::string id) { tile_id_ = std::move(id); }
  void set_kind(ImageKind kind) { kind_ = kind; }

  Rgb pixel(int x, int y) const {
    const std::size_t i = index(x, y);
    return {rgb_[i], rgb_[i + 1], rgb_[i + 2]};
  }
  void set_pixel(int x, int y, Rgb c) {
    const std::size_t i = index(x, y);
    rgb_[i] = c.r;
    rgb_[i + 1] = c.g;
    rgb_[i + 2] = c.b;
  }

  std::span<const std::uint8_t> data() const { return rgb_; }
  std::span<std::uint8_t> data() { return rgb_; }
  bool empty() const { return width_ == 0 || height_ == 0; }

  bool operator==(const CanonicalImage&) const = default;

 private:
  std::size_t index(int x, int y) const {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x)) * 3;
  }

  ImageKind kind_ = ImageKind::SiteConstraints;
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> rgb_;
  std::string tile_id_;
};

// Per-pixel semantic classes, row-major, same dimensions as the source image.
struct ClassMap {
  int width = 0;
  int height = 0;
  std::vector<PixelClass> cells;

  ClassMap() = default;
  ClassMap(int w, int h, PixelClass fill = PixelClass::Background)
      : width(w), height(h), cells(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {}

  PixelClass at(int x, int y) const { return cells[static_cast<std::size_t>(y) * width + x]; }
  PixelClass& at(int x, int y) { return cells[static_cast<std::size_t>(y) * width + x]; }
  std::size_t size() const { return cells.size(); }

  bool operator==(const ClassMap&) const = default;
};

// The prompt-controllable quantities of one tile.
struct DesignMetrics {
  double road_density = 0.0;
  std::array<double, kLandUseCount> land_use{};
  std::array<double, kHeightClassCount> height_coverage{};
  double open_space = 1.0;

  bool operator==(const DesignMetrics&) const = default;

  // Throws ValidationError unless every component lies in [0,1], land_use
  // sums to 1 (or is all zero) and height_coverage + open_space sums to 1,
  // each within `tolerance`.
  void validate(double tolerance = 1e-9) const;
};

double land_use_sum(const DesignMetrics& m);
double building_coverage(const DesignMetrics& m);

}  // namespace urbanstep
