#pragma once

#include <array>
#include <string>

#include "urbanstep/core/types.hpp"

namespace urbanstep {

inline constexpr int kPaletteVersion = 1;
inline constexpr double kMinPaletteDistance = 80.0;

// Class -> color table. Construction checks injectivity and the minimum
// pairwise Euclidean RGB distance, so an invalid palette never exists.
class Palette {
 public:
  explicit Palette(const std::array<Rgb, kPixelClassCount>& colors);

  Rgb encode(PixelClass c) const { return colors_[static_cast<std::size_t>(c)]; }

  // Nearest palette color by Euclidean RGB distance; ties go to the lowest id.
  PixelClass decode(Rgb rgb) const;

  double min_pairwise_distance() const;
  const std::array<Rgb, kPixelClassCount>& colors() const { return colors_; }

  // {"version":1,"classes":[{"name":..,"id":..,"rgb":[r,g,b]},..]}
  std::string to_json() const;

 private:
  std::array<Rgb, kPixelClassCount> colors_;
};

const Palette& default_palette();

Rgb encode_class(PixelClass c);
PixelClass decode_color(Rgb rgb);

ClassMap classify_image(const CanonicalImage& img, const Palette& palette = default_palette());

// Paints a class map with palette colors.
CanonicalImage paint(const ClassMap& map, ImageKind kind, const Palette& palette = default_palette(),
                     std::string tile_id = {});

// Fraction of pixels whose color lies within `threshold` of some palette color.
double palette_conformance(const CanonicalImage& img, double threshold = 20.0,
                           const Palette& palette = default_palette());

}  // namespace urbanstep
