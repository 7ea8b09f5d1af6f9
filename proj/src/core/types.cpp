#include "urbanstep/core/types.hpp"

#include <cmath>
#include <sstream>

#include "urbanstep/error.hpp"

namespace urbanstep {

std::string_view category_name(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::Config: return "config";
    case ErrorCategory::Validation: return "validation";
    case ErrorCategory::InvalidTransition: return "invalid_transition";
    case ErrorCategory::Precondition: return "precondition";
    case ErrorCategory::Parse: return "parse";
    case ErrorCategory::NotFound: return "not_found";
    case ErrorCategory::Network: return "network";
    case ErrorCategory::Timeout: return "timeout";
    case ErrorCategory::Protocol: return "protocol";
    case ErrorCategory::Backend: return "backend";
    case ErrorCategory::CorruptLog: return "corrupt_log";
    case ErrorCategory::Io: return "io";
  }
  return "unknown";
}

namespace {

constexpr std::array<std::string_view, kPixelClassCount> kPixelClassNames = {
    "Background", "Water",      "Railway", "MajorRoad",   "MinorRoad",   "Residential", "Commercial",
    "Manufacturing", "Park",    "MixedUse", "BuildingLow", "BuildingMid", "BuildingHigh",
};

constexpr std::array<std::string_view, kLandUseCount> kLandUseNames = {
    "Residential", "Commercial", "Manufacturing", "Park", "MixedUse",
};

constexpr std::array<std::string_view, kHeightClassCount> kHeightNames = {
    "LowStory", "MediumStory", "HighStory",
};

constexpr std::array<std::string_view, 4> kImageKindNames = {
    "site_constraints", "stage1_plan", "stage2_plan", "satellite",
};

}  // namespace

std::optional<LandUseCategory> land_use_of(PixelClass c) {
  const int id = static_cast<int>(c);
  if (id >= static_cast<int>(PixelClass::Residential) && id <= static_cast<int>(PixelClass::MixedUse)) {
    return static_cast<LandUseCategory>(id - static_cast<int>(PixelClass::Residential));
  }
  return std::nullopt;
}

std::optional<HeightClass> height_of(PixelClass c) {
  const int id = static_cast<int>(c);
  if (id >= static_cast<int>(PixelClass::BuildingLow) && id <= static_cast<int>(PixelClass::BuildingHigh)) {
    return static_cast<HeightClass>(id - static_cast<int>(PixelClass::BuildingLow));
  }
  return std::nullopt;
}

std::string_view name(PixelClass c) {
  const auto id = static_cast<std::size_t>(c);
  return id < kPixelClassNames.size() ? kPixelClassNames[id] : "Unknown";
}

std::string_view name(LandUseCategory c) {
  const auto id = static_cast<std::size_t>(c);
  return id < kLandUseNames.size() ? kLandUseNames[id] : "Unknown";
}

std::string_view name(HeightClass c) {
  const auto id = static_cast<std::size_t>(c);
  return id < kHeightNames.size() ? kHeightNames[id] : "Unknown";
}

std::string_view name(ImageKind k) {
  const auto id = static_cast<std::size_t>(k);
  return id < kImageKindNames.size() ? kImageKindNames[id] : "unknown";
}

std::optional<PixelClass> pixel_class_from_name(std::string_view s) {
  for (std::size_t i = 0; i < kPixelClassNames.size(); ++i) {
    if (kPixelClassNames[i] == s) return static_cast<PixelClass>(i);
  }
  return std::nullopt;
}

std::optional<LandUseCategory> land_use_from_name(std::string_view s) {
  for (std::size_t i = 0; i < kLandUseNames.size(); ++i) {
    if (kLandUseNames[i] == s) return static_cast<LandUseCategory>(i);
  }
  return std::nullopt;
}

std::optional<ImageKind> image_kind_from_name(std::string_view s) {
  for (std::size_t i = 0; i < kImageKindNames.size(); ++i) {
    if (kImageKindNames[i] == s) return static_cast<ImageKind>(i);
  }
  return std::nullopt;
}

std::string_view name(Stage s) {
  switch (s) {
    case Stage::One: return "1";
    case Stage::Two: return "2";
    case Stage::Three: return "3";
    case Stage::Combined: return "combined";
  }
  return "unknown";
}

std::optional<Stage> stage_from_name(std::string_view s) {
  if (s == "1") return Stage::One;
  if (s == "2") return Stage::Two;
  if (s == "3") return Stage::Three;
  if (s == "combined") return Stage::Combined;
  return std::nullopt;
}

ImageKind constraint_kind(Stage s) {
  switch (s) {
    case Stage::One:
    case Stage::Combined: return ImageKind::SiteConstraints;
    case Stage::Two: return ImageKind::Stage1Plan;
    case Stage::Three: return ImageKind::Stage2Plan;
  }
  return ImageKind::SiteConstraints;
}

ImageKind output_kind(Stage s) {
  switch (s) {
    case Stage::One: return ImageKind::Stage1Plan;
    case Stage::Two:
    case Stage::Combined: return ImageKind::Stage2Plan;
    case Stage::Three: return ImageKind::Satellite;
  }
  return ImageKind::Stage1Plan;
}

CanonicalImage::CanonicalImage(ImageKind kind, int size, std::string tile_id, Rgb fill)
    : kind_(kind), width_(size), height_(size), tile_id_(std::move(tile_id)) {
  if (size <= 0) fail(ErrorCategory::Validation, "image size must be positive");
  rgb_.resize(static_cast<std::size_t>(size) * static_cast<std::size_t>(size) * 3);
  for (std::size_t i = 0; i < rgb_.size(); i += 3) {
    rgb_[i] = fill.r;
    rgb_[i + 1] = fill.g;
    rgb_[i + 2] = fill.b;
  }
}

CanonicalImage::CanonicalImage(ImageKind kind, int width, int height, std::vector<std::uint8_t> rgb,
                               std::string tile_id)
    : kind_(kind), width_(width), height_(height), rgb_(std::move(rgb)), tile_id_(std::move(tile_id)) {
  if (width <= 0 || height <= 0) fail(ErrorCategory::Validation, "image dimensions must be positive");
  if (width != height) {
    fail(ErrorCategory::Validation,
         "canonical images are square, got " + std::to_string(width) + "x" + std::to_string(height));
  }
  if (rgb_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3) {
    fail(ErrorCategory::Validation, "pixel buffer size does not match dimensions");
  }
}

double land_use_sum(const DesignMetrics& m) {
  double s = 0.0;
  for (double v : m.land_use) s += v;
  return s;
}

double building_coverage(const DesignMetrics& m) {
  double s = 0.0;
  for (double v : m.height_coverage) s += v;
  return s;
}

void DesignMetrics::validate(double tolerance) const {
  auto check_unit = [](double v, std::string_view what) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
      std::ostringstream os;
      os << what << " = " << v << " is outside [0,1]";
      fail(ErrorCategory::Validation, os.str());
    }
  };
  check_unit(road_density, "road_density");
  for (std::size_t i = 0; i < land_use.size(); ++i) {
    check_unit(land_use[i], std::string("land_use.") + std::string(name(static_cast<LandUseCategory>(i))));
  }
  for (std::size_t i = 0; i < height_coverage.size(); ++i) {
    check_unit(height_coverage[i], std::string("height_coverage.") + std::string(name(static_cast<HeightClass>(i))));
  }
  check_unit(open_space, "open_space");

  const double lu = land_use_sum(*this);
  if (lu != 0.0 && std::abs(lu - 1.0) > tolerance) {
    std::ostringstream os;
    os << "land_use sums to " << lu << ", expected 1 (or all zero)";
    fail(ErrorCategory::Validation, os.str());
  }
  const double cover = building_coverage(*this) + open_space;
  if (std::abs(cover - 1.0) > tolerance) {
    std::ostringstream os;
    os << "height_coverage + open_space sums to " << cover << ", expected 1";
    fail(ErrorCategory::Validation, os.str());
  }
}

}  // namespace urbanstep
