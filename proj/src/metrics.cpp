#include "urbanstep/metrics.hpp"

#include <cmath>
#include <sstream>

#include "json.hpp"

#include "urbanstep/error.hpp"

namespace urbanstep {

MetricReport metrics_from_raster(const ClassMap& map, std::string tile_id) {
  if (map.cells.empty()) fail(ErrorCategory::Validation, "metrics_from_raster needs a nonempty class map");
  std::array<std::size_t, kPixelClassCount> counts{};
  for (PixelClass c : map.cells) ++counts[static_cast<std::size_t>(c)];

  const double total = static_cast<double>(map.cells.size());
  MetricReport report;
  report.provenance = Provenance::Raster;
  report.tile_id = std::move(tile_id);
  auto& m = report.metrics;
  m.road_density = static_cast<double>(counts[static_cast<std::size_t>(PixelClass::MajorRoad)] +
                                       counts[static_cast<std::size_t>(PixelClass::MinorRoad)]) /
                   total;

  std::size_t land = 0;
  for (std::size_t i = 0; i < kLandUseCount; ++i) {
    land += counts[static_cast<std::size_t>(to_pixel_class(static_cast<LandUseCategory>(i)))];
  }
  for (std::size_t i = 0; i < kLandUseCount; ++i) {
    const auto n = counts[static_cast<std::size_t>(to_pixel_class(static_cast<LandUseCategory>(i)))];
    m.land_use[i] = land > 0 ? static_cast<double>(n) / static_cast<double>(land) : 0.0;
  }

  std::size_t built = 0;
  for (std::size_t i = 0; i < kHeightClassCount; ++i) {
    const auto n = counts[static_cast<std::size_t>(to_pixel_class(static_cast<HeightClass>(i)))];
    m.height_coverage[i] = static_cast<double>(n) / total;
    built += n;
  }
  m.open_space = static_cast<double>(map.cells.size() - built) / total;
  return report;
}

double entropy(std::span<const double> p) {
  double sum = 0.0;
  for (double v : p) {
    if (!(v >= 0.0)) fail(ErrorCategory::Validation, "entropy needs nonnegative components");
    sum += v;
  }
  if (sum == 0.0) return 0.0;
  if (std::abs(sum - 1.0) > 1e-9) {
    std::ostringstream os;
    os << "entropy needs a distribution summing to 1, got " << sum;
    fail(ErrorCategory::Validation, os.str());
  }
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

namespace {

constexpr const char* kLandUseKeys[kLandUseCount] = {"residential", "commercial", "manufacturing", "park",
                                                     "mixed_use"};
constexpr const char* kHeightKeys[kHeightClassCount] = {"low", "mid", "high"};

}  // namespace

std::string report_to_json(const MetricReport& report) {
  nlohmann::json lu = nlohmann::json::object();
  for (std::size_t i = 0; i < kLandUseCount; ++i) lu[kLandUseKeys[i]] = report.metrics.land_use[i];
  nlohmann::json hc = nlohmann::json::object();
  for (std::size_t i = 0; i < kHeightClassCount; ++i) hc[kHeightKeys[i]] = report.metrics.height_coverage[i];
  nlohmann::json row = {{"tile_id", report.tile_id},
                        {"provenance", report.provenance == Provenance::Vector ? "vector" : "raster"},
                        {"road_density", report.metrics.road_density},
                        {"land_use", lu},
                        {"height_coverage", hc},
                        {"open_space", report.metrics.open_space}};
  return row.dump();
}

std::string reports_to_csv(std::span<const MetricReport> reports) {
  std::ostringstream os;
  os.precision(10);
  os << "tile_id,provenance,road_density";
  for (const char* k : kLandUseKeys) os << ",land_use_" << k;
  for (const char* k : kHeightKeys) os << ",height_" << k;
  os << ",open_space\n";
  for (const auto& r : reports) {
    os << r.tile_id << ',' << (r.provenance == Provenance::Vector ? "vector" : "raster") << ','
       << r.metrics.road_density;
    for (double v : r.metrics.land_use) os << ',' << v;
    for (double v : r.metrics.height_coverage) os << ',' << v;
    os << ',' << r.metrics.open_space << '\n';
  }
  return os.str();
}

}  // namespace urbanstep
