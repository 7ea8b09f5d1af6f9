#pragma once

#include <span>
#include <string>

#include "urbanstep/core/types.hpp"
#include "urbanstep/jenks.hpp"
#include "urbanstep/rasterizer.hpp"
#include "urbanstep/tiler.hpp"

namespace urbanstep {

enum class Provenance : std::uint8_t { Vector, Raster };

struct MetricReport {
  DesignMetrics metrics;
  Provenance provenance = Provenance::Raster;
  std::string tile_id;
};

// Areas are what the renderer would show: each class counts only where no
// class above it in `spec.draw_order` covers it. Road density and land use
// follow the stage-1 stack (no buildings); height coverage the stage-2
// stack. Strokes are buffered with round caps and joins to match the
// rasterizer.
MetricReport metrics_from_vector(const VectorLayerBundle& bundle, const JenksBreaks& breaks,
                                 const RenderSpec& spec = {});

// Same formulas over pixel counts: roads = MajorRoad + MinorRoad pixels over
// all pixels; land use over the five land-use classes' pixels (zero vector
// when none); building coverage over all pixels; open space = 1 - buildings.
MetricReport metrics_from_raster(const ClassMap& map, std::string tile_id = {});

// Shannon entropy in nats with 0 log 0 = 0. Throws Validation on negative
// components or a sum that is neither 0 nor 1 (+-1e-9).
double entropy(std::span<const double> p);

std::string report_to_json(const MetricReport& report);
std::string reports_to_csv(std::span<const MetricReport> reports);

}  // namespace urbanstep
