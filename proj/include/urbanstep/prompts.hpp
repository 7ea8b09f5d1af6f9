#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

#include "urbanstep/core/types.hpp"

namespace urbanstep {

// Designer-entered targets are printed at 0.1 / 0.01 percent, so sums may
// drift from 1 by rounding; this is the slack accepted on target vectors.
inline constexpr double kTargetSumTolerance = 0.02;

struct PromptText {
  Stage stage = Stage::One;
  std::string city;
  std::string text;

  bool operator==(const PromptText&) const = default;
};

// Metrics recovered from a prompt; only the stage's fields are set.
struct PromptTargets {
  std::string city;
  std::optional<double> road_density;
  std::optional<std::array<double, kLandUseCount>> land_use;
  std::optional<std::array<double, kHeightClassCount>> height_coverage;
  std::optional<double> open_space;

  bool operator==(const PromptTargets&) const = default;

  // Fills unset groups with neutral values (zero land use / roads, all open).
  DesignMetrics to_metrics() const;
};

// Stage 1: land use at one decimal (plain rounding), road density at one
// decimal; Manufacturing prints as "industrial".
PromptText build_stage1(std::string_view city, const DesignMetrics& m);
// Stage 2: the four coverage groups at two decimals, largest-remainder
// rounded so they total exactly 100.00 when the inputs sum to 1.
PromptText build_stage2(std::string_view city, const DesignMetrics& m);
PromptText build_stage3(std::string_view city);
PromptText build_combined(std::string_view city, const DesignMetrics& m);
PromptText build_prompt(Stage stage, std::string_view city, const DesignMetrics& m);

// Strict grammar, no fuzzy matching. Throws ParseError with the byte offset
// of the first mismatch.
PromptTargets parse_prompt(Stage stage, std::string_view text);
inline PromptTargets parse_prompt(const PromptText& prompt) { return parse_prompt(prompt.stage, prompt.text); }

// Validation of designer targets per stage (ranges, sums within
// kTargetSumTolerance). Throws Validation.
void validate_targets(Stage stage, const DesignMetrics& m);

}  // namespace urbanstep
