#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "urbanstep/core/types.hpp"

namespace urbanstep {

// Upper bounds of every class but the last: value v is in class i when
// breaks[i-1] < v <= breaks[i]. For k = 3, breaks = {b1, b2}.
struct JenksBreaks {
  std::vector<double> breaks;
  std::string city;
  std::size_t sample_size = 0;

  bool operator==(const JenksBreaks&) const = default;
};

// Fisher-Jenks optimal 1-D classification minimising total within-class sum
// of squared deviations. Exact; runs in O(k n log n) over distinct values
// (divide-and-conquer on monotone split points), so a whole city's building
// stock is fine. Ties resolve toward the smallest break values.
// Throws Validation when there are fewer than k distinct values or k < 2.
JenksBreaks jenks_breaks(std::span<const double> values, std::size_t k = 3, std::string city = {});

// Total within-class SSE of `values` under the given breaks.
double within_class_sse(std::span<const double> values, const JenksBreaks& breaks);

std::size_t class_index(double value, const JenksBreaks& breaks);
HeightClass classify_height(double height, const JenksBreaks& breaks);

}  // namespace urbanstep
