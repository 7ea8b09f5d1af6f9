#include "urbanstep/prompts.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <sstream>

#include "urbanstep/error.hpp"

namespace urbanstep {

namespace {

constexpr std::string_view kGuide = "[Location and map guide] ";
constexpr std::string_view kStage1Head = "Land use types and road network map of ";
constexpr std::string_view kStage2Head = "The Building height gradient map of ";
constexpr std::string_view kStage3Head = "Satellite image of a city in ";
constexpr std::string_view kCombinedHead = "Land use types, road network and building height gradient map of ";
constexpr std::string_view kGrayTail =
    ", with shades of gray from light to dark indicating building heights from low to high.";
constexpr std::string_view kCompositionTag = " [Land use composition] Land use parcels include ";
constexpr std::string_view kRoadTag = " [Road density] Road density is ";
constexpr std::string_view kCoverageTag = " [Building height group coverage] The area is composed of ";

constexpr std::array<std::string_view, kLandUseCount> kLandUseWords = {
    "residential", "commercial", "industrial", "park", "mixed use",
};
constexpr std::array<std::string_view, kHeightClassCount> kHeightWords = {
    "low-story buildings", "medium-story buildings", "high-story buildings",
};

void check_city(std::string_view city) {
  if (city.empty()) fail(ErrorCategory::Validation, "city name must not be empty");
  for (char ch : city) {
    if (ch == '[' || ch == ']' || ch == '\n' || ch == '\r') {
      fail(ErrorCategory::Validation, "city name contains a reserved character");
    }
  }
  if (city.front() == ' ' || city.back() == ' ') {
    fail(ErrorCategory::Validation, "city name has surrounding whitespace");
  }
}

void check_fraction(double v, std::string_view what) {
  if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
    std::ostringstream os;
    os << what << " = " << v << " is outside [0,1]";
    fail(ErrorCategory::Validation, os.str());
  }
}

void check_stage1(const DesignMetrics& m) {
  check_fraction(m.road_density, "road_density");
  for (std::size_t i = 0; i < kLandUseCount; ++i) check_fraction(m.land_use[i], kLandUseWords[i]);
  const double s = land_use_sum(m);
  if (s != 0.0 && std::abs(s - 1.0) > kTargetSumTolerance) {
    std::ostringstream os;
    os << "land use shares sum to " << s << ", expected 1 within " << kTargetSumTolerance;
    fail(ErrorCategory::Validation, os.str());
  }
}

void check_stage2(const DesignMetrics& m) {
  for (std::size_t i = 0; i < kHeightClassCount; ++i) check_fraction(m.height_coverage[i], kHeightWords[i]);
  check_fraction(m.open_space, "open_space");
  const double s = building_coverage(m) + m.open_space;
  if (std::abs(s - 1.0) > kTargetSumTolerance) {
    std::ostringstream os;
    os << "height coverage plus open space sums to " << s << ", expected 1 within " << kTargetSumTolerance;
    fail(ErrorCategory::Validation, os.str());
  }
}

// Fixed-point text of `units` in 10^-decimals percent steps.
std::string fixed(long long units, int decimals) {
  long long scale = 1;
  for (int i = 0; i < decimals; ++i) scale *= 10;
  std::string frac = std::to_string(units % scale);
  frac.insert(0, static_cast<std::size_t>(decimals) - frac.size(), '0');
  return std::to_string(units / scale) + "." + frac;
}

long long tenths_of_percent(double v) { return std::llround(v * 1000.0); }

// Largest-remainder rounding of fractions to basis points. The total is the
// rounded sum of the exact values, so inputs summing to 1 print as 100.00.
std::array<long long, 4> basis_points(const std::array<double, 4>& v) {
  std::array<long long, 4> out{};
  std::array<double, 4> rem{};
  double exact_total = 0.0;
  long long floor_total = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    const double q = v[i] * 10000.0;
    exact_total += q;
    out[i] = static_cast<long long>(std::floor(q + 1e-6));
    rem[i] = std::max(0.0, q - static_cast<double>(out[i]));
    floor_total += out[i];
  }
  long long missing = std::llround(exact_total) - floor_total;
  std::array<std::size_t, 4> order{0, 1, 2, 3};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
  for (std::size_t k = 0; missing > 0 && k < order.size(); ++k, --missing) ++out[order[k]];
  return out;
}

std::string composition_clause(const DesignMetrics& m) {
  std::string s(kCompositionTag);
  for (std::size_t i = 0; i < kLandUseCount; ++i) {
    s += fixed(tenths_of_percent(m.land_use[i]), 1);
    s += "% of ";
    s += kLandUseWords[i];
    s += i + 1 < kLandUseCount ? ", " : ".";
  }
  s += kRoadTag;
  s += fixed(tenths_of_percent(m.road_density), 1);
  s += "%.";
  return s;
}

std::string coverage_clause(const DesignMetrics& m) {
  const auto bp = basis_points({m.height_coverage[0], m.height_coverage[1], m.height_coverage[2], m.open_space});
  std::string s(kCoverageTag);
  for (std::size_t i = 0; i < kHeightClassCount; ++i) {
    s += fixed(bp[i], 2);
    s += "% ";
    s += kHeightWords[i];
    s += ", ";
  }
  s += "and ";
  s += fixed(bp[3], 2);
  s += "% open space.";
  return s;
}

class Cursor {
 public:
  explicit Cursor(std::string_view text) : text_(text) {}

  void expect(std::string_view literal) {
    if (text_.substr(pos_, literal.size()) != literal) {
      std::size_t at = pos_;
      while (at < text_.size() && at - pos_ < literal.size() && text_[at] == literal[at - pos_]) ++at;
      throw ParseError(at, "expected \"" + std::string(literal) + "\"");
    }
    pos_ += literal.size();
  }

  // City text runs up to the first occurrence of `terminator`.
  std::string city_until(std::string_view terminator) {
    const std::size_t end = text_.find(terminator, pos_);
    if (end == std::string_view::npos) throw ParseError(pos_, "expected \"" + std::string(terminator) + "\"");
    return take_city(end);
  }

  std::string city_until_end() { return take_city(text_.size()); }

 private:
  std::string take_city(std::size_t end) {
    if (end == pos_) throw ParseError(pos_, "empty city name");
    std::string city(text_.substr(pos_, end - pos_));
    for (std::size_t i = 0; i < city.size(); ++i) {
      if (city[i] == '[' || city[i] == ']') throw ParseError(pos_ + i, "reserved character in city name");
    }
    pos_ = end;
    return city;
  }

 public:
  // Percentage with exactly `decimals` fractional digits, returned as a fraction.
  double percent(int decimals) {
    const std::size_t start = pos_;
    long long whole = 0;
    std::size_t digits = 0;
    while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
      if (digits == 3) throw ParseError(pos_, "percentage too large");
      whole = whole * 10 + (text_[pos_] - '0');
      ++pos_;
      ++digits;
    }
    if (digits == 0) throw ParseError(pos_, "expected digit");
    if (digits > 1 && text_[start] == '0') throw ParseError(start, "leading zero");
    expect(".");
    long long frac = 0;
    for (int i = 0; i < decimals; ++i) {
      if (pos_ >= text_.size() || !std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
        throw ParseError(pos_, "expected " + std::to_string(decimals) + " decimal digits");
      }
      frac = frac * 10 + (text_[pos_] - '0');
      ++pos_;
    }
    long long scale = 1;
    for (int i = 0; i < decimals; ++i) scale *= 10;
    const long long units = whole * scale + frac;
    if (units > 100 * scale) throw ParseError(start, "percentage above 100");
    expect("%");
    return static_cast<double>(units) / static_cast<double>(100 * scale);
  }

  void finish() const {
    if (pos_ != text_.size()) throw ParseError(pos_, "unexpected trailing text");
  }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
};

void parse_composition(Cursor& c, PromptTargets& out) {
  c.expect(kCompositionTag);
  std::array<double, kLandUseCount> lu{};
  for (std::size_t i = 0; i < kLandUseCount; ++i) {
    lu[i] = c.percent(1);
    c.expect(" of ");
    c.expect(kLandUseWords[i]);
    c.expect(i + 1 < kLandUseCount ? ", " : ".");
  }
  out.land_use = lu;
  c.expect(kRoadTag);
  out.road_density = c.percent(1);
  c.expect(".");
}

void parse_coverage(Cursor& c, PromptTargets& out) {
  c.expect(kCoverageTag);
  std::array<double, kHeightClassCount> h{};
  for (std::size_t i = 0; i < kHeightClassCount; ++i) {
    h[i] = c.percent(2);
    c.expect(" ");
    c.expect(kHeightWords[i]);
    c.expect(", ");
  }
  c.expect("and ");
  out.height_coverage = h;
  out.open_space = c.percent(2);
  c.expect(" open space.");
}

}  // namespace

DesignMetrics PromptTargets::to_metrics() const {
  DesignMetrics m;
  if (road_density) m.road_density = *road_density;
  if (land_use) m.land_use = *land_use;
  if (height_coverage) m.height_coverage = *height_coverage;
  if (open_space) m.open_space = *open_space;
  return m;
}

void validate_targets(Stage stage, const DesignMetrics& m) {
  switch (stage) {
    case Stage::One: check_stage1(m); break;
    case Stage::Two: check_stage2(m); break;
    case Stage::Three: break;
    case Stage::Combined:
      check_stage1(m);
      check_stage2(m);
      break;
  }
}

PromptText build_stage1(std::string_view city, const DesignMetrics& m) {
  check_city(city);
  check_stage1(m);
  std::string text(kGuide);
  text += kStage1Head;
  text += city;
  text += ".";
  text += composition_clause(m);
  return {Stage::One, std::string(city), std::move(text)};
}

PromptText build_stage2(std::string_view city, const DesignMetrics& m) {
  check_city(city);
  check_stage2(m);
  std::string text(kGuide);
  text += kStage2Head;
  text += city;
  text += kGrayTail;
  text += coverage_clause(m);
  return {Stage::Two, std::string(city), std::move(text)};
}

PromptText build_stage3(std::string_view city) {
  check_city(city);
  std::string text(kGuide);
  text += kStage3Head;
  text += city;
  text += ".";
  return {Stage::Three, std::string(city), std::move(text)};
}

PromptText build_combined(std::string_view city, const DesignMetrics& m) {
  check_city(city);
  check_stage1(m);
  check_stage2(m);
  std::string text(kGuide);
  text += kCombinedHead;
  text += city;
  text += kGrayTail;
  text += composition_clause(m);
  text += coverage_clause(m);
  return {Stage::Combined, std::string(city), std::move(text)};
}

PromptText build_prompt(Stage stage, std::string_view city, const DesignMetrics& m) {
  switch (stage) {
    case Stage::One: return build_stage1(city, m);
    case Stage::Two: return build_stage2(city, m);
    case Stage::Three: return build_stage3(city);
    case Stage::Combined: return build_combined(city, m);
  }
  fail(ErrorCategory::Validation, "unknown stage");
}

PromptTargets parse_prompt(Stage stage, std::string_view text) {
  Cursor c(text);
  PromptTargets out;
  c.expect(kGuide);
  switch (stage) {
    case Stage::One:
      c.expect(kStage1Head);
      out.city = c.city_until(". [");
      c.expect(".");
      parse_composition(c, out);
      break;
    case Stage::Two:
      c.expect(kStage2Head);
      out.city = c.city_until(kGrayTail);
      c.expect(kGrayTail);
      parse_coverage(c, out);
      break;
    case Stage::Three: {
      c.expect(kStage3Head);
      // The terminating period is the last byte; an earlier '.' belongs to the city.
      const std::size_t start = kGuide.size() + kStage3Head.size();
      if (text.size() <= start || text.back() != '.') throw ParseError(text.size(), "expected \".\"");
      Cursor city(text.substr(0, text.size() - 1));
      city.expect(text.substr(0, start));
      out.city = city.city_until_end();
      return out;
    }
    case Stage::Combined:
      c.expect(kCombinedHead);
      out.city = c.city_until(kGrayTail);
      c.expect(kGrayTail);
      parse_composition(c, out);
      parse_coverage(c, out);
      break;
  }
  c.finish();
  return out;
}

}  // namespace urbanstep
