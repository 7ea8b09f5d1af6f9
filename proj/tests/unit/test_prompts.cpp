#include "doctest.h"

#include <random>

#include "urbanstep/error.hpp"
#include "urbanstep/prompts.hpp"

using namespace urbanstep;

namespace {

const std::string kNewYorkStage1 =
    "[Location and map guide] Land use types and road network map of New York. [Land use composition] Land use "
    "parcels include 79.2% of residential, 15.4% of commercial, 0.0% of industrial, 3.6% of park, 0.0% of mixed "
    "use. [Road density] Road density is 18.0%.";
const std::string kNewYorkStage2 =
    "[Location and map guide] The Building height gradient map of New York, with shades of gray from light to dark "
    "indicating building heights from low to high. [Building height group coverage] The area is composed of 20.50% "
    "low-story buildings, 40.58% medium-story buildings, 5.64% high-story buildings, and 33.28% open space.";
const std::string kNewYorkStage3 = "[Location and map guide] Satellite image of a city in New York.";

DesignMetrics new_york() {
  DesignMetrics m;
  m.land_use = {0.792, 0.154, 0.0, 0.036, 0.0};
  m.road_density = 0.18;
  m.height_coverage = {0.2050, 0.4058, 0.0564};
  m.open_space = 0.3328;
  return m;
}

// Digits between "composed of " and the end, summed in basis points.
long long printed_total_bp(const std::string& text) {
  long long total = 0;
  std::size_t pos = text.find("composed of ");
  for (int i = 0; i < 4; ++i) {
    pos = text.find_first_of("0123456789", pos);
    const std::size_t dot = text.find('.', pos);
    total += std::stoll(text.substr(pos, dot - pos)) * 100 + std::stoll(text.substr(dot + 1, 2));
    pos = text.find('%', dot);
  }
  return total;
}

}  // namespace

TEST_CASE("stage prompts match the New York reference strings byte for byte") {
  CHECK(build_stage1("New York", new_york()).text == kNewYorkStage1);
  CHECK(build_stage2("New York", new_york()).text == kNewYorkStage2);
  CHECK(build_stage3("New York").text == kNewYorkStage3);
  CHECK(build_stage3("Chicago").text == "[Location and map guide] Satellite image of a city in Chicago.");
}

TEST_CASE("parse recovers the New York reference values") {
  const PromptTargets s1 = parse_prompt(Stage::One, kNewYorkStage1);
  CHECK(s1.city == "New York");
  REQUIRE(s1.land_use);
  CHECK((*s1.land_use)[0] == doctest::Approx(0.792));
  CHECK((*s1.land_use)[1] == doctest::Approx(0.154));
  CHECK((*s1.land_use)[3] == doctest::Approx(0.036));
  CHECK(*s1.road_density == doctest::Approx(0.18));
  CHECK_FALSE(s1.height_coverage);

  const PromptTargets s2 = parse_prompt(Stage::Two, kNewYorkStage2);
  REQUIRE(s2.height_coverage);
  CHECK((*s2.height_coverage)[0] == doctest::Approx(0.2050));
  CHECK((*s2.height_coverage)[1] == doctest::Approx(0.4058));
  CHECK((*s2.height_coverage)[2] == doctest::Approx(0.0564));
  CHECK(*s2.open_space == doctest::Approx(0.3328));
  CHECK_FALSE(s2.land_use);

  CHECK(parse_prompt(Stage::Three, kNewYorkStage3).city == "New York");
  CHECK(parse_prompt(Stage::Three, "[Location and map guide] Satellite image of a city in St. Louis.").city ==
        "St. Louis");
}

TEST_CASE("zero metrics print zero in every slot") {
  const DesignMetrics zero;
  const std::string s1 = build_stage1("X", zero).text;
  CHECK(s1.find("0.0% of residential, 0.0% of commercial, 0.0% of industrial, 0.0% of park, 0.0% of mixed use.") !=
        std::string::npos);
  CHECK(s1.find("Road density is 0.0%.") != std::string::npos);
  const std::string s2 = build_stage2("X", zero).text;
  CHECK(s2.find("0.00% low-story buildings, 0.00% medium-story buildings, 0.00% high-story buildings, and 100.00% "
                "open space.") != std::string::npos);
  const std::string c = build_combined("X", zero).text;
  const PromptTargets back = parse_prompt(Stage::Combined, c);
  CHECK(back.to_metrics() == zero);
}

TEST_CASE("stage-2 groups total exactly 100.00") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 5000; ++trial) {
    std::array<double, 4> w{};
    double s = 0.0;
    for (double& v : w) s += (v = u(rng));
    DesignMetrics m;
    m.height_coverage = {w[0] / s, w[1] / s, w[2] / s};
    m.open_space = w[3] / s;
    const std::string text = build_stage2("Boston", m).text;
    REQUIRE(printed_total_bp(text) == 10000);
    const PromptTargets back = parse_prompt(Stage::Two, text);
    for (std::size_t i = 0; i < 3; ++i) REQUIRE(std::abs((*back.height_coverage)[i] - m.height_coverage[i]) < 1e-4);
    REQUIRE(std::abs(*back.open_space - m.open_space) < 1e-4);
  }
}

TEST_CASE("round trip at printed precision") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 2000; ++trial) {
    DesignMetrics m;
    double s = 0.0;
    for (double& v : m.land_use) s += (v = u(rng));
    for (double& v : m.land_use) v /= s;
    m.road_density = u(rng) * 0.4;
    double h = 0.0;
    std::array<double, 4> w{};
    for (double& v : w) h += (v = u(rng));
    m.height_coverage = {w[0] / h, w[1] / h, w[2] / h};
    m.open_space = w[3] / h;

    for (Stage stage : {Stage::One, Stage::Combined}) {
      const PromptText p = build_prompt(stage, "San Francisco", m);
      const DesignMetrics back = parse_prompt(p).to_metrics();
      for (std::size_t i = 0; i < kLandUseCount; ++i) REQUIRE(std::abs(back.land_use[i] - m.land_use[i]) <= 5e-4 + 1e-12);
      REQUIRE(std::abs(back.road_density - m.road_density) <= 5e-4 + 1e-12);
      // Rebuilding from the parsed values reproduces the text exactly.
      REQUIRE(build_prompt(stage, "San Francisco", back).text == p.text);
    }
    const PromptText p2 = build_stage2("San Francisco", m);
    REQUIRE(build_stage2("San Francisco", parse_prompt(p2).to_metrics()).text == p2.text);
  }
}

TEST_CASE("combined prompt carries every metric clause") {
  const std::string c = build_combined("New York", new_york()).text;
  CHECK(c.find("[Land use composition]") != std::string::npos);
  CHECK(c.find("[Road density] Road density is 18.0%.") != std::string::npos);
  CHECK(c.find("[Building height group coverage]") != std::string::npos);
  CHECK(c.find("33.28% open space.") != std::string::npos);
  CHECK(parse_prompt(Stage::Combined, c).city == "New York");
}

TEST_CASE("strict grammar rejects deviations with a position") {
  // Road clause before the composition clause.
  const std::string reordered =
      "[Location and map guide] Land use types and road network map of New York. [Road density] Road density is "
      "18.0%. [Land use composition] Land use parcels include 79.2% of residential, 15.4% of commercial, 0.0% of "
      "industrial, 3.6% of park, 0.0% of mixed use.";
  try {
    parse_prompt(Stage::One, reordered);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.position() == reordered.find("[Road density]") + 1);
    CHECK(e.category() == ErrorCategory::Parse);
  }

  std::string two_decimals = kNewYorkStage1;
  two_decimals.replace(two_decimals.find("79.2%"), 5, "79.20%");
  CHECK_THROWS_AS(parse_prompt(Stage::One, two_decimals), ParseError);

  CHECK_THROWS_AS(parse_prompt(Stage::One, kNewYorkStage1 + " "), ParseError);
  CHECK_THROWS_AS(parse_prompt(Stage::Two, kNewYorkStage1), ParseError);
  CHECK_THROWS_AS(parse_prompt(Stage::Three, "[Location and map guide] Satellite image of a city in ."), ParseError);

  std::string lowercase = kNewYorkStage2;
  lowercase.replace(lowercase.find("The Building"), 12, "The building");
  try {
    parse_prompt(Stage::Two, lowercase);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.position() == lowercase.find("building"));
  }

  std::string over = kNewYorkStage2;
  over.replace(over.find("20.50%"), 6, "120.50%");
  CHECK_THROWS_AS(parse_prompt(Stage::Two, over), ParseError);
}

TEST_CASE("invalid targets are rejected") {
  DesignMetrics m = new_york();
  CHECK_NOTHROW(validate_targets(Stage::One, m));  // the New York reference sums to 0.982
  m.land_use = {0.5, 0.3, 0, 0, 0};
  CHECK_THROWS_AS(build_stage1("New York", m), Error);
  m = new_york();
  m.road_density = -0.1;
  CHECK_THROWS_AS(build_stage1("New York", m), Error);
  m = new_york();
  m.open_space = 0.1;
  CHECK_THROWS_AS(build_stage2("New York", m), Error);
  CHECK_NOTHROW(build_stage1("New York", m));
  CHECK_THROWS_AS(build_stage3(""), Error);
  CHECK_THROWS_AS(build_stage3("New [York]"), Error);
}
