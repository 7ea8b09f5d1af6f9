#include "doctest.h"

#include <atomic>
#include <thread>

#include "httplib.h"
#include "support/fixtures.hpp"
#include "urbanstep/core/codec.hpp"
#include "urbanstep/core/palette.hpp"
#include "urbanstep/core/random.hpp"
#include "urbanstep/error.hpp"
#include "urbanstep/genbackend.hpp"
#include "urbanstep/metrics.hpp"

using namespace urbanstep;
using nlohmann::json;

namespace {

DesignMetrics targets(double road, std::array<double, kLandUseCount> lu, std::array<double, 3> h, double open) {
  DesignMetrics m;
  m.road_density = road;
  m.land_use = lu;
  m.height_coverage = h;
  m.open_space = open;
  return m;
}

GenerationRequest request(Stage stage, const CanonicalImage& constraint, const DesignMetrics& m, int n,
                          std::uint64_t seed) {
  GenerationRequest req;
  req.stage = stage;
  req.constraint = constraint;
  req.prompt = build_prompt(stage, "Testville", m);
  req.num_samples = n;
  req.seed = seed;
  return req;
}

double mae(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

DesignMetrics measure(const CanonicalImage& img) { return metrics_from_raster(classify_image(img)).metrics; }

// Minimal stand-in for a remote adapter, served from a background thread.
struct StubServer {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::atomic<int> generate_calls{0};
  std::atomic<int> drop_images{0};
  std::atomic<int> delay_ms{0};
  std::atomic<bool> degraded{false};

  StubServer() {
    server.Post("/v1/generate", [this](const httplib::Request& rq, httplib::Response& rs) {
      ++generate_calls;
      if (delay_ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms.load()));
      try {
        const GenerationRequest req = request_from_wire(json::parse(rq.body));
        GenerationResult result = ProceduralBackend().generate(req);
        for (int i = 0; i < drop_images; ++i) result.images.pop_back();
        rs.set_content(result_to_wire(result).dump(), "application/json");
      } catch (const Error& e) {
        rs.status = 400;
        rs.set_content(error_to_wire(category_name(e.category()), e.what()).dump(), "application/json");
      }
    });
    server.Get("/healthz", [this](const httplib::Request&, httplib::Response& rs) {
      HealthStatus h{!degraded, {}};
      if (!degraded) h.models = {"stub-model"};
      rs.set_content(health_to_wire(h).dump(), "application/json");
    });
    server.Post("/v1/features", [](const httplib::Request& rq, httplib::Response& rs) {
      const json body = json::parse(rq.body);
      json rows = json::array();
      for (std::size_t i = 0; i < body["images_png_b64"].size(); ++i) rows.push_back({1.0 * i, 2.0});
      rs.set_content(json{{"features", rows}}.dump(), "application/json");
    });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~StubServer() {
    server.stop();
    thread.join();
  }
  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port); }
};

}  // namespace

TEST_CASE("procedural stage 1 hits road density and land use") {
  const CanonicalImage site = testing::synthetic_site(3);
  const DesignMetrics want = targets(0.15, {0.5, 0.2, 0.1, 0.15, 0.05}, {}, 1.0);
  const GenerationResult r = ProceduralBackend().generate(request(Stage::One, site, want, 2, 42));
  REQUIRE(r.images.size() == 2);
  for (const GeneratedImage& g : r.images) {
    CHECK(g.image.kind() == ImageKind::Stage1Plan);
    CHECK(g.image.width() == site.width());
    const DesignMetrics got = measure(g.image);
    CHECK(got.road_density >= 0.13);
    CHECK(got.road_density <= 0.17);
    CHECK(mae(got.land_use, want.land_use) <= 0.03);
    CHECK_FALSE(g.infeasible);
    CHECK(g.model_id == ProceduralBackend::kModelId);
  }
  CHECK(r.images[0].seed != r.images[1].seed);
}

TEST_CASE("procedural output is deterministic per seed") {
  const CanonicalImage site = testing::synthetic_site(5);
  const DesignMetrics want = targets(0.2, {0.3, 0.3, 0.2, 0.1, 0.1}, {}, 1.0);
  const auto a = ProceduralBackend().generate(request(Stage::One, site, want, 3, 7));
  const auto b = ProceduralBackend().generate(request(Stage::One, site, want, 3, 7));
  const auto c = ProceduralBackend().generate(request(Stage::One, site, want, 3, 8));
  for (int i = 0; i < 3; ++i) CHECK(encode_png(a.images[i].image) == encode_png(b.images[i].image));
  CHECK_FALSE(a.images[0].image == c.images[0].image);
}

TEST_CASE("one-hot land use fills with a single class") {
  const CanonicalImage site = testing::synthetic_site(9);
  const DesignMetrics want = targets(0.18, {1, 0, 0, 0, 0}, {}, 1.0);
  const auto r = ProceduralBackend().generate(request(Stage::One, site, want, 1, 1));
  const ClassMap map = classify_image(r.images[0].image);
  std::size_t residential = 0;
  for (PixelClass c : map.cells) {
    if (const auto lu = land_use_of(c)) {
      CHECK(*lu == LandUseCategory::Residential);
      ++residential;
    }
  }
  CHECK(residential > 0);
}

TEST_CASE("constraint pixels are preserved in stages 1 and 2") {
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    const CanonicalImage site = testing::synthetic_site(seed);
    const DesignMetrics want = targets(0.2, testing::random_land_use(seed), {0.1, 0.15, 0.05}, 0.7);
    const CanonicalImage plan = procedural_sample(Stage::One, site, parse_prompt(build_stage1("X", want)), seed).image;
    const CanonicalImage built = procedural_sample(Stage::Two, plan, parse_prompt(build_stage2("X", want)), seed).image;
    const ClassMap site_map = classify_image(site);
    for (int y = 0; y < site.height(); ++y) {
      for (int x = 0; x < site.width(); ++x) {
        if (is_site_constraint(site_map.at(x, y))) {
          REQUIRE(plan.pixel(x, y) == site.pixel(x, y));
          REQUIRE(built.pixel(x, y) == site.pixel(x, y));
        }
      }
    }
  }
}

TEST_CASE("procedural stage 2 hits height coverage") {
  for (std::uint64_t seed = 1; seed <= 12; ++seed) {
    Rng rng(seed);
    const CanonicalImage site = testing::synthetic_site(seed);
    std::array<double, 3> h{rng.uniform(0, 0.2), rng.uniform(0, 0.2), rng.uniform(0, 0.15)};
    const DesignMetrics want = targets(rng.uniform(0.12, 0.25), testing::random_land_use(seed), h,
                                       1.0 - h[0] - h[1] - h[2]);
    const auto plan = ProceduralBackend().generate(request(Stage::One, site, want, 1, seed)).images[0];
    REQUIRE_FALSE(plan.infeasible);
    const auto built = ProceduralBackend().generate(request(Stage::Two, plan.image, want, 1, seed)).images[0];
    CHECK(built.image.kind() == ImageKind::Stage2Plan);
    CHECK_FALSE(built.infeasible);
    const DesignMetrics got = measure(built.image);
    CHECK(mae(got.height_coverage, want.height_coverage) <= 0.03);
    CHECK(std::abs(got.open_space - want.open_space) <= 0.03);
    // Buildings sit on land-use pixels, so roads survive stage 2.
    CHECK(got.road_density == doctest::Approx(measure(plan.image).road_density));
  }
}

TEST_CASE("stage 3 and combined produce the right kinds") {
  const CanonicalImage site = testing::synthetic_site(4);
  const DesignMetrics want = targets(0.2, {0.6, 0.2, 0, 0.2, 0}, {0.2, 0.1, 0.05}, 0.65);
  const auto combined = ProceduralBackend().generate(request(Stage::Combined, site, want, 1, 3)).images[0];
  CHECK(combined.image.kind() == ImageKind::Stage2Plan);
  const DesignMetrics got = measure(combined.image);
  CHECK(std::abs(got.road_density - 0.2) <= 0.02);
  CHECK(mae(got.height_coverage, want.height_coverage) <= 0.03);

  const auto sat = ProceduralBackend().generate(request(Stage::Three, combined.image, want, 2, 3));
  CHECK(sat.images[0].image.kind() == ImageKind::Satellite);
  CHECK(sat.images[0].image.width() == site.width());
  CHECK_FALSE(sat.images[0].image == sat.images[1].image);
}

TEST_CASE("infeasible targets are flagged, not thrown") {
  const CanonicalImage site = testing::synthetic_site(2);
  const DesignMetrics want = targets(0.9, {1, 0, 0, 0, 0}, {}, 1.0);
  const auto r = ProceduralBackend().generate(request(Stage::One, site, want, 1, 1));
  CHECK(r.images[0].infeasible);
  CHECK_FALSE(r.images[0].note.empty());
}

TEST_CASE("request validation") {
  const CanonicalImage site = testing::synthetic_site(1, 64);
  const DesignMetrics want = targets(0.2, {1, 0, 0, 0, 0}, {0.1, 0, 0}, 0.9);
  GenerationRequest req = request(Stage::One, site, want, 1, 1);
  CHECK_NOTHROW(validate_request(req));
  req.num_samples = 0;
  CHECK_THROWS_AS(validate_request(req), Error);
  req.num_samples = 17;
  CHECK_THROWS_AS(validate_request(req), Error);
  req = request(Stage::One, site, want, 1, 1);
  req.stage = Stage::Two;
  req.prompt = build_stage2("X", want);
  CHECK_THROWS_AS(validate_request(req), Error);
  req = request(Stage::One, site, want, 1, 1);
  req.prompt = build_stage3("X");
  CHECK_THROWS_AS(validate_request(req), Error);
}

TEST_CASE("wire codec round trip and schema checks") {
  const CanonicalImage site = testing::synthetic_site(1, 64);
  const DesignMetrics want = targets(0.2, {1, 0, 0, 0, 0}, {0.1, 0, 0}, 0.9);
  GenerationRequest req = request(Stage::One, site, want, 2, 99);
  req.model_id = "nyc-v1";
  req.sampler_overrides = {{"steps", 30}};
  const json wire = request_to_wire(req);
  CHECK(wire["stage"] == 1);
  CHECK(wire["num_samples"] == 2);
  CHECK(wire["model_id"] == "nyc-v1");
  const GenerationRequest back = request_from_wire(wire);
  CHECK(std::ranges::equal(back.constraint.data(), site.data()));
  CHECK(back.prompt.text == req.prompt.text);
  CHECK(back.seed == 99);
  CHECK(back.sampler_overrides["steps"] == 30);

  json combined = wire;
  combined["stage"] = "combined";
  combined["prompt"] = build_combined("X", want).text;
  CHECK(request_from_wire(combined).stage == Stage::Combined);
  json bad = wire;
  bad["stage"] = 4;
  CHECK_THROWS_AS(request_from_wire(bad), Error);
  bad = wire;
  bad.erase("prompt");
  CHECK_THROWS_AS(request_from_wire(bad), Error);

  const GenerationResult result = ProceduralBackend().generate(req);
  json out = result_to_wire(result);
  CHECK(result_from_wire(out, req).images.size() == 2);
  json short_out = out;
  short_out["images_png_b64"].erase(1);
  short_out["seeds"].erase(1);
  try {
    result_from_wire(short_out, req);
    FAIL("expected protocol error");
  } catch (const Error& e) {
    CHECK(e.category() == ErrorCategory::Protocol);
  }
  json wrong_size = out;
  wrong_size["images_png_b64"][0] = base64_encode(encode_png(CanonicalImage(ImageKind::Stage1Plan, 32)));
  CHECK_THROWS_AS(result_from_wire(wrong_size, req), Error);
  CHECK(error_to_wire("validation", "bad")["error"]["code"] == "validation");
}

TEST_CASE("remote client against a stub adapter") {
  StubServer stub;
  RemoteBackend remote({stub.endpoint()});
  const CanonicalImage site = testing::synthetic_site(8, 128);
  const DesignMetrics want = targets(0.2, {0.5, 0.5, 0, 0, 0}, {0.1, 0.1, 0}, 0.8);

  const GenerationResult r = remote.generate(request(Stage::One, site, want, 4, 5));
  REQUIRE(r.images.size() == 4);
  const GenerationResult local = ProceduralBackend().generate(request(Stage::One, site, want, 4, 5));
  CHECK(r.images[2].image == local.images[2].image);
  CHECK(r.images[2].seed == local.images[2].seed);

  const HealthStatus h = remote.health();
  CHECK(h.ok);
  CHECK(h.models == std::vector<std::string>{"stub-model"});
  stub.degraded = true;
  CHECK_FALSE(remote.health().ok);

  SUBCASE("kind mismatch is rejected before any network call") {
    const int before = stub.generate_calls;
    GenerationRequest req = request(Stage::Two, site, want, 1, 1);
    CHECK_THROWS_AS(remote.generate(req), Error);
    CHECK(stub.generate_calls == before);
  }
  SUBCASE("short responses are protocol errors") {
    stub.drop_images = 1;
    try {
      remote.generate(request(Stage::One, site, want, 4, 5));
      FAIL("expected protocol error");
    } catch (const Error& e) {
      CHECK(e.category() == ErrorCategory::Protocol);
    }
  }
  SUBCASE("error bodies surface as backend errors") {
    GenerationRequest req = request(Stage::One, site, want, 1, 1);
    req.prompt.text = "[Location and map guide] nonsense";
    try {
      remote.generate(req);
      FAIL("expected backend error");
    } catch (const Error& e) {
      CHECK(e.category() == ErrorCategory::Backend);
      CHECK(std::string(e.what()).find("parse") != std::string::npos);
    }
  }
  SUBCASE("slow responses time out") {
    stub.delay_ms = 600;
    GenerationRequest req = request(Stage::One, site, want, 1, 1);
    req.timeout = std::chrono::milliseconds(200);
    try {
      remote.generate(req);
      FAIL("expected timeout");
    } catch (const Error& e) {
      CHECK(e.category() == ErrorCategory::Timeout);
    }
  }
  SUBCASE("features endpoint") {
    const auto f = remote.features({site, site, site});
    REQUIRE(f.size() == 3);
    CHECK(f[2] == std::vector<double>{2.0, 2.0});
  }
}

TEST_CASE("unreachable endpoint is a network error") {
  // Nothing listens on the privileged port 1.
  RemoteBackend remote({"http://127.0.0.1:1"});
  try {
    remote.health();
    FAIL("expected network error");
  } catch (const Error& e) {
    CHECK(e.category() == ErrorCategory::Network);
  }
}
