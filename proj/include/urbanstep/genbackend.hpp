#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "urbanstep/core/types.hpp"
#include "urbanstep/prompts.hpp"

namespace urbanstep {

inline constexpr int kMaxSamplesPerRequest = 16;

struct GenerationRequest {
  Stage stage = Stage::One;
  CanonicalImage constraint;
  PromptText prompt;
  int num_samples = 1;
  std::uint64_t seed = 0;
  std::optional<std::string> model_id;
  std::chrono::milliseconds timeout{std::chrono::minutes(5)};
  // Opaque sampler settings passed through to remote backends untouched.
  nlohmann::json sampler_overrides;
};

struct GeneratedImage {
  CanonicalImage image;
  std::string model_id;
  std::uint64_t seed = 0;
  double latency_ms = 0.0;
  // Procedural backend only: targets could not be met within tolerance.
  bool infeasible = false;
  std::string note;
};

struct GenerationResult {
  std::vector<GeneratedImage> images;
};

struct HealthStatus {
  bool ok = false;  // false means "degraded"
  std::vector<std::string> models;
};

// Throws Validation: sample count outside [1, 16], constraint kind not the
// stage's input kind, non-square or empty constraint, prompt stage mismatch.
void validate_request(const GenerationRequest& req);

class GenerationBackend {
 public:
  virtual ~GenerationBackend() = default;
  virtual GenerationResult generate(const GenerationRequest& req) = 0;
  virtual HealthStatus health() = 0;
  // "procedural" or the remote endpoint URL.
  virtual std::string binding() const = 0;
};

// Deterministic rule-based generator. Same request and seed give
// byte-identical images. Targets come from parsing the request prompt.
class ProceduralBackend final : public GenerationBackend {
 public:
  static constexpr const char* kModelId = "procedural-v1";

  GenerationResult generate(const GenerationRequest& req) override;
  HealthStatus health() override { return {true, {kModelId}}; }
  std::string binding() const override { return "procedural"; }
};

// Tolerances the procedural generator aims for; outputs outside them are
// flagged infeasible.
inline constexpr double kProceduralRoadTolerance = 0.02;
inline constexpr double kProceduralMaeTolerance = 0.03;

// One sample, exposed for tests and the CLI.
GeneratedImage procedural_sample(Stage stage, const CanonicalImage& constraint, const PromptTargets& targets,
                                 std::uint64_t seed);

struct RemoteConfig {
  std::string endpoint;  // e.g. "http://127.0.0.1:8500"
  std::chrono::milliseconds connect_timeout{std::chrono::seconds(5)};
  int max_in_flight = 4;
};

// Client for the wire protocol. Safe for concurrent use; at most
// max_in_flight requests are outstanding at once.
class RemoteBackend final : public GenerationBackend {
 public:
  explicit RemoteBackend(RemoteConfig config);
  ~RemoteBackend() override;

  GenerationResult generate(const GenerationRequest& req) override;
  HealthStatus health() override;
  std::string binding() const override { return config_.endpoint; }

  // POST /v1/features: one feature vector per image from the adapter's
  // extractor.
  std::vector<std::vector<double>> features(const std::vector<CanonicalImage>& images);

  struct Gate;

 private:
  RemoteConfig config_;
  std::unique_ptr<Gate> gate_;
};

// Wire codecs, shared by the client and the built-in server.
nlohmann::json request_to_wire(const GenerationRequest& req);
// Decodes and validates a wire request. The prompt is kept verbatim; its
// stage is taken from the request.
GenerationRequest request_from_wire(const nlohmann::json& body);
nlohmann::json result_to_wire(const GenerationResult& result);
// Throws Protocol on schema violations, wrong image count or dimensions.
GenerationResult result_from_wire(const nlohmann::json& body, const GenerationRequest& req);
nlohmann::json health_to_wire(const HealthStatus& status);
HealthStatus health_from_wire(const nlohmann::json& body);
nlohmann::json error_to_wire(std::string_view code, std::string_view message);

}  // namespace urbanstep
