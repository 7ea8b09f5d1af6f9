#include "urbanstep/genbackend.hpp"

#include <algorithm>
#include <condition_variable>
#include <mutex>

#include "httplib.h"
#include "urbanstep/core/codec.hpp"
#include "urbanstep/error.hpp"

namespace urbanstep {

using nlohmann::json;

void validate_request(const GenerationRequest& req) {
  if (req.num_samples < 1 || req.num_samples > kMaxSamplesPerRequest) {
    fail(ErrorCategory::Validation, "num_samples must be in [1, " + std::to_string(kMaxSamplesPerRequest) +
                                        "], got " + std::to_string(req.num_samples));
  }
  if (req.constraint.empty()) fail(ErrorCategory::Validation, "constraint image is empty");
  if (req.constraint.kind() != constraint_kind(req.stage)) {
    fail(ErrorCategory::Validation, "stage " + std::string(name(req.stage)) + " expects a " +
                                        std::string(name(constraint_kind(req.stage))) + " constraint, got " +
                                        std::string(name(req.constraint.kind())));
  }
  if (req.prompt.stage != req.stage) {
    fail(ErrorCategory::Validation, "prompt was built for stage " + std::string(name(req.prompt.stage)) +
                                        ", request is for stage " + std::string(name(req.stage)));
  }
}

namespace {

json stage_to_wire(Stage s) {
  if (s == Stage::Combined) return "combined";
  return static_cast<int>(s);
}

Stage stage_from_wire(const json& v) {
  if (v.is_number_integer()) {
    const auto i = v.get<long long>();
    if (i >= 1 && i <= 3) return static_cast<Stage>(i);
  } else if (v.is_string() && v.get<std::string>() == "combined") {
    return Stage::Combined;
  }
  fail(ErrorCategory::Protocol, "field \"stage\" must be 1, 2, 3 or \"combined\"");
}

const json& require(const json& body, const char* key, json::value_t type) {
  const auto it = body.find(key);
  if (it == body.end()) fail(ErrorCategory::Protocol, std::string("missing field \"") + key + "\"");
  const bool ok = it->type() == type ||
                  (type == json::value_t::number_integer && it->type() == json::value_t::number_unsigned);
  if (!ok) fail(ErrorCategory::Protocol, std::string("field \"") + key + "\" has the wrong type");
  return *it;
}

std::string excerpt(const std::string& body) {
  constexpr std::size_t kMax = 200;
  return body.size() <= kMax ? body : body.substr(0, kMax) + "...";
}

}  // namespace

json request_to_wire(const GenerationRequest& req) {
  json body = {
      {"stage", stage_to_wire(req.stage)},
      {"prompt", req.prompt.text},
      {"constraint_png_b64", base64_encode(encode_png(req.constraint))},
      {"num_samples", req.num_samples},
      {"seed", req.seed},
  };
  if (req.model_id) body["model_id"] = *req.model_id;
  if (!req.sampler_overrides.is_null()) body["sampler_overrides"] = req.sampler_overrides;
  return body;
}

GenerationRequest request_from_wire(const json& body) {
  if (!body.is_object()) fail(ErrorCategory::Protocol, "request body must be a JSON object");
  GenerationRequest req;
  req.stage = stage_from_wire(body.contains("stage") ? body["stage"] : json());
  req.prompt.stage = req.stage;
  req.prompt.text = require(body, "prompt", json::value_t::string).get<std::string>();
  const auto png = base64_decode(require(body, "constraint_png_b64", json::value_t::string).get<std::string>());
  try {
    req.constraint = decode_image(png, constraint_kind(req.stage));
  } catch (const Error& e) {
    fail(ErrorCategory::Protocol, std::string("constraint image: ") + e.what());
  }
  req.num_samples = require(body, "num_samples", json::value_t::number_integer).get<int>();
  const json& seed = require(body, "seed", json::value_t::number_integer);
  req.seed = seed.is_number_unsigned() ? seed.get<std::uint64_t>() : static_cast<std::uint64_t>(seed.get<long long>());
  if (const auto it = body.find("model_id"); it != body.end() && !it->is_null()) {
    if (!it->is_string()) fail(ErrorCategory::Protocol, "field \"model_id\" must be a string");
    req.model_id = it->get<std::string>();
  }
  if (const auto it = body.find("sampler_overrides"); it != body.end() && !it->is_null()) {
    if (!it->is_object()) fail(ErrorCategory::Protocol, "field \"sampler_overrides\" must be an object");
    req.sampler_overrides = *it;
  }
  validate_request(req);
  return req;
}

json result_to_wire(const GenerationResult& result) {
  json images = json::array();
  json seeds = json::array();
  for (const GeneratedImage& g : result.images) {
    images.push_back(base64_encode(encode_png(g.image)));
    seeds.push_back(g.seed);
  }
  return {
      {"images_png_b64", images},
      {"model_id", result.images.empty() ? std::string() : result.images.front().model_id},
      {"seeds", seeds},
  };
}

GenerationResult result_from_wire(const json& body, const GenerationRequest& req) {
  if (!body.is_object()) fail(ErrorCategory::Protocol, "response body must be a JSON object");
  const json& images = require(body, "images_png_b64", json::value_t::array);
  const std::string model = require(body, "model_id", json::value_t::string).get<std::string>();
  const json& seeds = require(body, "seeds", json::value_t::array);
  if (images.size() != static_cast<std::size_t>(req.num_samples)) {
    fail(ErrorCategory::Protocol, "expected " + std::to_string(req.num_samples) + " images, backend returned " +
                                      std::to_string(images.size()));
  }
  if (seeds.size() != images.size()) fail(ErrorCategory::Protocol, "\"seeds\" and \"images_png_b64\" differ in length");

  GenerationResult result;
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (!images[i].is_string()) fail(ErrorCategory::Protocol, "image entries must be base64 strings");
    if (!seeds[i].is_number_integer()) fail(ErrorCategory::Protocol, "seed entries must be integers");
    GeneratedImage g;
    try {
      g.image = decode_image(base64_decode(images[i].get<std::string>()), output_kind(req.stage),
                             req.constraint.tile_id());
    } catch (const Error& e) {
      fail(ErrorCategory::Protocol, "image " + std::to_string(i) + ": " + e.what());
    }
    if (g.image.width() != req.constraint.width() || g.image.height() != req.constraint.height()) {
      fail(ErrorCategory::Protocol, "image " + std::to_string(i) + " is " + std::to_string(g.image.width()) + "x" +
                                        std::to_string(g.image.height()) + ", constraint is " +
                                        std::to_string(req.constraint.width()) + "x" +
                                        std::to_string(req.constraint.height()));
    }
    g.model_id = model;
    g.seed = seeds[i].is_number_unsigned() ? seeds[i].get<std::uint64_t>()
                                           : static_cast<std::uint64_t>(seeds[i].get<long long>());
    result.images.push_back(std::move(g));
  }
  return result;
}

json health_to_wire(const HealthStatus& status) {
  return {{"status", status.ok ? "ok" : "degraded"}, {"models", status.models}};
}

HealthStatus health_from_wire(const json& body) {
  if (!body.is_object()) fail(ErrorCategory::Protocol, "health body must be a JSON object");
  const std::string status = require(body, "status", json::value_t::string).get<std::string>();
  if (status != "ok" && status != "degraded") fail(ErrorCategory::Protocol, "unknown health status \"" + status + "\"");
  HealthStatus out;
  out.ok = status == "ok";
  for (const json& m : require(body, "models", json::value_t::array)) {
    if (!m.is_string()) fail(ErrorCategory::Protocol, "model ids must be strings");
    out.models.push_back(m.get<std::string>());
  }
  return out;
}

json error_to_wire(std::string_view code, std::string_view message) {
  return {{"error", {{"code", code}, {"message", message}}}};
}

// Counting gate bounding concurrent requests.
struct RemoteBackend::Gate {
  std::mutex mutex;
  std::condition_variable cv;
  int free = 0;

  void acquire() {
    std::unique_lock lock(mutex);
    cv.wait(lock, [&] { return free > 0; });
    --free;
  }
  void release() {
    {
      std::lock_guard lock(mutex);
      ++free;
    }
    cv.notify_one();
  }
};

namespace {

struct Slot {
  explicit Slot(RemoteBackend::Gate* g) : gate(g) { gate->acquire(); }
  ~Slot() { gate->release(); }
  RemoteBackend::Gate* gate;
};

struct Exchange {
  int status = 0;
  std::string body;
};

template <typename Fn>
Exchange call(const std::string& endpoint, std::chrono::milliseconds connect, std::chrono::milliseconds read,
              const std::string& what, Fn&& fn) {
  httplib::Client client(endpoint);
  if (!client.is_valid()) fail(ErrorCategory::Config, "invalid backend endpoint \"" + endpoint + "\"");
  client.set_connection_timeout(connect);
  client.set_read_timeout(read);
  client.set_write_timeout(read);
  const auto started = std::chrono::steady_clock::now();
  httplib::Result res = fn(client);
  if (!res) {
    const auto elapsed = std::chrono::steady_clock::now() - started;
    const httplib::Error err = res.error();
    const std::string detail = what + " to " + endpoint + " failed: " + httplib::to_string(err);
    if (err == httplib::Error::ConnectionTimeout ||
        (err == httplib::Error::Read && elapsed >= read - std::chrono::milliseconds(50))) {
      fail(ErrorCategory::Timeout, detail);
    }
    fail(ErrorCategory::Network, detail);
  }
  return {res->status, res->body};
}

[[noreturn]] void backend_failure(const std::string& what, const Exchange& ex) {
  std::string message = what + " returned HTTP " + std::to_string(ex.status);
  try {
    const json body = json::parse(ex.body);
    if (body.contains("error") && body["error"].is_object()) {
      message += " [" + body["error"].value("code", std::string()) + "] " +
                 body["error"].value("message", std::string());
      fail(ErrorCategory::Backend, message);
    }
  } catch (const json::exception&) {
  }
  fail(ErrorCategory::Backend, message + ": " + excerpt(ex.body));
}

json parse_body(const Exchange& ex, const std::string& what) {
  try {
    return json::parse(ex.body);
  } catch (const json::exception&) {
    fail(ErrorCategory::Protocol, what + " returned a non-JSON body: " + excerpt(ex.body));
  }
}

}  // namespace

RemoteBackend::RemoteBackend(RemoteConfig config) : config_(std::move(config)), gate_(std::make_unique<Gate>()) {
  if (config_.endpoint.empty()) fail(ErrorCategory::Config, "remote backend endpoint is empty");
  if (config_.max_in_flight < 1) fail(ErrorCategory::Config, "max_in_flight must be at least 1");
  gate_->free = config_.max_in_flight;
}

RemoteBackend::~RemoteBackend() = default;

GenerationResult RemoteBackend::generate(const GenerationRequest& req) {
  validate_request(req);
  const std::string payload = request_to_wire(req).dump();
  Slot slot(gate_.get());
  const auto started = std::chrono::steady_clock::now();
  const Exchange ex = call(config_.endpoint, config_.connect_timeout, req.timeout, "POST /v1/generate",
                           [&](httplib::Client& c) { return c.Post("/v1/generate", payload, "application/json"); });
  if (ex.status < 200 || ex.status >= 300) backend_failure("POST /v1/generate", ex);
  GenerationResult result = result_from_wire(parse_body(ex, "POST /v1/generate"), req);
  const double latency =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
  for (GeneratedImage& g : result.images) g.latency_ms = latency / static_cast<double>(result.images.size());
  return result;
}

HealthStatus RemoteBackend::health() {
  Slot slot(gate_.get());
  const Exchange ex = call(config_.endpoint, config_.connect_timeout, config_.connect_timeout, "GET /healthz",
                           [](httplib::Client& c) { return c.Get("/healthz"); });
  if (ex.status < 200 || ex.status >= 300) backend_failure("GET /healthz", ex);
  return health_from_wire(parse_body(ex, "GET /healthz"));
}

std::vector<std::vector<double>> RemoteBackend::features(const std::vector<CanonicalImage>& images) {
  json list = json::array();
  for (const CanonicalImage& img : images) list.push_back(base64_encode(encode_png(img)));
  const std::string payload = json{{"images_png_b64", list}}.dump();
  Slot slot(gate_.get());
  const Exchange ex = call(config_.endpoint, config_.connect_timeout, std::chrono::minutes(5), "POST /v1/features",
                           [&](httplib::Client& c) { return c.Post("/v1/features", payload, "application/json"); });
  if (ex.status < 200 || ex.status >= 300) backend_failure("POST /v1/features", ex);
  const json body = parse_body(ex, "POST /v1/features");
  if (!body.is_object()) fail(ErrorCategory::Protocol, "features body must be a JSON object");
  const json& rows = require(body, "features", json::value_t::array);
  if (rows.size() != images.size()) fail(ErrorCategory::Protocol, "feature count does not match image count");
  std::vector<std::vector<double>> out;
  for (const json& row : rows) {
    if (!row.is_array()) fail(ErrorCategory::Protocol, "feature rows must be arrays");
    std::vector<double> v;
    for (const json& x : row) {
      if (!x.is_number()) fail(ErrorCategory::Protocol, "features must be numbers");
      v.push_back(x.get<double>());
    }
    if (!out.empty() && v.size() != out.front().size()) fail(ErrorCategory::Protocol, "feature rows differ in length");
    out.push_back(std::move(v));
  }
  return out;
}

}  // namespace urbanstep
