#include "urbanstep/server.hpp"

#include "httplib.h"
#include "urbanstep/core/codec.hpp"
#include "urbanstep/core/palette.hpp"
#include "urbanstep/evaluator.hpp"
#include "urbanstep/prompts.hpp"

namespace urbanstep {

using nlohmann::json;

int http_status(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::Validation:
    case ErrorCategory::Parse:
    case ErrorCategory::Protocol: return 400;
    case ErrorCategory::NotFound: return 404;
    case ErrorCategory::InvalidTransition:
    case ErrorCategory::Precondition: return 409;
    case ErrorCategory::Network:
    case ErrorCategory::Backend: return 502;
    case ErrorCategory::Timeout: return 504;
    case ErrorCategory::Config:
    case ErrorCategory::CorruptLog:
    case ErrorCategory::Io: return 500;
  }
  return 500;
}

namespace {

using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, ErrorCategory category, const std::string& message) {
  send_json(res, error_to_wire(category_name(category), message), http_status(category));
}

Handler guarded(Handler fn) {
  return [fn = std::move(fn)](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const Error& e) {
      send_error(res, e.category(), e.what());
    } catch (const json::exception& e) {
      send_error(res, ErrorCategory::Validation, std::string("malformed request body: ") + e.what());
    } catch (const std::exception& e) {
      send_error(res, ErrorCategory::Io, e.what());
    }
  };
}

json body_json(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  json j = json::parse(req.body, nullptr, false);
  if (j.is_discarded()) throw ParseError(0, "request body is not valid JSON");
  if (!j.is_object()) fail(ErrorCategory::Validation, "request body must be a JSON object");
  return j;
}

Stage stage_field(const json& v, bool allow_combined) {
  std::optional<Stage> st;
  if (v.is_number_integer()) {
    const int n = v.get<int>();
    if (n >= 1 && n <= 4) st = static_cast<Stage>(n);
  } else if (v.is_string()) {
    std::string s = v.get<std::string>();
    if (s.starts_with("stage")) s = s.substr(5);
    st = stage_from_name(s);
  }
  if (!st || (!allow_combined && *st == Stage::Combined)) {
    fail(ErrorCategory::Validation, "unknown stage " + v.dump());
  }
  return *st;
}

json alternatives_json(const std::vector<Alternative>& alts) {
  json arr = json::array();
  for (const auto& a : alts) {
    json j = {{"image_ref", a.image_ref}, {"seed", a.seed}, {"model_id", a.model_id}, {"infeasible", a.infeasible}};
    j["compliance"] = nullptr;
    if (a.compliance) {
      const auto& c = *a.compliance;
      j["compliance"] = {{"measured", metrics_to_json(c.measured)},
                         {"road_error", c.road_error},
                         {"land_use_mae", c.land_use_mae},
                         {"height_mae", c.height_mae},
                         {"open_space_error", c.open_space_error}};
    }
    arr.push_back(std::move(j));
  }
  return arr;
}

}  // namespace

StudioServer::StudioServer(WorkflowService& service, ServerOptions options)
    : service_(service), options_(std::move(options)), server_(std::make_unique<httplib::Server>()) {
  if (!options_.generator) options_.generator = std::make_shared<ProceduralBackend>();
  server_->set_payload_max_length(options_.max_body_bytes);
  routes();
}

StudioServer::~StudioServer() { stop(); }

void StudioServer::routes() {
  auto& s = *server_;
  if (options_.allow_cors) {
    s.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
    s.Options(".*", [](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
      res.status = 204;
    });
  }

  s.Post("/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const json body = body_json(req);
    const std::string city = body.at("city").get<std::string>();
    const std::string kind_name = body.value("site_kind", std::string(name(ImageKind::SiteConstraints)));
    const auto kind = image_kind_from_name(kind_name);
    if (!kind) fail(ErrorCategory::Validation, "unknown image kind " + kind_name);
    const CanonicalImage site = decode_image(base64_decode(body.at("site_png_b64").get<std::string>()), *kind);
    BackendBinding binding;
    if (body.contains("backend")) {
      const json& b = body["backend"];
      binding.kind = b.value("kind", std::string("procedural"));
      binding.endpoint = b.value("endpoint", std::string{});
      if (b.contains("model_id") && !b["model_id"].is_null()) binding.model_id = b["model_id"].get<std::string>();
    }
    const std::string id = service_.create_session(city, site, binding);
    send_json(res, session_to_json(service_.get(id)), 201);
  }));

  s.Get("/sessions", guarded([this](const httplib::Request&, httplib::Response& res) {
    send_json(res, {{"sessions", service_.list()}});
  }));

  s.Get(R"(/sessions/([0-9a-zA-Z_-]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
    send_json(res, session_to_json(service_.get(req.matches[1])));
  }));

  s.Get(R"(/sessions/([0-9a-zA-Z_-]+)/events)", guarded([this](const httplib::Request& req, httplib::Response& res) {
    json arr = json::array();
    for (const auto& e : service_.events(req.matches[1])) arr.push_back(event_to_json(e));
    send_json(res, {{"events", arr}});
  }));

  s.Post(R"(/sessions/([0-9a-zA-Z_-]+)/targets)", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const json body = body_json(req);
    const Stage st = stage_field(body.at("stage"), false);
    const DesignMetrics m = body.contains("metrics") ? metrics_from_json(body["metrics"]) : DesignMetrics{};
    if (st != Stage::Three && !body.contains("metrics")) fail(ErrorCategory::Validation, "metrics are required");
    send_json(res, session_to_json(service_.set_targets(req.matches[1], static_cast<SessionStage>(st), m)));
  }));

  s.Post(R"(/sessions/([0-9a-zA-Z_-]+)/alternatives)",
         guarded([this](const httplib::Request& req, httplib::Response& res) {
           const json body = body_json(req);
           const int n = body.at("n").get<int>();
           const std::uint64_t seed = body.value("seed", std::uint64_t{0});
           const auto alts = service_.request_alternatives(req.matches[1], n, seed);
           send_json(res, {{"alternatives", alternatives_json(alts)},
                           {"session", session_to_json(service_.get(req.matches[1]))}});
         }));

  s.Post(R"(/sessions/([0-9a-zA-Z_-]+)/select)", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const json body = body_json(req);
    const auto& index = body.at("index");
    if (!index.is_number_integer() || index.get<long long>() < 0) {
      fail(ErrorCategory::Validation, "index must be a non-negative integer");
    }
    send_json(res, session_to_json(service_.select_alternative(req.matches[1], index.get<std::size_t>())));
  }));

  s.Post(R"(/sessions/([0-9a-zA-Z_-]+)/revision)", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    std::string bytes = req.body;
    if (req.is_multipart_form_data()) {
      if (!req.has_file("image")) fail(ErrorCategory::Validation, "multipart revision needs an 'image' part");
      bytes = req.get_file_value("image").content;
    }
    if (bytes.empty()) fail(ErrorCategory::Validation, "revision body is empty");
    ImageKind kind;
    if (req.has_param("kind")) {
      const auto k = image_kind_from_name(req.get_param_value("kind"));
      if (!k) fail(ErrorCategory::Validation, "unknown image kind " + req.get_param_value("kind"));
      kind = *k;
    } else {
      const DesignSession cur = service_.get(id);
      if (cur.stage == SessionStage::Completed) fail(ErrorCategory::InvalidTransition, "session is completed");
      kind = output_kind(generation_stage(cur.stage));
    }
    const CanonicalImage img =
        decode_image(std::span(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()), kind);
    send_json(res, session_to_json(service_.upload_revision(id, img)));
  }));

  s.Post(R"(/sessions/([0-9a-zA-Z_-]+)/advance)", guarded([this](const httplib::Request& req, httplib::Response& res) {
    send_json(res, session_to_json(service_.advance(req.matches[1])));
  }));

  s.Get(R"(/sessions/([0-9a-zA-Z_-]+)/images/([0-9a-f]{64}))",
        guarded([this](const httplib::Request& req, httplib::Response& res) {
          const auto bytes = service_.image_bytes(req.matches[1], req.matches[2]);
          res.set_content(std::string(bytes.begin(), bytes.end()), "image/png");
        }));

  s.Post("/prompts/preview", guarded([](const httplib::Request& req, httplib::Response& res) {
    const json body = body_json(req);
    const Stage st = stage_field(body.at("stage"), true);
    const std::string city = body.at("city").get<std::string>();
    const DesignMetrics m = body.contains("metrics") ? metrics_from_json(body["metrics"]) : DesignMetrics{};
    if (st != Stage::Three) validate_targets(st, m);
    send_json(res, {{"stage", name(st)}, {"city", city}, {"prompt", build_prompt(st, city, m).text}});
  }));

  s.Get("/palette", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(default_palette().to_json(), "application/json");
  });

  s.Get("/healthz", guarded([this](const httplib::Request&, httplib::Response& res) {
    send_json(res, health_to_wire(options_.generator->health()));
  }));

  s.Post("/v1/generate", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const GenerationRequest gen = request_from_wire(body_json(req));
    send_json(res, result_to_wire(options_.generator->generate(gen)));
  }));

  s.Post("/v1/features", guarded([](const httplib::Request& req, httplib::Response& res) {
    const json body = body_json(req);
    json rows = json::array();
    for (const auto& b64 : body.at("images_png_b64")) {
      rows.push_back(default_features(decode_image(base64_decode(b64.get<std::string>()), ImageKind::Stage1Plan)));
    }
    send_json(res, {{"features", rows}, {"extractor", kClassGridExtractor}});
  }));
}

int StudioServer::bind(const std::string& host, int port) {
  const int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (bound < 0) fail(ErrorCategory::Io, "cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void StudioServer::listen() { server_->listen_after_bind(); }

int StudioServer::start(const std::string& host, int port) {
  const int bound = bind(host, port);
  thread_ = std::thread([this] { listen(); });
  server_->wait_until_ready();
  return bound;
}

void StudioServer::stop() {
  server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace urbanstep
