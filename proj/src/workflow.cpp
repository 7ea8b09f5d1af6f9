#include "urbanstep/workflow.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <random>

#include "urbanstep/core/codec.hpp"
#include "urbanstep/core/palette.hpp"
#include "urbanstep/error.hpp"
#include "urbanstep/evaluator.hpp"
#include "urbanstep/metrics.hpp"
#include "urbanstep/prompts.hpp"

namespace urbanstep {

using nlohmann::json;

std::string_view name(SessionStage s) {
  switch (s) {
    case SessionStage::Stage1: return "stage1";
    case SessionStage::Stage2: return "stage2";
    case SessionStage::Stage3: return "stage3";
    case SessionStage::Completed: return "completed";
  }
  return "unknown";
}

std::optional<SessionStage> session_stage_from_name(std::string_view s) {
  for (auto st : {SessionStage::Stage1, SessionStage::Stage2, SessionStage::Stage3, SessionStage::Completed}) {
    if (name(st) == s) return st;
  }
  return std::nullopt;
}

Stage generation_stage(SessionStage s) {
  switch (s) {
    case SessionStage::Stage1: return Stage::One;
    case SessionStage::Stage2: return Stage::Two;
    case SessionStage::Stage3: return Stage::Three;
    case SessionStage::Completed: break;
  }
  fail(ErrorCategory::InvalidTransition, "completed session has no generation stage");
}

std::string_view name(EventKind k) {
  switch (k) {
    case EventKind::Created: return "Created";
    case EventKind::TargetsSet: return "TargetsSet";
    case EventKind::AlternativesGenerated: return "AlternativesGenerated";
    case EventKind::AlternativeSelected: return "AlternativeSelected";
    case EventKind::RevisionUploaded: return "RevisionUploaded";
    case EventKind::StageAdvanced: return "StageAdvanced";
    case EventKind::Completed: return "Completed";
  }
  return "unknown";
}

std::optional<EventKind> event_kind_from_name(std::string_view s) {
  for (int i = 0; i <= static_cast<int>(EventKind::Completed); ++i) {
    const auto k = static_cast<EventKind>(i);
    if (name(k) == s) return k;
  }
  return std::nullopt;
}

double ComplianceSnapshot::worst_mae() const {
  return std::max({road_error, land_use_mae, height_mae, open_space_error});
}

std::optional<std::string> StageState::forwarded_ref() const {
  if (revision_ref) return revision_ref;
  if (selected && *selected < alternatives.size()) return alternatives[*selected].image_ref;
  return std::nullopt;
}

StageState& DesignSession::current() { return stages.at(static_cast<std::size_t>(stage) - 1); }
const StageState& DesignSession::current() const { return stages.at(static_cast<std::size_t>(stage) - 1); }

// ---- JSON codecs ----

json metrics_to_json(const DesignMetrics& m) {
  return {{"road_density", m.road_density},
          {"land_use", m.land_use},
          {"height_coverage", m.height_coverage},
          {"open_space", m.open_space}};
}

DesignMetrics metrics_from_json(const json& j) {
  if (!j.is_object()) fail(ErrorCategory::Validation, "metrics must be an object");
  DesignMetrics m;
  auto number = [&](const char* key, double& out) {
    if (!j.contains(key)) return;
    if (!j[key].is_number()) fail(ErrorCategory::Validation, std::string(key) + " must be a number");
    out = j[key].get<double>();
  };
  auto vec = [&](const char* key, auto& out) {
    if (!j.contains(key)) return;
    const json& a = j[key];
    if (!a.is_array() || a.size() != out.size()) {
      fail(ErrorCategory::Validation, std::string(key) + " must be an array of " + std::to_string(out.size()));
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (!a[i].is_number()) fail(ErrorCategory::Validation, std::string(key) + " entries must be numbers");
      out[i] = a[i].get<double>();
    }
  };
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& k = it.key();
    if (k != "road_density" && k != "land_use" && k != "height_coverage" && k != "open_space") {
      fail(ErrorCategory::Validation, "unknown metrics field: " + k);
    }
  }
  number("road_density", m.road_density);
  vec("land_use", m.land_use);
  vec("height_coverage", m.height_coverage);
  number("open_space", m.open_space);
  return m;
}

namespace {

json binding_to_json(const BackendBinding& b) {
  json j = {{"kind", b.kind}, {"endpoint", b.endpoint}};
  j["model_id"] = b.model_id ? json(*b.model_id) : json(nullptr);
  return j;
}

BackendBinding binding_from_json(const json& j) {
  BackendBinding b;
  b.kind = j.at("kind").get<std::string>();
  b.endpoint = j.value("endpoint", std::string{});
  if (j.contains("model_id") && !j["model_id"].is_null()) b.model_id = j["model_id"].get<std::string>();
  return b;
}

json snapshot_to_json(const ComplianceSnapshot& c) {
  return {{"measured", metrics_to_json(c.measured)},
          {"road_error", c.road_error},
          {"land_use_mae", c.land_use_mae},
          {"height_mae", c.height_mae},
          {"open_space_error", c.open_space_error}};
}

ComplianceSnapshot snapshot_from_json(const json& j) {
  ComplianceSnapshot c;
  c.measured = metrics_from_json(j.at("measured"));
  c.road_error = j.at("road_error").get<double>();
  c.land_use_mae = j.at("land_use_mae").get<double>();
  c.height_mae = j.at("height_mae").get<double>();
  c.open_space_error = j.at("open_space_error").get<double>();
  return c;
}

json alternative_to_json(const Alternative& a) {
  return {{"image_ref", a.image_ref},
          {"seed", a.seed},
          {"model_id", a.model_id},
          {"infeasible", a.infeasible},
          {"compliance", a.compliance ? snapshot_to_json(*a.compliance) : json(nullptr)}};
}

Alternative alternative_from_json(const json& j) {
  Alternative a;
  a.image_ref = j.at("image_ref").get<std::string>();
  a.seed = j.at("seed").get<std::uint64_t>();
  a.model_id = j.at("model_id").get<std::string>();
  a.infeasible = j.at("infeasible").get<bool>();
  if (!j.at("compliance").is_null()) a.compliance = snapshot_from_json(j["compliance"]);
  return a;
}

template <typename T>
json opt(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

std::string now_iso8601() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[48];
  std::snprintf(out, sizeof out, "%s.%03lldZ", buf, static_cast<long long>(ms));
  return out;
}

std::string random_id() {
  static std::mutex m;
  static std::random_device rd;
  std::lock_guard lock(m);
  std::string id;
  static constexpr char hex[] = "0123456789abcdef";
  for (int i = 0; i < 4; ++i) {
    std::uint32_t v = rd();
    for (int k = 0; k < 8; ++k) {
      id.push_back(hex[v & 0xF]);
      v >>= 4;
    }
  }
  return id;
}

bool is_hex(std::string_view s, std::size_t len) {
  return s.size() == len && std::ranges::all_of(s, [](char c) { return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'); });
}

}  // namespace

json event_to_json(const SessionEvent& e) {
  return {{"seq", e.sequence}, {"kind", name(e.kind)}, {"timestamp", e.timestamp}, {"payload", e.payload}};
}

SessionEvent event_from_json(const json& j, std::uint64_t fallback_sequence) {
  SessionEvent e;
  if (!j.is_object() || !j.contains("seq") || !j["seq"].is_number_unsigned()) {
    throw CorruptLogError(fallback_sequence, "event has no sequence number");
  }
  e.sequence = j["seq"].get<std::uint64_t>();
  if (!j.contains("kind") || !j["kind"].is_string()) throw CorruptLogError(e.sequence, "event has no kind");
  const auto kind = event_kind_from_name(j["kind"].get<std::string>());
  if (!kind) throw CorruptLogError(e.sequence, "unknown event kind " + j["kind"].get<std::string>());
  e.kind = *kind;
  if (!j.contains("payload") || !j["payload"].is_object()) throw CorruptLogError(e.sequence, "event has no payload");
  e.payload = j["payload"];
  e.timestamp = j.value("timestamp", std::string{});
  return e;
}

json session_to_json(const DesignSession& s) {
  json stages = json::array();
  for (std::size_t i = 0; i < kWorkflowStages; ++i) {
    const StageState& st = s.stages[i];
    json alts = json::array();
    for (const auto& a : st.alternatives) alts.push_back(alternative_to_json(a));
    stages.push_back({{"stage", i + 1},
                      {"targets", st.targets ? metrics_to_json(*st.targets) : json(nullptr)},
                      {"prompt", opt(st.prompt)},
                      {"alternatives", alts},
                      {"selected", opt(st.selected)},
                      {"revision_ref", opt(st.revision_ref)},
                      {"forwarded_ref", opt(st.forwarded_ref())}});
  }
  return {{"id", s.id},
          {"city", s.city},
          {"site_ref", s.site_ref},
          {"image_size", s.image_size},
          {"stage", name(s.stage)},
          {"stages", stages},
          {"log_position", s.log_position},
          {"backend", binding_to_json(s.backend)}};
}

// ---- state machine ----

namespace {

std::size_t payload_stage(const json& p) {
  const int st = p.at("stage").get<int>();
  if (st < 1 || st > static_cast<int>(kWorkflowStages)) throw std::out_of_range("stage out of range");
  return static_cast<std::size_t>(st);
}

void apply_unchecked(DesignSession& s, const SessionEvent& ev) {
  const json& p = ev.payload;
  auto corrupt = [&](const std::string& msg) { throw CorruptLogError(ev.sequence, msg); };
  if (ev.kind == EventKind::Created) {
    if (s.log_position != 0) corrupt("Created after the first event");
    s.id = p.at("id").get<std::string>();
    s.city = p.at("city").get<std::string>();
    s.site_ref = p.at("site_ref").get<std::string>();
    s.image_size = p.at("image_size").get<int>();
    s.backend = binding_from_json(p.at("backend"));
    s.stage = SessionStage::Stage1;
    return;
  }
  if (s.log_position == 0) corrupt("log does not start with Created");
  if (s.stage == SessionStage::Completed) corrupt("event after Completed");
  if (ev.kind != EventKind::StageAdvanced && ev.kind != EventKind::Completed &&
      payload_stage(p) != static_cast<std::size_t>(s.stage)) {
    corrupt("event stage differs from the session stage");
  }
  StageState& st = s.current();
  switch (ev.kind) {
    case EventKind::Created: break;
    case EventKind::TargetsSet:
      st.targets.reset();
      if (!p.at("targets").is_null()) st.targets = metrics_from_json(p["targets"]);
      st.prompt = p.at("prompt").get<std::string>();
      break;
    case EventKind::AlternativesGenerated: {
      std::vector<Alternative> alts;
      for (const auto& a : p.at("alternatives")) alts.push_back(alternative_from_json(a));
      if (alts.empty() || alts.size() > static_cast<std::size_t>(kMaxAlternatives)) corrupt("bad alternative count");
      st.alternatives = std::move(alts);
      st.selected.reset();
      break;
    }
    case EventKind::AlternativeSelected: {
      const auto idx = p.at("index").get<std::size_t>();
      if (idx >= st.alternatives.size()) corrupt("selected index out of range");
      st.selected = idx;
      break;
    }
    case EventKind::RevisionUploaded:
      st.revision_ref = p.at("image_ref").get<std::string>();
      break;
    case EventKind::StageAdvanced:
    case EventKind::Completed: {
      const auto from = session_stage_from_name(p.at("from").get<std::string>());
      const auto to = session_stage_from_name(p.at("to").get<std::string>());
      if (from != s.stage) corrupt("advance from a stage other than the current one");
      const auto expected = static_cast<SessionStage>(static_cast<int>(s.stage) + 1);
      if (to != expected) corrupt("advance skips a stage");
      if ((ev.kind == EventKind::Completed) != (expected == SessionStage::Completed)) {
        corrupt("Completed must end stage 3 and only stage 3");
      }
      if (!st.forwarded_ref()) corrupt("advance without a selection or revision");
      s.stage = expected;
      break;
    }
  }
}

}  // namespace

void apply(DesignSession& session, const SessionEvent& event) {
  if (event.sequence != session.log_position + 1) {
    throw CorruptLogError(session.log_position + 1,
                          "expected sequence " + std::to_string(session.log_position + 1) + ", found " +
                              std::to_string(event.sequence));
  }
  try {
    apply_unchecked(session, event);
  } catch (const CorruptLogError&) {
    throw;
  } catch (const std::exception& e) {
    throw CorruptLogError(event.sequence, std::string("malformed ") + std::string(name(event.kind)) +
                                              " payload: " + e.what());
  }
  session.log_position = event.sequence;
}

DesignSession replay(std::span<const SessionEvent> events) {
  if (events.empty()) throw CorruptLogError(1, "empty log has no Created event");
  if (events.front().kind != EventKind::Created) throw CorruptLogError(events.front().sequence, "first event is not Created");
  DesignSession s;
  for (const auto& e : events) apply(s, e);
  return s;
}

// ---- stores ----

void MemoryStore::append(const std::string& session_id, const SessionEvent& event) {
  std::lock_guard lock(mutex_);
  logs_[session_id].push_back(event_to_json(event).dump());
}

std::vector<SessionEvent> MemoryStore::load(const std::string& session_id) {
  std::lock_guard lock(mutex_);
  auto it = logs_.find(session_id);
  if (it == logs_.end()) fail(ErrorCategory::NotFound, "unknown session " + session_id);
  std::vector<SessionEvent> out;
  for (const auto& line : it->second) out.push_back(event_from_json(json::parse(line), out.size() + 1));
  return out;
}

bool MemoryStore::exists(const std::string& session_id) {
  std::lock_guard lock(mutex_);
  return logs_.contains(session_id);
}

std::vector<std::string> MemoryStore::list() {
  std::lock_guard lock(mutex_);
  std::vector<std::string> ids;
  for (const auto& [id, _] : logs_) ids.push_back(id);
  return ids;
}

std::string MemoryStore::put_blob(const std::string& session_id, std::span<const std::uint8_t> png) {
  const std::string ref = sha256_hex(png);
  std::lock_guard lock(mutex_);
  blobs_[session_id].try_emplace(ref, png.begin(), png.end());
  return ref;
}

std::vector<std::uint8_t> MemoryStore::get_blob(const std::string& session_id, const std::string& ref) {
  std::lock_guard lock(mutex_);
  auto s = blobs_.find(session_id);
  if (s == blobs_.end()) fail(ErrorCategory::NotFound, "unknown session " + session_id);
  auto b = s->second.find(ref);
  if (b == s->second.end()) fail(ErrorCategory::NotFound, "unknown image " + ref);
  return b->second;
}

FileStore::FileStore(std::filesystem::path root) : root_(std::move(root)) {
  std::error_code ec;
  std::filesystem::create_directories(root_ / "sessions", ec);
  if (ec) fail(ErrorCategory::Io, "cannot create session store at " + root_.string() + ": " + ec.message());
}

std::filesystem::path FileStore::session_dir(const std::string& session_id) const {
  if (session_id.empty() || session_id.find_first_of("/\\.") != std::string::npos) {
    fail(ErrorCategory::NotFound, "invalid session id " + session_id);
  }
  return root_ / "sessions" / session_id;
}

std::filesystem::path FileStore::log_path(const std::string& session_id) const {
  return session_dir(session_id) / "events.jsonl";
}

void FileStore::append(const std::string& session_id, const SessionEvent& event) {
  std::lock_guard lock(mutex_);
  const auto dir = session_dir(session_id);
  std::filesystem::create_directories(dir);
  const auto path = dir / "events.jsonl";
  const int fd = ::open(path.c_str(), O_RDWR | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd < 0) fail(ErrorCategory::Io, "cannot open " + path.string());
  auto close_fd = [&] { ::close(fd); };
  struct stat st {};
  if (::fstat(fd, &st) != 0) {
    close_fd();
    fail(ErrorCategory::Io, "cannot stat " + path.string());
  }
  if (st.st_size > 0) {
    // Drop a torn tail left by an interrupted append.
    std::vector<char> buf(static_cast<std::size_t>(st.st_size));
    if (::pread(fd, buf.data(), buf.size(), 0) != static_cast<ssize_t>(buf.size())) {
      close_fd();
      fail(ErrorCategory::Io, "cannot read " + path.string());
    }
    if (buf.back() != '\n') {
      const auto nl = std::string_view(buf.data(), buf.size()).rfind('\n');
      const off_t keep = nl == std::string_view::npos ? 0 : static_cast<off_t>(nl + 1);
      if (::ftruncate(fd, keep) != 0) {
        close_fd();
        fail(ErrorCategory::Io, "cannot truncate " + path.string());
      }
    }
  }
  const std::string line = event_to_json(event).dump() + "\n";
  std::size_t done = 0;
  while (done < line.size()) {
    const ssize_t n = ::write(fd, line.data() + done, line.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      close_fd();
      fail(ErrorCategory::Io, "cannot append to " + path.string());
    }
    done += static_cast<std::size_t>(n);
  }
  ::fsync(fd);
  close_fd();
}

std::vector<SessionEvent> FileStore::load(const std::string& session_id) {
  std::lock_guard lock(mutex_);
  const auto path = log_path(session_id);
  if (!std::filesystem::exists(path)) fail(ErrorCategory::NotFound, "unknown session " + session_id);
  const auto bytes = read_file(path);
  const std::string_view text(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  std::vector<SessionEvent> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) break;  // torn final line
    const auto line = text.substr(pos, nl - pos);
    pos = nl + 1;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw CorruptLogError(out.size() + 1, "unreadable log line");
    out.push_back(event_from_json(j, out.size() + 1));
  }
  return out;
}

bool FileStore::exists(const std::string& session_id) {
  try {
    return std::filesystem::exists(log_path(session_id));
  } catch (const Error&) {
    return false;
  }
}

std::vector<std::string> FileStore::list() {
  std::vector<std::string> ids;
  for (const auto& d : std::filesystem::directory_iterator(root_ / "sessions")) {
    if (d.is_directory() && std::filesystem::exists(d.path() / "events.jsonl")) ids.push_back(d.path().filename());
  }
  std::ranges::sort(ids);
  return ids;
}

std::string FileStore::put_blob(const std::string& session_id, std::span<const std::uint8_t> png) {
  const std::string ref = sha256_hex(png);
  const auto path = session_dir(session_id) / "blobs" / (ref + ".png");
  std::lock_guard lock(mutex_);
  if (!std::filesystem::exists(path)) {
    std::filesystem::create_directories(path.parent_path());
    write_file_atomic(path, png);
  }
  return ref;
}

std::vector<std::uint8_t> FileStore::get_blob(const std::string& session_id, const std::string& ref) {
  if (!is_hex(ref, 64)) fail(ErrorCategory::NotFound, "invalid image reference " + ref);
  const auto path = session_dir(session_id) / "blobs" / (ref + ".png");
  if (!std::filesystem::exists(path)) fail(ErrorCategory::NotFound, "unknown image " + ref);
  return read_file(path);
}

// ---- service ----

BackendFactory default_backend_factory() {
  auto procedural = std::make_shared<ProceduralBackend>();
  auto remotes = std::make_shared<std::map<std::string, std::shared_ptr<GenerationBackend>>>();
  auto mutex = std::make_shared<std::mutex>();
  return [procedural, remotes, mutex](const BackendBinding& b) -> std::shared_ptr<GenerationBackend> {
    if (b.kind == "procedural") return procedural;
    if (b.kind != "remote") fail(ErrorCategory::Config, "unknown backend kind " + b.kind);
    std::lock_guard lock(*mutex);
    auto& slot = (*remotes)[b.endpoint];
    if (!slot) slot = std::make_shared<RemoteBackend>(RemoteConfig{.endpoint = b.endpoint});
    return slot;
  };
}

struct WorkflowService::Entry {
  std::mutex op;                  // serializes mutations
  mutable std::mutex state_mutex;  // guards `state` for readers
  DesignSession state;

  DesignSession snapshot() const {
    std::lock_guard lock(state_mutex);
    return state;
  }
};

WorkflowService::WorkflowService(std::shared_ptr<SessionStore> store, BackendFactory factory)
    : store_(std::move(store)), factory_(std::move(factory)) {}

WorkflowService::~WorkflowService() = default;

std::shared_ptr<WorkflowService::Entry> WorkflowService::entry(const std::string& id) {
  std::lock_guard lock(map_mutex_);
  if (auto it = sessions_.find(id); it != sessions_.end()) return it->second;
  if (!store_->exists(id)) fail(ErrorCategory::NotFound, "unknown session " + id);
  auto e = std::make_shared<Entry>();
  const auto events = store_->load(id);
  e->state = replay(events);
  sessions_.emplace(id, e);
  return e;
}

SessionEvent WorkflowService::commit(Entry& e, EventKind kind, json payload) {
  SessionEvent ev;
  ev.kind = kind;
  ev.payload = std::move(payload);
  ev.timestamp = now_iso8601();
  DesignSession next = e.snapshot();
  ev.sequence = next.log_position + 1;
  apply(next, ev);
  store_->append(next.id, ev);
  std::lock_guard lock(e.state_mutex);
  e.state = std::move(next);
  return ev;
}

std::string WorkflowService::create_session(const std::string& city, const CanonicalImage& site,
                                            BackendBinding backend) {
  if (site.kind() != ImageKind::SiteConstraints) {
    fail(ErrorCategory::Validation, "session needs a site-constraint image, got " + std::string(name(site.kind())));
  }
  if (site.empty() || site.width() != site.height()) {
    fail(ErrorCategory::Validation, "site image must be square and non-empty");
  }
  // Reuses the prompt builder's city checks.
  (void)build_stage3(city);
  if (backend.kind != "procedural" && backend.kind != "remote") {
    fail(ErrorCategory::Validation, "backend kind must be procedural or remote");
  }
  if (backend.kind == "remote" && backend.endpoint.empty()) {
    fail(ErrorCategory::Validation, "remote backend needs an endpoint");
  }
  if (backend.kind == "procedural") backend.endpoint.clear();

  auto e = std::make_shared<Entry>();
  std::string id;
  {
    std::lock_guard lock(map_mutex_);
    do {
      id = random_id();
    } while (sessions_.contains(id) || store_->exists(id));
    sessions_.emplace(id, e);
  }
  std::lock_guard op(e->op);
  try {
    const std::string ref = store_->put_blob(id, encode_png(site));
    commit(*e, EventKind::Created,
           {{"id", id},
            {"city", city},
            {"site_ref", ref},
            {"image_size", site.width()},
            {"backend", binding_to_json(backend)}});
  } catch (...) {
    std::lock_guard lock(map_mutex_);
    sessions_.erase(id);
    throw;
  }
  return id;
}

DesignSession WorkflowService::get(const std::string& id) { return entry(id)->snapshot(); }

namespace {

void require_open(const DesignSession& s) {
  if (s.stage == SessionStage::Completed) fail(ErrorCategory::InvalidTransition, "session is completed");
}

}  // namespace

DesignSession WorkflowService::set_targets(const std::string& id, SessionStage stage, const DesignMetrics& targets) {
  auto e = entry(id);
  std::lock_guard op(e->op);
  const DesignSession s = e->snapshot();
  require_open(s);
  if (stage != s.stage) {
    fail(ErrorCategory::InvalidTransition, "targets for " + std::string(name(stage)) + " while session is at " +
                                               std::string(name(s.stage)));
  }
  const Stage gen = generation_stage(stage);
  json payload = {{"stage", static_cast<int>(stage)}};
  if (gen == Stage::Three) {
    payload["targets"] = nullptr;
  } else {
    validate_targets(gen, targets);
    DesignMetrics stored = targets;
    // Only the stage's own groups are kept.
    if (gen == Stage::One) {
      stored.height_coverage = {};
      stored.open_space = 1.0;
    } else {
      stored.road_density = 0.0;
      stored.land_use = {};
    }
    payload["targets"] = metrics_to_json(stored);
  }
  payload["prompt"] = build_prompt(gen, s.city, targets).text;
  commit(*e, EventKind::TargetsSet, std::move(payload));
  return e->snapshot();
}

std::vector<Alternative> WorkflowService::request_alternatives(const std::string& id, int n, std::uint64_t seed) {
  auto e = entry(id);
  std::lock_guard op(e->op);
  const DesignSession s = e->snapshot();
  require_open(s);
  if (n < 1 || n > kMaxAlternatives) {
    fail(ErrorCategory::Validation, "alternative count must lie in [1, " + std::to_string(kMaxAlternatives) + "]");
  }
  const Stage gen = generation_stage(s.stage);
  const StageState& st = s.current();
  if (gen != Stage::Three && !st.prompt) {
    fail(ErrorCategory::Precondition, "set targets for " + std::string(name(s.stage)) + " first");
  }

  GenerationRequest req;
  req.stage = gen;
  req.num_samples = n;
  req.seed = seed;
  req.model_id = s.backend.model_id;
  req.prompt = st.prompt ? PromptText{gen, s.city, *st.prompt} : build_stage3(s.city);
  if (gen == Stage::One) {
    req.constraint = decode_image(store_->get_blob(id, s.site_ref), ImageKind::SiteConstraints);
  } else {
    const auto& prev = s.stages[static_cast<std::size_t>(s.stage) - 2];
    req.constraint = decode_image(store_->get_blob(id, *prev.forwarded_ref()), constraint_kind(gen));
  }

  auto backend = factory_(s.backend);
  const GenerationResult result = backend->generate(req);
  if (result.images.size() != static_cast<std::size_t>(n)) {
    fail(ErrorCategory::Protocol, "backend returned " + std::to_string(result.images.size()) + " images for " +
                                      std::to_string(n) + " requested");
  }

  std::vector<Alternative> alts;
  json arr = json::array();
  for (const auto& g : result.images) {
    Alternative a;
    a.image_ref = store_->put_blob(id, encode_png(g.image));
    a.seed = g.seed;
    a.model_id = g.model_id;
    a.infeasible = g.infeasible;
    if (gen != Stage::Three) {
      const DesignMetrics target = *st.targets;
      ComplianceSnapshot c;
      c.measured = metrics_from_raster(classify_image(g.image)).metrics;
      const ComplianceReport r = score_compliance(std::span(&target, 1), std::span(&c.measured, 1), gen);
      auto mae = [&](const char* group) { return r.find(group)->mae; };
      if (gen == Stage::One) {
        c.road_error = mae("road_density");
        c.land_use_mae = mae("land_use");
      } else {
        c.height_mae = mae("building_height");
        c.open_space_error = mae("open_space");
      }
      a.compliance = c;
    }
    arr.push_back(alternative_to_json(a));
    alts.push_back(std::move(a));
  }
  commit(*e, EventKind::AlternativesGenerated,
         {{"stage", static_cast<int>(s.stage)}, {"n", n}, {"seed", seed}, {"alternatives", arr}});
  return alts;
}

DesignSession WorkflowService::select_alternative(const std::string& id, std::size_t index) {
  auto e = entry(id);
  std::lock_guard op(e->op);
  const DesignSession s = e->snapshot();
  require_open(s);
  const auto count = s.current().alternatives.size();
  if (index >= count) {
    fail(ErrorCategory::Validation,
         "alternative index " + std::to_string(index) + " out of range for " + std::to_string(count));
  }
  commit(*e, EventKind::AlternativeSelected, {{"stage", static_cast<int>(s.stage)}, {"index", index}});
  return e->snapshot();
}

DesignSession WorkflowService::upload_revision(const std::string& id, const CanonicalImage& image) {
  auto e = entry(id);
  std::lock_guard op(e->op);
  const DesignSession s = e->snapshot();
  require_open(s);
  const ImageKind want = output_kind(generation_stage(s.stage));
  if (image.kind() != want) {
    fail(ErrorCategory::Validation, "revision must be " + std::string(name(want)) + ", got " +
                                        std::string(name(image.kind())));
  }
  if (image.width() != s.image_size || image.height() != s.image_size) {
    fail(ErrorCategory::Validation, "revision must be " + std::to_string(s.image_size) + "x" +
                                        std::to_string(s.image_size));
  }
  const std::string ref = store_->put_blob(id, encode_png(image));
  commit(*e, EventKind::RevisionUploaded, {{"stage", static_cast<int>(s.stage)}, {"image_ref", ref}});
  return e->snapshot();
}

DesignSession WorkflowService::advance(const std::string& id) {
  auto e = entry(id);
  std::lock_guard op(e->op);
  const DesignSession s = e->snapshot();
  require_open(s);
  if (!s.current().forwarded_ref()) {
    fail(ErrorCategory::InvalidTransition, "select an alternative or upload a revision before advancing");
  }
  const auto to = static_cast<SessionStage>(static_cast<int>(s.stage) + 1);
  commit(*e, to == SessionStage::Completed ? EventKind::Completed : EventKind::StageAdvanced,
         {{"from", name(s.stage)}, {"to", name(to)}});
  return e->snapshot();
}

std::vector<std::uint8_t> WorkflowService::image_bytes(const std::string& id, const std::string& ref) {
  entry(id);
  return store_->get_blob(id, ref);
}

CanonicalImage WorkflowService::image(const std::string& id, const std::string& ref, ImageKind kind) {
  return decode_image(image_bytes(id, ref), kind);
}

std::vector<SessionEvent> WorkflowService::events(const std::string& id) {
  auto e = entry(id);
  std::lock_guard op(e->op);
  return store_->load(id);
}

std::vector<std::string> WorkflowService::list() { return store_->list(); }

}  // namespace urbanstep
