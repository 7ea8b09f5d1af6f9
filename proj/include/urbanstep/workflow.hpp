#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "urbanstep/core/types.hpp"
#include "urbanstep/genbackend.hpp"

namespace urbanstep {

enum class SessionStage : std::uint8_t { Stage1 = 1, Stage2 = 2, Stage3 = 3, Completed = 4 };
inline constexpr std::size_t kWorkflowStages = 3;

std::string_view name(SessionStage s);  // "stage1" .. "completed"
std::optional<SessionStage> session_stage_from_name(std::string_view s);
Stage generation_stage(SessionStage s);  // Stage1 -> Stage::One, ...

struct BackendBinding {
  std::string kind = "procedural";  // "procedural" or "remote"
  std::string endpoint;
  std::optional<std::string> model_id;

  bool operator==(const BackendBinding&) const = default;
};

// Per-alternative measurement against the stage targets at generation time.
struct ComplianceSnapshot {
  DesignMetrics measured;
  double road_error = 0.0;       // stage 1
  double land_use_mae = 0.0;     // stage 1
  double height_mae = 0.0;       // stage 2
  double open_space_error = 0.0; // stage 2

  bool operator==(const ComplianceSnapshot&) const = default;
  double worst_mae() const;
};

struct Alternative {
  std::string image_ref;  // sha256 of the PNG blob
  std::uint64_t seed = 0;
  std::string model_id;
  bool infeasible = false;
  std::optional<ComplianceSnapshot> compliance;  // absent for stage 3

  bool operator==(const Alternative&) const = default;
};

struct StageState {
  std::optional<DesignMetrics> targets;
  std::optional<std::string> prompt;
  std::vector<Alternative> alternatives;
  std::optional<std::size_t> selected;
  std::optional<std::string> revision_ref;

  bool operator==(const StageState&) const = default;
  // Revision if present, otherwise the selected alternative.
  std::optional<std::string> forwarded_ref() const;
};

struct DesignSession {
  std::string id;
  std::string city;
  std::string site_ref;
  int image_size = 0;
  SessionStage stage = SessionStage::Stage1;
  std::array<StageState, kWorkflowStages> stages;
  std::uint64_t log_position = 0;
  BackendBinding backend;

  bool operator==(const DesignSession&) const = default;
  StageState& current();
  const StageState& current() const;
};

enum class EventKind : std::uint8_t {
  Created,
  TargetsSet,
  AlternativesGenerated,
  AlternativeSelected,
  RevisionUploaded,
  StageAdvanced,
  Completed,
};
std::string_view name(EventKind k);
std::optional<EventKind> event_kind_from_name(std::string_view s);

struct SessionEvent {
  std::uint64_t sequence = 0;
  EventKind kind = EventKind::Created;
  nlohmann::json payload;
  std::string timestamp;  // ISO-8601 UTC; not part of session state

  bool operator==(const SessionEvent&) const = default;
};

nlohmann::json event_to_json(const SessionEvent& e);
// Throws CorruptLogError naming `fallback_sequence` when the line is unreadable.
SessionEvent event_from_json(const nlohmann::json& j, std::uint64_t fallback_sequence);

nlohmann::json metrics_to_json(const DesignMetrics& m);
DesignMetrics metrics_from_json(const nlohmann::json& j);
nlohmann::json session_to_json(const DesignSession& s);

// Applies one event. Any inconsistency (wrong sequence, illegal transition,
// malformed payload) throws CorruptLogError with the event's sequence.
void apply(DesignSession& session, const SessionEvent& event);
DesignSession replay(std::span<const SessionEvent> events);

// Storage for event logs and content-addressed PNG blobs.
class SessionStore {
 public:
  virtual ~SessionStore() = default;
  // Appends atomically: after a crash the log holds the event completely or not at all.
  virtual void append(const std::string& session_id, const SessionEvent& event) = 0;
  virtual std::vector<SessionEvent> load(const std::string& session_id) = 0;
  virtual bool exists(const std::string& session_id) = 0;
  virtual std::vector<std::string> list() = 0;
  // Returns the sha256 reference; idempotent.
  virtual std::string put_blob(const std::string& session_id, std::span<const std::uint8_t> png) = 0;
  virtual std::vector<std::uint8_t> get_blob(const std::string& session_id, const std::string& ref) = 0;
};

class MemoryStore final : public SessionStore {
 public:
  void append(const std::string& session_id, const SessionEvent& event) override;
  std::vector<SessionEvent> load(const std::string& session_id) override;
  bool exists(const std::string& session_id) override;
  std::vector<std::string> list() override;
  std::string put_blob(const std::string& session_id, std::span<const std::uint8_t> png) override;
  std::vector<std::uint8_t> get_blob(const std::string& session_id, const std::string& ref) override;

 private:
  std::mutex mutex_;
  std::map<std::string, std::vector<std::string>> logs_;  // serialized lines
  std::map<std::string, std::map<std::string, std::vector<std::uint8_t>>> blobs_;
};

// Layout: {root}/sessions/{id}/events.jsonl and {root}/sessions/{id}/blobs/{sha256}.png.
// A torn final line (no trailing newline) is ignored on load and trimmed
// before the next append.
class FileStore final : public SessionStore {
 public:
  explicit FileStore(std::filesystem::path root);

  void append(const std::string& session_id, const SessionEvent& event) override;
  std::vector<SessionEvent> load(const std::string& session_id) override;
  bool exists(const std::string& session_id) override;
  std::vector<std::string> list() override;
  std::string put_blob(const std::string& session_id, std::span<const std::uint8_t> png) override;
  std::vector<std::uint8_t> get_blob(const std::string& session_id, const std::string& ref) override;

  std::filesystem::path log_path(const std::string& session_id) const;

 private:
  std::filesystem::path session_dir(const std::string& session_id) const;
  std::filesystem::path root_;
  std::mutex mutex_;
};

using BackendFactory = std::function<std::shared_ptr<GenerationBackend>(const BackendBinding&)>;
// Procedural for "procedural", a shared RemoteBackend per endpoint for "remote".
BackendFactory default_backend_factory();

inline constexpr int kMaxAlternatives = kMaxSamplesPerRequest;

// Session operations. Mutations on one session are serialized; distinct
// sessions run in parallel. A rejected operation leaves the session and its
// log untouched.
class WorkflowService {
 public:
  explicit WorkflowService(std::shared_ptr<SessionStore> store, BackendFactory factory = default_backend_factory());
  ~WorkflowService();

  std::string create_session(const std::string& city, const CanonicalImage& site, BackendBinding backend = {});
  DesignSession get(const std::string& id);
  DesignSession set_targets(const std::string& id, SessionStage stage, const DesignMetrics& targets);
  std::vector<Alternative> request_alternatives(const std::string& id, int n, std::uint64_t seed);
  DesignSession select_alternative(const std::string& id, std::size_t index);
  DesignSession upload_revision(const std::string& id, const CanonicalImage& image);
  DesignSession advance(const std::string& id);

  std::vector<std::uint8_t> image_bytes(const std::string& id, const std::string& ref);
  CanonicalImage image(const std::string& id, const std::string& ref, ImageKind kind);
  std::vector<SessionEvent> events(const std::string& id);
  std::vector<std::string> list();

 private:
  struct Entry;
  std::shared_ptr<Entry> entry(const std::string& id);
  SessionEvent commit(Entry& e, EventKind kind, nlohmann::json payload);

  std::shared_ptr<SessionStore> store_;
  BackendFactory factory_;
  std::mutex map_mutex_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
};

}  // namespace urbanstep
