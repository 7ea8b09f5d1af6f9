#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <thread>

#include "urbanstep/error.hpp"
#include "urbanstep/genbackend.hpp"
#include "urbanstep/workflow.hpp"

namespace httplib {
class Server;
}

namespace urbanstep {

int http_status(ErrorCategory category);

struct ServerOptions {
  // Answers /v1/generate and /healthz; procedural when unset.
  std::shared_ptr<GenerationBackend> generator;
  std::size_t max_body_bytes = 64u << 20;
  bool allow_cors = true;
};

// HTTP front end: the workflow session API, prompt preview, the palette,
// and the generation wire protocol.
class StudioServer {
 public:
  explicit StudioServer(WorkflowService& service, ServerOptions options = {});
  ~StudioServer();

  // Port 0 binds any free port. Returns the bound port.
  int bind(const std::string& host, int port);
  // Blocks until stop().
  void listen();
  // bind + listen on a background thread.
  int start(const std::string& host, int port);
  void stop();

 private:
  void routes();

  WorkflowService& service_;
  ServerOptions options_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

}  // namespace urbanstep
