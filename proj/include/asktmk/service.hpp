#pragma once

// HTTP front door over a shared Engine.
//
//   GET  /healthz     {status, agent_name}
//   GET  /model       {agent_name, version, counts{task,method,knowledge}, top_level_task{id,name}}
//   POST /ask         {question, session_id?, k?} -> ExplanationResult JSON
//   POST /trace       {task_id, bindings?, selectors?{methods, paths}, step_bound?, question?}
//   POST /eval/run    {bank_path? | bank?, ratings_path? | ratings?, threads?, k?}
//   GET  /eval/report last aggregate report
//
// Every response carries request_id (body and X-Request-Id header); error
// bodies are {error{code, reason?, stage?, message, details?}, request_id}.

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>

#include <nlohmann/json.hpp>

#include "asktmk/config.hpp"
#include "asktmk/error.hpp"
#include "asktmk/evalharness.hpp"
#include "asktmk/pipeline.hpp"

namespace asktmk::service {

/// Loads and validates the model, then builds provider, embedder and
/// indexes. Throws the parse error, or Error{InvalidModel} with the
/// validation report in details.
std::shared_ptr<pipeline::Engine> make_engine(const config::EngineConfig& cfg);

/// HTTP status used for an error code.
int http_status_for(Errc code) noexcept;

class Service {
 public:
  Service(std::shared_ptr<pipeline::Engine> engine, std::ostream& log);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds without serving; port 0 picks a free port. Returns the bound
  /// port. Throws Error{PortInUse}.
  int bind(const std::string& host, int port);
  /// Serves until stop(); requires bind().
  void run();
  void stop();
  void wait_until_ready() const;

  /// Handlers without the socket layer, used by run() and by tests.
  struct Reply {
    int status = 200;
    nlohmann::json body;
  };
  Reply handle(const std::string& method, const std::string& path, const std::string& body,
               const std::string& request_id);

 private:
  Reply ask(const nlohmann::json& req);
  Reply trace(const nlohmann::json& req);
  Reply eval_run(const nlohmann::json& req);
  Reply eval_report() const;
  Reply model_summary() const;

  std::shared_ptr<pipeline::Engine> engine_;
  std::ostream& log_;
  std::mutex log_mutex_;
  mutable std::mutex eval_mutex_;
  std::optional<eval::AggregateReport> last_report_;
  nlohmann::json last_run_;
  struct Http;
  std::unique_ptr<Http> http_;
  std::uint64_t next_request_ = 0;
  std::mutex id_mutex_;

  friend struct Http;
  std::string next_request_id();
};

}  // namespace asktmk::service
