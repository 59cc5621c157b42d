#include "asktmk/service.hpp"

#include <fstream>
#include <sstream>

#include <httplib.h>

#include "asktmk/error.hpp"
#include "asktmk/net.hpp"
#include "asktmk/trace.hpp"

namespace asktmk::service {

using nlohmann::json;

std::shared_ptr<pipeline::Engine> make_engine(const config::EngineConfig& cfg) {
  cfg.check();
  auto model = tmk::load_model_file(cfg.model_path);
  std::shared_ptr<const retrieval::Embedder> embedder;
  if (cfg.embedder == config::EmbedderKind::remote) {
    embedder = retrieval::make_remote_embedder({*cfg.embedding_endpoint, cfg.embedding_model.value_or(""),
                                                cfg.provider.auth, cfg.embedding_dimension,
                                                cfg.provider.timeout_seconds});
  } else {
    embedder = std::make_shared<retrieval::HashingEmbedder>(cfg.embedding_dimension);
  }
  pipeline::EngineOptions options;
  options.k = cfg.k;
  options.session_bound = cfg.session_bound;
  options.generation = {cfg.max_tokens, cfg.temperature, cfg.provider.prompt_token_limit};
  std::shared_ptr<genai::CompletionProvider> provider = genai::make_provider(cfg.provider);
  return std::make_shared<pipeline::Engine>(std::move(model), options, std::move(provider), std::move(embedder));
}

int http_status_for(Errc code) noexcept {
  switch (code) {
    case Errc::EmptyQuestion:
    case Errc::InvalidArgument:
    case Errc::MalformedInput:
    case Errc::UnknownTask:
    case Errc::UnknownMethod:
    case Errc::UnresolvedChoice:
    case Errc::MalformedBank:
    case Errc::UnknownCategory:
    case Errc::MalformedRatings:
    case Errc::UnratedRecord:
    case Errc::Io:
      return 400;
    case Errc::StepBoundExceeded:
    case Errc::BudgetExceeded:
      return 422;
    case Errc::ProviderUnavailable:
    case Errc::ProviderError:
      return 502;
    default:
      return 500;
  }
}

struct Service::Http {
  httplib::Server server;
  bool bound = false;
};

Service::Service(std::shared_ptr<pipeline::Engine> engine, std::ostream& log)
    : engine_(std::move(engine)), log_(log), http_(std::make_unique<Http>()) {
  if (!engine_) throw Error(Errc::InvalidConfig, "service needs an engine");
  // No SO_REUSEPORT, so a second listener on a busy port fails.
  http_->server.set_socket_options([](socket_t sock) {
    int yes = 1;
    ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
  });
  auto dispatch = [this](const httplib::Request& req, httplib::Response& res) {
    std::string rid = req.get_header_value("X-Request-Id");
    if (rid.empty()) rid = next_request_id();
    Reply reply = handle(req.method, req.path, req.body, rid);
    res.status = reply.status;
    res.set_header("X-Request-Id", rid);
    res.set_content(reply.body.dump(), "application/json");
  };
  for (const char* path : {"/healthz", "/model", "/eval/report"}) http_->server.Get(path, dispatch);
  for (const char* path : {"/ask", "/trace", "/eval/run"}) http_->server.Post(path, dispatch);
}

Service::~Service() { stop(); }

std::string Service::next_request_id() {
  std::lock_guard lock(id_mutex_);
  return "req-" + std::to_string(++next_request_);
}

int Service::bind(const std::string& host, int port) {
  int bound = port == 0 ? http_->server.bind_to_any_port(host) : (http_->server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error(Errc::PortInUse, "cannot bind " + host + ":" + std::to_string(port));
  http_->bound = true;
  return bound;
}

void Service::run() {
  if (!http_->bound) throw Error(Errc::InvalidConfig, "Service::run before bind");
  http_->server.listen_after_bind();
}

void Service::stop() {
  if (http_ && http_->server.is_running()) http_->server.stop();
}

void Service::wait_until_ready() const { http_->server.wait_until_ready(); }

Service::Reply Service::handle(const std::string& method, const std::string& path, const std::string& body,
                               const std::string& request_id) {
  Reply reply;
  try {
    json req = json::object();
    if (method == "POST") {
      if (!body.empty()) {
        try {
          req = json::parse(body);
        } catch (const json::parse_error& e) {
          throw Error(Errc::MalformedInput, std::string("request body is not JSON: ") + e.what());
        }
      }
      if (!req.is_object()) throw Error(Errc::MalformedInput, "request body must be a JSON object");
    }
    if (method == "GET" && path == "/healthz") {
      reply.body = {{"status", "ok"}, {"agent_name", engine_->model().agent_name}};
    } else if (method == "GET" && path == "/model") {
      reply = model_summary();
    } else if (method == "POST" && path == "/ask") {
      reply = ask(req);
    } else if (method == "POST" && path == "/trace") {
      reply = trace(req);
    } else if (method == "POST" && path == "/eval/run") {
      reply = eval_run(req);
    } else if (method == "GET" && path == "/eval/report") {
      reply = eval_report();
    } else {
      reply = {404, {{"error", {{"code", "NotFound"}, {"message", method + " " + path}}}}};
    }
  } catch (const Error& e) {
    reply = {http_status_for(e.code()), {{"error", e.to_json()}}};
  } catch (const std::exception& e) {
    reply = {500, {{"error", {{"code", "Internal"}, {"message", e.what()}}}}};
  }
  reply.body["request_id"] = request_id;
  {
    std::lock_guard lock(log_mutex_);
    log_ << "[" << request_id << "] " << method << " " << path << " -> " << reply.status;
    if (reply.body.contains("error")) {
      const auto& err = reply.body["error"];
      log_ << " " << err.value("code", "");
      if (err.contains("stage")) log_ << " stage=" << err["stage"].get<std::string>();
    }
    log_ << "\n";
    log_.flush();
  }
  return reply;
}

Service::Reply Service::model_summary() const {
  const auto& m = engine_->model();
  json out = {{"agent_name", m.agent_name},
              {"version", m.version},
              {"counts", {{"task", m.tasks.size()}, {"method", m.methods.size()}, {"knowledge", m.knowledge.size()}}}};
  if (const auto* top = m.top_level_task()) out["top_level_task"] = {{"id", top->id}, {"name", top->name}};
  return {200, out};
}

namespace {

template <typename T>
std::optional<T> optional_field(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(Errc::MalformedInput, std::string("field \"") + key + "\" has the wrong type");
  }
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

Service::Reply Service::ask(const json& req) {
  auto question = optional_field<std::string>(req, "question").value_or("");
  auto session_id = optional_field<std::string>(req, "session_id");
  auto k = optional_field<std::size_t>(req, "k");
  auto result = engine_->ask(question, session_id, k);
  return {200, pipeline::to_json(result)};
}

Service::Reply Service::trace(const json& req) {
  auto task_id = optional_field<std::string>(req, "task_id");
  if (!task_id) throw Error(Errc::MalformedInput, "task_id is required");
  trace::TraceOptions options;
  using StrMap = std::map<std::string, std::string>;
  options.bindings = optional_field<StrMap>(req, "bindings").value_or(StrMap{});
  if (req.contains("selectors") && req["selectors"].is_object()) {
    options.method_selector = optional_field<StrMap>(req["selectors"], "methods").value_or(StrMap{});
    options.path_selector = optional_field<StrMap>(req["selectors"], "paths").value_or(StrMap{});
  }
  options.step_bound = optional_field<std::size_t>(req, "step_bound").value_or(trace::kDefaultStepBound);
  const auto& model = engine_->model();
  auto t = trace::derive_trace(model, *task_id, options);
  json out = {{"trace", trace::to_json(t)}, {"outline", trace::to_outline(t, model)}};
  if (auto q = optional_field<std::string>(req, "question")) {
    out["explanation"] = trace::explain_trace(t, model, *q, engine_->provider(),
                                              {"", engine_->options().generation.max_tokens,
                                               engine_->options().generation.temperature});
  }
  return {200, out};
}

Service::Reply Service::eval_run(const json& req) {
  std::vector<eval::BankQuestion> bank;
  if (auto inline_bank = optional_field<std::string>(req, "bank")) {
    bank = eval::parse_bank(*inline_bank);
  } else if (auto path = optional_field<std::string>(req, "bank_path")) {
    bank = eval::load_bank(*path);
  } else {
    throw Error(Errc::MalformedBank, "eval/run needs bank or bank_path");
  }
  eval::RunOptions options;
  options.threads = optional_field<std::size_t>(req, "threads").value_or(1);
  options.k = optional_field<std::size_t>(req, "k");
  const auto before = net::outbound_request_count();
  auto records = eval::run_bank(bank, *engine_, options);

  std::optional<std::string> ratings_text = optional_field<std::string>(req, "ratings");
  if (!ratings_text) {
    if (auto path = optional_field<std::string>(req, "ratings_path")) ratings_text = slurp(*path);
  }
  std::size_t failures = 0;
  for (const auto& r : records) failures += r.error ? 1 : 0;
  json out = {{"records", records.size()},
              {"failures", failures},
              {"outbound_requests", net::outbound_request_count() - before}};
  json errors = json::array();
  for (const auto& r : records) {
    if (r.error) errors.push_back({{"id", r.question.id}, {"error", *r.error}});
  }
  out["errors"] = std::move(errors);
  if (ratings_text) {
    eval::apply_ratings(records, eval::parse_ratings(*ratings_text));
    auto report = eval::aggregate(records);
    out["report"] = report.to_json();
    out["report_text"] = report.to_text();
    std::lock_guard lock(eval_mutex_);
    last_report_ = std::move(report);
  }
  {
    std::lock_guard lock(eval_mutex_);
    last_run_ = out;
  }
  return {200, out};
}

Service::Reply Service::eval_report() const {
  std::lock_guard lock(eval_mutex_);
  if (!last_report_) {
    return {404, {{"error", {{"code", "NotFound"}, {"message", "no rated evaluation run yet"}}}}};
  }
  return {200, {{"report", last_report_->to_json()}, {"report_text", last_report_->to_text()}}};
}

}  // namespace asktmk::service
