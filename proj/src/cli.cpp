#include "asktmk/cli.hpp"

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "asktmk/config.hpp"
#include "asktmk/error.hpp"
#include "asktmk/evalharness.hpp"
#include "asktmk/net.hpp"
#include "asktmk/retrieval.hpp"
#include "asktmk/service.hpp"
#include "asktmk/text.hpp"
#include "asktmk/tmk.hpp"
#include "asktmk/trace.hpp"

namespace asktmk::cli {

using nlohmann::json;

namespace {

struct Common {
  std::string config_path;
  std::string model;
  bool mock = false;
  bool remote = false;
  std::string endpoint;
  std::size_t k = 0;
  bool as_json = false;
};

config::EngineConfig resolve_config(const Common& c, const std::map<std::string, std::string>& env) {
  config::ConfigLayer file;
  if (!c.config_path.empty()) file = config::layer_from_file(c.config_path);
  config::ConfigLayer flags;
  if (!c.model.empty()) flags.model_path = c.model;
  if (c.mock && c.remote) throw Error(Errc::InvalidConfig, "--mock and --remote are exclusive");
  if (c.mock) flags.provider_mode = genai::ProviderMode::mock;
  if (c.remote) flags.provider_mode = genai::ProviderMode::remote;
  if (!c.endpoint.empty()) flags.endpoint = c.endpoint;
  if (c.k > 0) flags.k = c.k;
  return config::resolve(file, config::layer_from_env(env), flags);
}

void write_file(const std::string& path, const std::string& data) {
  std::error_code ec;
  auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent, ec);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::Io, "cannot write " + path);
  f << data;
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::Io, "cannot open " + path);
  std::ostringstream buf;
  buf << f.rdbuf();
  return buf.str();
}

void print_result(std::ostream& out, const pipeline::ExplanationResult& r) {
  out << "class: " << pipeline::to_string(r.cls) << "\n";
  out << "hits:\n";
  if (r.hits.empty()) out << "  (none)\n";
  for (std::size_t i = 0; i < r.hits.size(); ++i) {
    const auto& h = r.hits[i];
    char line[64];
    std::snprintf(line, sizeof line, "  %zu. %8s  %-9s ", i + 1, text::percent(h.score).c_str(),
                  std::string(tmk::to_string(h.kind)).c_str());
    out << line << h.title << " (" << h.element_id << ")\n";
  }
  out << "steps:\n";
  if (r.steps.empty()) out << "  (none)\n";
  for (std::size_t i = 0; i < r.steps.size(); ++i) out << "  [" << i + 1 << "] " << r.steps[i] << "\n";
  out << "answer:\n" << r.answer << "\n";
}

std::map<std::string, std::string> parse_pairs(const std::vector<std::string>& items, const char* flag) {
  std::map<std::string, std::string> out;
  for (const auto& item : items) {
    auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw Error(Errc::InvalidArgument, std::string(flag) + " expects KEY=VALUE, got \"" + item + "\"");
    }
    out[item.substr(0, eq)] = item.substr(eq + 1);
  }
  return out;
}

std::string error_line(const Error& e) {
  std::string line = "error: " + std::string(e.code_name());
  if (!e.reason().empty()) line += " [" + e.reason() + "]";
  if (!e.stage().empty()) line += " (stage " + e.stage() + ")";
  return line + ": " + text::single_line(e.what());
}

service::Service* g_service = nullptr;

extern "C" void on_signal(int) {
  if (g_service) g_service->stop();
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
        const std::map<std::string, std::string>& env) {
  CLI::App app{"Explain an agent from its TMK self-model", "asktmk"};
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  app.add_option("--config", common.config_path, "JSON config file");
  app.add_option("--model", common.model, "TMK model JSON");
  app.add_flag("--mock", common.mock, "deterministic offline provider");
  app.add_flag("--remote", common.remote, "HTTP completion provider");
  app.add_option("--endpoint", common.endpoint, "completion endpoint URL");
  app.add_option("--k", common.k, "retrieval depth")->check(CLI::PositiveNumber);
  app.add_flag("--json", common.as_json, "print JSON");

  std::string validate_path;
  auto* validate = app.add_subcommand("validate", "check a TMK model");
  validate->add_option("model", validate_path, "model file");

  std::string index_kinds = "task,method,knowledge";
  std::string index_out;
  auto* index = app.add_subcommand("index", "build and dump the retrieval index");
  index->add_option("--kinds", index_kinds, "comma-separated kinds");
  index->add_option("--out", index_out, "write the dump here");

  std::string question;
  std::string session_id;
  auto* ask = app.add_subcommand("ask", "answer a question about the agent");
  ask->add_option("question", question)->required();
  ask->add_option("--session", session_id, "session id");

  std::string task_id;
  std::vector<std::string> binds, method_sel, path_sel;
  std::size_t step_bound = trace::kDefaultStepBound;
  std::string trace_question;
  auto* tr = app.add_subcommand("trace", "derive a knowledge trace for a task");
  tr->add_option("task", task_id)->required();
  tr->add_option("--bind", binds, "CONCEPT=VALUE");
  tr->add_option("--method", method_sel, "TASK=METHOD");
  tr->add_option("--path", path_sel, "STATE=LABEL");
  tr->add_option("--step-bound", step_bound);
  tr->add_option("--question", trace_question, "explain the trace");

  auto* ev = app.add_subcommand("eval", "question-bank evaluation");
  ev->require_subcommand(1);
  std::string bank_path, ratings_path, report_out, records_path;
  std::size_t threads = 1;
  auto* ev_run = ev->add_subcommand("run", "run the bank and optionally aggregate ratings");
  ev_run->add_option("--bank", bank_path)->required();
  ev_run->add_option("--ratings", ratings_path);
  ev_run->add_option("--report", report_out, "output prefix: PREFIX.json, PREFIX.txt, PREFIX.records.jsonl");
  ev_run->add_option("--threads", threads)->check(CLI::PositiveNumber);
  auto* ev_report = ev->add_subcommand("report", "aggregate saved records with ratings");
  ev_report->add_option("--records", records_path)->required();
  ev_report->add_option("--ratings", ratings_path);

  std::string host = "127.0.0.1";
  int port = -1;
  auto* serve = app.add_subcommand("serve", "run the HTTP service");
  serve->add_option("--host", host);
  serve->add_option("--port", port);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    try {
      app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
      out << app.help();
      return 0;
    } catch (const CLI::ParseError& e) {
      throw Error(Errc::InvalidArgument, e.what());
    }

    if (validate->parsed()) {
      std::string path = validate_path.empty() ? common.model : validate_path;
      if (path.empty()) path = resolve_config(common, env).model_path;
      auto model = tmk::load_model_file(path);
      auto report = tmk::validate(model);
      if (common.as_json) {
        out << report.to_json().dump(2) << "\n";
      } else {
        out << report.to_text();
      }
      if (!report.ok()) {
        err << "error: InvalidModel: " << report.errors.size() << " validation error(s)\n";
        return 1;
      }
      return 0;
    }

    auto cfg = resolve_config(common, env);

    if (index->parsed()) {
      auto model = tmk::load_model_file(cfg.model_path);
      tmk::KindSet kinds;
      std::stringstream ks(index_kinds);
      for (std::string part; std::getline(ks, part, ',');) {
        auto kind = tmk::parse_kind(text::trim(part));
        if (!kind) throw Error(Errc::InvalidArgument, "unknown kind \"" + part + "\"");
        kinds.insert(*kind);
      }
      auto docs = tmk::render_documents(model, kinds);
      retrieval::HashingEmbedder embedder(cfg.embedding_dimension);
      auto dump = retrieval::dump_index(retrieval::build_index(docs, embedder));
      if (index_out.empty()) {
        out << dump;
      } else {
        write_file(index_out, dump);
        out << "indexed " << docs.size() << " documents -> " << index_out << "\n";
      }
      return 0;
    }

    auto engine = service::make_engine(cfg);

    if (ask->parsed()) {
      std::optional<std::string> sid;
      if (!session_id.empty()) sid = session_id;
      auto result = engine->ask(question, sid, std::nullopt);
      if (common.as_json) {
        out << pipeline::to_json(result).dump(2) << "\n";
      } else {
        print_result(out, result);
      }
      return 0;
    }

    if (tr->parsed()) {
      trace::TraceOptions options;
      options.bindings = parse_pairs(binds, "--bind");
      options.method_selector = parse_pairs(method_sel, "--method");
      options.path_selector = parse_pairs(path_sel, "--path");
      options.step_bound = step_bound;
      auto t = trace::derive_trace(engine->model(), task_id, options);
      std::optional<std::string> explanation;
      if (!trace_question.empty()) {
        explanation = trace::explain_trace(t, engine->model(), trace_question, engine->provider(),
                                           {"", cfg.max_tokens, cfg.temperature});
      }
      if (common.as_json) {
        json j = {{"trace", trace::to_json(t)}};
        if (explanation) j["explanation"] = *explanation;
        out << j.dump(2) << "\n";
      } else {
        out << trace::to_outline(t, engine->model());
        if (explanation) out << "explanation:\n" << *explanation << "\n";
      }
      return 0;
    }

    if (ev_run->parsed()) {
      auto bank = eval::load_bank(bank_path);
      const auto before = net::outbound_request_count();
      auto records = eval::run_bank(bank, *engine, {threads, std::nullopt});
      const auto outbound = net::outbound_request_count() - before;
      std::size_t failures = 0;
      for (const auto& r : records) {
        if (r.error) {
          ++failures;
          err << "warning: " << r.question.id << ": " << r.error->value("code", "") << ": "
              << r.error->value("message", "") << "\n";
        }
      }
      if (!report_out.empty()) write_file(report_out + ".records.jsonl", eval::records_to_jsonl(records));
      out << "questions: " << records.size() << "\nfailures: " << failures << "\n";
      if (!ratings_path.empty()) {
        eval::apply_ratings(records, eval::load_ratings(ratings_path));
        auto report = eval::aggregate(records);
        if (!report_out.empty()) {
          write_file(report_out + ".json", report.to_json().dump(2) + "\n");
          write_file(report_out + ".txt", report.to_text());
        }
        out << (common.as_json ? report.to_json().dump(2) + "\n" : report.to_text());
      }
      out << "outbound_requests: " << outbound << "\n";
      return 0;
    }

    if (ev_report->parsed()) {
      auto records = eval::records_from_jsonl(read_file(records_path));
      if (!ratings_path.empty()) eval::apply_ratings(records, eval::load_ratings(ratings_path));
      auto report = eval::aggregate(records);
      out << (common.as_json ? report.to_json().dump(2) + "\n" : report.to_text());
      return 0;
    }

    if (serve->parsed()) {
      service::Service svc(engine, std::cerr);
      int bound = svc.bind(host, port >= 0 ? port : cfg.port);
      out << "listening on http://" << host << ":" << bound << "\n";
      out.flush();
      g_service = &svc;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      svc.run();
      g_service = nullptr;
      return 0;
    }
    throw Error(Errc::InvalidArgument, "no subcommand");
  } catch (const Error& e) {
    if (e.code() == Errc::InvalidModel && e.details().contains("errors")) {
      for (const auto& v : e.details()["errors"]) {
        err << v.value("code", "") << " " << v.value("path", "") << ": " << v.value("message", "") << "\n";
      }
    }
    err << error_line(e) << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: Internal: " << text::single_line(e.what()) << "\n";
    return 3;
  }
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr, config::process_env());
}

}  // namespace asktmk::cli
