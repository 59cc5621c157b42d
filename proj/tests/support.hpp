#pragma once

// Shared fixtures for the unit and acceptance suites.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "asktmk/error.hpp"
#include "asktmk/genai.hpp"
#include "asktmk/tmk.hpp"

namespace asktmk::testing {

inline std::string source_path(const std::string& rel) { return std::string(ASKTMK_SOURCE_DIR) + "/" + rel; }

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline std::string fixture_path() { return source_path("fixtures/vera.tmk.json"); }
inline nlohmann::json fixture_json() { return nlohmann::json::parse(read_text(fixture_path())); }
inline tmk::TmkModel fixture_model() { return tmk::load_model_file(fixture_path()); }

inline nlohmann::json& find_by_id(nlohmann::json& arr, const std::string& id) {
  for (auto& e : arr) {
    if (e.at("id") == id) return e;
  }
  throw std::runtime_error("no element " + id);
}

inline nlohmann::json& find_transition(nlohmann::json& method, const std::string& from, const std::string& label) {
  for (auto& t : method.at("transitions")) {
    if (t.at("from_state") == from && t.at("condition_label") == label) return t;
  }
  throw std::runtime_error("no transition " + from + " " + label);
}

struct Mutation {
  std::string name;
  std::string expected_code;
  std::function<void(nlohmann::json&)> apply;
};

/// The six documented single-field fixture mutations.
inline std::vector<Mutation> fixture_mutations() {
  return {
      {"dangling state", "DANGLING_STATE",
       [](nlohmann::json& m) {
         auto& method = find_by_id(m["methods"], "m_simulation_workflow");
         find_transition(method, "s_review", "parameters changed")["to_state"] = "sX";
       }},
      {"cyclic hierarchy", "CYCLIC_HIERARCHY",
       [](nlohmann::json& m) {
         find_by_id(m["tasks"], "t_run_simulation")["subtasks"] = {"t_finish_simulation"};
       }},
      {"duplicate id", "DUPLICATE_ID",
       [](nlohmann::json& m) { find_by_id(m["knowledge"], "k_user")["id"] = "k_vera"; }},
      {"nondeterministic fsm", "NONDETERMINISTIC_FSM",
       [](nlohmann::json& m) {
         auto& method = find_by_id(m["methods"], "m_simulation_workflow");
         find_transition(method, "s_review", "model needs editing")["condition_label"] = "results accepted";
       }},
      {"unreachable state", "UNREACHABLE_STATE",
       [](nlohmann::json& m) {
         auto& method = find_by_id(m["methods"], "m_simulation_workflow");
         find_transition(method, "s_review", "results accepted")["to_state"] = "s_back_to_model";
       }},
      {"missing concept ref", "MISSING_CONCEPT_REF",
       [](nlohmann::json& m) { find_by_id(m["tasks"], "t_finish_experiment")["givens"][0] = "k_missing"; }},
  };
}

/// Codes produced by parsing then validating `j`: the reason (or code) of a
/// parse error, else the distinct codes of the report.
inline std::vector<std::string> codes_for(const nlohmann::json& j) {
  try {
    auto model = tmk::parse_model(j.dump());
    auto codes = tmk::validate(model).codes();
    codes.erase(std::unique(codes.begin(), codes.end()), codes.end());
    return codes;
  } catch (const Error& e) {
    return {e.reason().empty() ? std::string(e.code_name()) : e.reason()};
  }
}

/// Counts complete() calls and answers like the mock.
class CountingProvider : public genai::CompletionProvider {
 public:
  genai::ProviderMode mode() const noexcept override { return genai::ProviderMode::mock; }
  std::string complete(const genai::CompletionRequest& request) override {
    ++calls;
    prompts.push_back(request.prompt);
    return inner_.complete(request);
  }
  std::size_t calls = 0;
  std::vector<std::string> prompts;

 private:
  genai::MockProvider inner_;
};

/// Synthetic corpus for retrieval properties.
inline std::vector<tmk::Document> random_corpus(std::mt19937_64& rng, std::size_t n) {
  static const std::vector<std::string> vocab = {
      "simulation", "model", "ecology", "organism", "predator", "prey", "run", "create", "edit", "output",
      "graph",      "user",  "agent",   "task",     "method",   "state", "step", "vera", "learner", "population",
      "habitat",    "food",  "energy",  "grass",    "rabbit",   "fox",   "parameter", "experiment", "result", "trend"};
  std::uniform_int_distribution<std::size_t> word(0, vocab.size() - 1);
  std::uniform_int_distribution<int> len(1, 12);
  std::uniform_int_distribution<int> kind(0, 2);
  std::vector<tmk::Document> docs;
  for (std::size_t i = 0; i < n; ++i) {
    std::string body;
    for (int w = len(rng); w > 0; --w) body += vocab[word(rng)] + " ";
    char id[32];
    std::snprintf(id, sizeof id, "e%04zu", i);
    docs.push_back({id, static_cast<tmk::Kind>(kind(rng)), vocab[word(rng)], body});
  }
  return docs;
}

}  // namespace asktmk::testing
