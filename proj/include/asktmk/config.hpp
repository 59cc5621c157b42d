#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "asktmk/genai.hpp"
#include "asktmk/pipeline.hpp"
#include "asktmk/retrieval.hpp"

namespace asktmk::config {

inline constexpr int kDefaultPort = 8080;

enum class EmbedderKind { hashing, remote };

struct EngineConfig {
  std::string model_path = "fixtures/vera.tmk.json";
  std::size_t k = pipeline::kDefaultK;
  int max_tokens = genai::kDefaultMaxTokens;
  double temperature = genai::kDefaultTemperature;
  genai::ProviderConfig provider;
  EmbedderKind embedder = EmbedderKind::hashing;
  std::optional<std::string> embedding_endpoint;
  std::optional<std::string> embedding_model;
  std::size_t embedding_dimension = retrieval::kDefaultDimension;
  std::size_t session_bound = pipeline::kDefaultSessionBound;
  int port = kDefaultPort;

  /// Throws Error{InvalidConfig}.
  void check() const;
  nlohmann::json to_json() const;
};

/// Partial settings from one source; unset fields defer to lower layers.
struct ConfigLayer {
  std::optional<std::string> model_path;
  std::optional<std::size_t> k;
  std::optional<int> max_tokens;
  std::optional<double> temperature;
  std::optional<genai::ProviderMode> provider_mode;
  std::optional<std::string> endpoint;
  std::optional<std::string> model_name;
  std::optional<std::string> auth;
  std::optional<std::size_t> prompt_token_limit;
  std::optional<EmbedderKind> embedder;
  std::optional<std::string> embedding_endpoint;
  std::optional<std::string> embedding_model;
  std::optional<std::size_t> session_bound;
  std::optional<int> port;
};

/// Keys as in EngineConfig plus provider_mode/endpoint/model_name/auth.
/// Throws Error{InvalidConfig}.
ConfigLayer layer_from_json(const nlohmann::json& j);
ConfigLayer layer_from_file(const std::string& path);

/// ASKTMK_PROVIDER_MODE, ASKTMK_ENDPOINT, ASKTMK_API_KEY, ASKTMK_K,
/// ASKTMK_PORT. A set ASKTMK_API_KEY makes auth "env:ASKTMK_API_KEY".
ConfigLayer layer_from_env(const std::map<std::string, std::string>& env);
std::map<std::string, std::string> process_env();

/// defaults < file < env < cli. Throws Error{InvalidConfig}.
EngineConfig resolve(const ConfigLayer& file, const ConfigLayer& env, const ConfigLayer& cli);

}  // namespace asktmk::config
