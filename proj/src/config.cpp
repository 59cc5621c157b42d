#include "asktmk/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>

#include "asktmk/error.hpp"

extern char** environ;

namespace asktmk::config {

using nlohmann::json;

void EngineConfig::check() const {
  if (k < 1) throw Error(Errc::InvalidConfig, "k must be at least 1");
  if (max_tokens < 1) throw Error(Errc::InvalidConfig, "max_tokens must be positive");
  if (temperature < 0) throw Error(Errc::InvalidConfig, "temperature must be non-negative");
  if (session_bound < 1) throw Error(Errc::InvalidConfig, "session_bound must be positive");
  if (port < 0 || port > 65535) throw Error(Errc::InvalidConfig, "port out of range");
  if (embedder == EmbedderKind::remote && !embedding_endpoint) {
    throw Error(Errc::InvalidConfig, "remote embedder requires embedding_endpoint");
  }
  if (embedding_dimension < 1) throw Error(Errc::InvalidConfig, "embedding_dimension must be positive");
  provider.check();
}

json EngineConfig::to_json() const {
  json p = {{"mode", std::string(genai::to_string(provider.mode))},
            {"prompt_token_limit", provider.prompt_token_limit}};
  if (provider.endpoint) p["endpoint"] = *provider.endpoint;
  if (provider.model_name) p["model_name"] = *provider.model_name;
  if (provider.auth) p["auth"] = *provider.auth;
  return {{"model_path", model_path},
          {"k", k},
          {"max_tokens", max_tokens},
          {"temperature", temperature},
          {"provider", std::move(p)},
          {"embedder", embedder == EmbedderKind::hashing ? "hashing" : "remote"},
          {"session_bound", session_bound},
          {"port", port}};
}

namespace {

template <typename T>
T parse_number(const std::string& key, const std::string& s) {
  T value{};
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (ec != std::errc() || ptr != end) throw Error(Errc::InvalidConfig, key + ": not a number: \"" + s + "\"");
  return value;
}

genai::ProviderMode parse_mode(const std::string& s) {
  auto m = genai::parse_provider_mode(s);
  if (!m) throw Error(Errc::InvalidConfig, "provider mode must be mock or remote, got \"" + s + "\"");
  return *m;
}

EmbedderKind parse_embedder(const std::string& s) {
  if (s == "hashing") return EmbedderKind::hashing;
  if (s == "remote") return EmbedderKind::remote;
  throw Error(Errc::InvalidConfig, "embedder must be hashing or remote, got \"" + s + "\"");
}

template <typename T>
void overlay(T& target, const std::optional<T>& value) {
  if (value) target = *value;
}

}  // namespace

ConfigLayer layer_from_json(const json& j) {
  if (!j.is_object()) throw Error(Errc::InvalidConfig, "config file must hold a JSON object");
  ConfigLayer l;
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const auto& key = it.key();
      const auto& v = it.value();
      if (key == "model_path") l.model_path = v.get<std::string>();
      else if (key == "k") l.k = v.get<std::size_t>();
      else if (key == "max_tokens") l.max_tokens = v.get<int>();
      else if (key == "temperature") l.temperature = v.get<double>();
      else if (key == "provider_mode") l.provider_mode = parse_mode(v.get<std::string>());
      else if (key == "endpoint") l.endpoint = v.get<std::string>();
      else if (key == "model_name") l.model_name = v.get<std::string>();
      else if (key == "auth") l.auth = v.get<std::string>();
      else if (key == "prompt_token_limit") l.prompt_token_limit = v.get<std::size_t>();
      else if (key == "embedder") l.embedder = parse_embedder(v.get<std::string>());
      else if (key == "embedding_endpoint") l.embedding_endpoint = v.get<std::string>();
      else if (key == "embedding_model") l.embedding_model = v.get<std::string>();
      else if (key == "session_bound") l.session_bound = v.get<std::size_t>();
      else if (key == "port") l.port = v.get<int>();
      else throw Error(Errc::InvalidConfig, "unknown config key \"" + key + "\"");
    }
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidConfig, std::string("config: ") + e.what());
  }
  return l;
}

ConfigLayer layer_from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open config file " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw Error(Errc::InvalidConfig, "config file " + path + ": " + e.what());
  }
  return layer_from_json(j);
}

ConfigLayer layer_from_env(const std::map<std::string, std::string>& env) {
  ConfigLayer l;
  auto get = [&](const char* key) -> std::optional<std::string> {
    auto it = env.find(key);
    if (it == env.end() || it->second.empty()) return std::nullopt;
    return it->second;
  };
  if (auto v = get("ASKTMK_PROVIDER_MODE")) l.provider_mode = parse_mode(*v);
  if (auto v = get("ASKTMK_ENDPOINT")) l.endpoint = *v;
  if (get("ASKTMK_API_KEY")) l.auth = "env:ASKTMK_API_KEY";
  if (auto v = get("ASKTMK_K")) l.k = parse_number<std::size_t>("ASKTMK_K", *v);
  if (auto v = get("ASKTMK_PORT")) l.port = parse_number<int>("ASKTMK_PORT", *v);
  return l;
}

std::map<std::string, std::string> process_env() {
  std::map<std::string, std::string> out;
  for (char** e = environ; e && *e; ++e) {
    std::string entry(*e);
    auto eq = entry.find('=');
    if (eq != std::string::npos && entry.rfind("ASKTMK_", 0) == 0) out[entry.substr(0, eq)] = entry.substr(eq + 1);
  }
  return out;
}

EngineConfig resolve(const ConfigLayer& file, const ConfigLayer& env, const ConfigLayer& cli) {
  EngineConfig c;
  for (const ConfigLayer* l : {&file, &env, &cli}) {
    overlay(c.model_path, l->model_path);
    overlay(c.k, l->k);
    overlay(c.max_tokens, l->max_tokens);
    overlay(c.temperature, l->temperature);
    overlay(c.provider.mode, l->provider_mode);
    if (l->endpoint) c.provider.endpoint = l->endpoint;
    if (l->model_name) c.provider.model_name = l->model_name;
    if (l->auth) c.provider.auth = l->auth;
    overlay(c.provider.prompt_token_limit, l->prompt_token_limit);
    overlay(c.embedder, l->embedder);
    if (l->embedding_endpoint) c.embedding_endpoint = l->embedding_endpoint;
    if (l->embedding_model) c.embedding_model = l->embedding_model;
    overlay(c.session_bound, l->session_bound);
    overlay(c.port, l->port);
  }
  c.check();
  return c;
}

}  // namespace asktmk::config
