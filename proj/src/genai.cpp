#include "asktmk/genai.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <semaphore>
#include <sstream>

#include <nlohmann/json.hpp>

#include "asktmk/error.hpp"
#include "asktmk/net.hpp"
#include "asktmk/text.hpp"

namespace asktmk::genai {

namespace detail {
struct RawTemplate {
  const char* id;
  const char* text;
};
extern const RawTemplate kRawTemplates[];
extern const std::size_t kRawTemplateCount;
}  // namespace detail

using nlohmann::json;

std::size_t estimate_tokens(std::string_view s) noexcept { return (s.size() + 3) / 4; }

// ---------------------------------------------------------------------------
// Templates

namespace {

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool is_ident(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

enum class Piece { literal, placeholder };

// Walks `text` and reports literal runs and placeholder names in order.
template <typename Sink>
void scan_template(std::string_view text, const std::string& id, Sink&& sink) {
  std::string literal;
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (c == '{') {
      if (i + 1 < text.size() && text[i + 1] == '{') {
        literal.push_back('{');
        ++i;
        continue;
      }
      std::size_t j = i + 1;
      if (j < text.size() && is_ident_start(text[j])) {
        while (j < text.size() && is_ident(text[j])) ++j;
        if (j < text.size() && text[j] == '}') {
          sink(Piece::literal, literal);
          literal.clear();
          sink(Piece::placeholder, std::string(text.substr(i + 1, j - i - 1)));
          i = j;
          continue;
        }
      }
      throw Error(Errc::InvalidTemplate, "template " + id + ": stray '{' at offset " + std::to_string(i));
    }
    if (c == '}') {
      if (i + 1 < text.size() && text[i + 1] == '}') {
        literal.push_back('}');
        ++i;
        continue;
      }
      throw Error(Errc::InvalidTemplate, "template " + id + ": stray '}' at offset " + std::to_string(i));
    }
    literal.push_back(c);
  }
  sink(Piece::literal, literal);
}

}  // namespace

PromptTemplate::PromptTemplate(std::string id, std::string version, std::string text)
    : id_(std::move(id)), version_(std::move(version)), text_(std::move(text)) {
  scan_template(text_, id_, [&](Piece p, const std::string& s) {
    if (p == Piece::placeholder) required_.insert(s);
  });
}

PromptTemplate::PromptTemplate(std::string id, std::string version, std::string text,
                               std::set<std::string> required_bindings)
    : PromptTemplate(std::move(id), std::move(version), std::move(text)) {
  if (required_bindings != required_) {
    throw Error(Errc::InvalidTemplate, "template " + id_ + ": declared bindings differ from placeholders");
  }
}

std::string render_prompt(const PromptTemplate& tmpl, const Bindings& bindings) {
  for (const auto& name : tmpl.required_bindings()) {
    if (!bindings.count(name)) {
      throw Error(Errc::MissingBinding, "template " + tmpl.id() + " needs binding {" + name + "}").with_reason(name);
    }
  }
  for (const auto& [name, _] : bindings) {
    if (!tmpl.required_bindings().count(name)) {
      throw Error(Errc::UnknownBinding, "template " + tmpl.id() + " has no placeholder {" + name + "}")
          .with_reason(name);
    }
  }
  std::string out;
  out.reserve(tmpl.text().size());
  scan_template(tmpl.text(), tmpl.id(), [&](Piece p, const std::string& s) {
    out += p == Piece::literal ? s : bindings.at(s);
  });
  return out;
}

const std::vector<PromptTemplate>& builtin_templates() {
  static const std::vector<PromptTemplate> all = [] {
    std::vector<PromptTemplate> v;
    for (std::size_t i = 0; i < detail::kRawTemplateCount; ++i) {
      std::string body = detail::kRawTemplates[i].text;
      if (!body.empty() && body.back() == '\n') body.pop_back();
      v.emplace_back(detail::kRawTemplates[i].id, "v1", std::move(body));
    }
    return v;
  }();
  return all;
}

const PromptTemplate& builtin_template(std::string_view id) {
  for (const auto& t : builtin_templates()) {
    if (t.id() == id) return t;
  }
  throw Error(Errc::InvalidTemplate, "no bundled template named " + std::string(id));
}

// ---------------------------------------------------------------------------
// Prompt blocks

namespace {
constexpr std::string_view kContextOpen = "CONTEXT:";
constexpr std::string_view kContextClose = "END_CONTEXT";
constexpr std::string_view kExistingOpen = "EXISTING_ANSWER:";
constexpr std::string_view kExistingClose = "END_EXISTING_ANSWER";
constexpr std::string_view kDocumentMarker = "--- DOCUMENT: ";
}  // namespace

std::string format_context(const std::vector<ContextDocument>& docs) {
  std::string out = "\n";
  out += kContextOpen;
  out += "\n";
  for (const auto& d : docs) {
    out += kDocumentMarker;
    out += text::single_line(d.title);
    out += "\n";
    out += d.body;
    out += "\n";
  }
  out += kContextClose;
  out += "\n";
  return out;
}

std::optional<std::string> extract_block(std::string_view prompt, std::string_view open, std::string_view close) {
  std::istringstream in{std::string(prompt)};
  std::string line;
  bool inside = false;
  std::string content;
  while (std::getline(in, line)) {
    if (!inside) {
      if (line == open) inside = true;
      continue;
    }
    if (line == close) {
      if (!content.empty() && content.back() == '\n') content.pop_back();
      return content;
    }
    content += line;
    content += '\n';
  }
  return std::nullopt;
}

std::vector<ContextDocument> parse_context(std::string_view prompt) {
  std::vector<ContextDocument> docs;
  auto block = extract_block(prompt, kContextOpen, kContextClose);
  if (!block) return docs;
  std::istringstream in(*block);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind(kDocumentMarker, 0) == 0) {
      docs.push_back({line.substr(kDocumentMarker.size()), ""});
    } else if (!docs.empty()) {
      auto& body = docs.back().body;
      if (!body.empty()) body += '\n';
      body += line;
    }
  }
  return docs;
}

// ---------------------------------------------------------------------------
// Providers

std::string_view to_string(ProviderMode mode) noexcept { return mode == ProviderMode::mock ? "mock" : "remote"; }

std::optional<ProviderMode> parse_provider_mode(std::string_view s) noexcept {
  if (s == "mock") return ProviderMode::mock;
  if (s == "remote") return ProviderMode::remote;
  return std::nullopt;
}

void ProviderConfig::check() const {
  if (mode == ProviderMode::remote) {
    if (!endpoint || endpoint->empty()) throw Error(Errc::InvalidConfig, "remote provider mode requires an endpoint");
    net::Url::parse(*endpoint);
  }
  if (auth && auth->rfind("env:", 0) != 0) {
    throw Error(Errc::InvalidConfig, "auth must be a secret reference of the form env:VAR");
  }
  if (max_concurrent_requests == 0) throw Error(Errc::InvalidConfig, "max_concurrent_requests must be positive");
  if (prompt_token_limit == 0) throw Error(Errc::InvalidConfig, "prompt_token_limit must be positive");
}

std::optional<std::string> resolve_secret(const std::optional<std::string>& ref) {
  if (!ref || ref->rfind("env:", 0) != 0) return std::nullopt;
  const char* v = std::getenv(ref->c_str() + 4);
  if (!v || !*v) return std::nullopt;
  return std::string(v);
}

namespace {
void check_budget(const CompletionRequest& request, std::size_t limit) {
  if (request.max_tokens < 1) throw Error(Errc::InvalidArgument, "max_tokens must be positive");
  if (request.temperature < 0) throw Error(Errc::InvalidArgument, "temperature must be non-negative");
  const auto tokens = estimate_tokens(request.prompt);
  if (tokens > limit) {
    throw Error(Errc::BudgetExceeded,
                "prompt is ~" + std::to_string(tokens) + " tokens, limit " + std::to_string(limit),
                json{{"estimated_tokens", tokens}, {"limit", limit}});
  }
}
}  // namespace

std::string MockProvider::complete(const CompletionRequest& request) {
  check_budget(request, prompt_token_limit_);
  const auto docs = parse_context(request.prompt);
  if (auto existing = extract_block(request.prompt, kExistingOpen, kExistingClose)) {
    std::string out = text::single_line(text::trim(*existing));
    for (const auto& d : docs) out += "; refined with: " + d.title;
    return out;
  }
  if (docs.empty()) return "I do not know.";
  std::vector<std::string> titles;
  for (const auto& d : docs) titles.push_back(d.title);
  std::string out = "Based on: " + text::join(titles, "; ") + ".";
  for (const auto& d : docs) {
    auto s = text::first_sentence(d.body);
    if (!s.empty()) out += " " + s;
  }
  return out;
}

namespace {

class RemoteProvider final : public CompletionProvider {
 public:
  explicit RemoteProvider(ProviderConfig config)
      : config_(std::move(config)), slots_(static_cast<std::ptrdiff_t>(config_.max_concurrent_requests)) {}

  ProviderMode mode() const noexcept override { return ProviderMode::remote; }

  std::string complete(const CompletionRequest& request) override {
    check_budget(request, config_.prompt_token_limit);
    json body = {{"messages", json::array({{{"role", "user"}, {"content", request.prompt}}})},
                 {"max_tokens", request.max_tokens},
                 {"temperature", request.temperature}};
    if (config_.model_name) body["model"] = *config_.model_name;
    std::map<std::string, std::string> headers;
    if (auto key = resolve_secret(config_.auth)) headers["Authorization"] = "Bearer " + *key;

    slots_.acquire();
    net::HttpResponse res;
    try {
      res = net::post_json(*config_.endpoint, body, headers, config_.timeout_seconds);
    } catch (...) {
      slots_.release();
      throw;
    }
    slots_.release();

    if (res.status < 200 || res.status >= 300) {
      throw Error(Errc::ProviderError, "provider returned HTTP " + std::to_string(res.status),
                  json{{"status", res.status}, {"body", res.body}});
    }
    try {
      auto reply = json::parse(res.body);
      const auto& choice = reply.at("choices").at(0);
      if (choice.contains("message")) return choice.at("message").at("content").get<std::string>();
      return choice.at("text").get<std::string>();
    } catch (const json::exception& e) {
      throw Error(Errc::ProviderError, std::string("unreadable provider response: ") + e.what(),
                  json{{"status", res.status}, {"body", res.body}});
    }
  }

 private:
  ProviderConfig config_;
  std::counting_semaphore<1024> slots_;
};

}  // namespace

std::unique_ptr<CompletionProvider> make_remote_provider(const ProviderConfig& config) {
  config.check();
  if (config.mode != ProviderMode::remote) throw Error(Errc::InvalidConfig, "provider config is not in remote mode");
  if (config.max_concurrent_requests > 1024) throw Error(Errc::InvalidConfig, "max_concurrent_requests above 1024");
  return std::make_unique<RemoteProvider>(config);
}

std::unique_ptr<CompletionProvider> make_provider(const ProviderConfig& config) {
  config.check();
  if (config.mode == ProviderMode::mock) return std::make_unique<MockProvider>(config.prompt_token_limit);
  return make_remote_provider(config);
}

std::string complete(const ProviderConfig& provider, const CompletionRequest& request) {
  return make_provider(provider)->complete(request);
}

}  // namespace asktmk::genai
