#pragma once

// Provider-agnostic text completion, the prompt templates, and the
// deterministic mock provider used for offline runs.

#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace asktmk::genai {

inline constexpr int kDefaultMaxTokens = 1920;
inline constexpr double kDefaultTemperature = 0.0;
/// GPT-3.5 Turbo's 4096-token window minus the completion budget.
inline constexpr std::size_t kDefaultPromptTokenLimit = 4096 - kDefaultMaxTokens;

struct CompletionRequest {
  std::string prompt;
  int max_tokens = kDefaultMaxTokens;
  double temperature = kDefaultTemperature;
};

/// Approximate token count: ceil(bytes / 4).
std::size_t estimate_tokens(std::string_view s) noexcept;

// ---------------------------------------------------------------------------
// Templates

/// Text with `{name}` placeholders; `{{` and `}}` are literal braces.
class PromptTemplate {
 public:
  /// Placeholders are extracted from `text`. Throws Error{InvalidTemplate}
  /// on an unbalanced brace.
  PromptTemplate(std::string id, std::string version, std::string text);
  /// Also checks that `required_bindings` equals the placeholder set.
  PromptTemplate(std::string id, std::string version, std::string text,
                 std::set<std::string> required_bindings);

  const std::string& id() const noexcept { return id_; }
  const std::string& version() const noexcept { return version_; }
  /// "id@version", the form recorded in result metadata.
  std::string tag() const { return id_ + "@" + version_; }
  const std::string& text() const noexcept { return text_; }
  const std::set<std::string>& required_bindings() const noexcept { return required_; }

 private:
  std::string id_;
  std::string version_;
  std::string text_;
  std::set<std::string> required_;
};

using Bindings = std::map<std::string, std::string>;

/// Single-pass substitution; bound values are not rescanned.
/// Throws Error{MissingBinding} / Error{UnknownBinding}, reason = the name.
std::string render_prompt(const PromptTemplate& tmpl, const Bindings& bindings);

namespace templates {
inline constexpr std::string_view kMultiModelsDesc = "multi_models_desc";
inline constexpr std::string_view kMmodelDesc = "mmodel_desc";
inline constexpr std::string_view kCantAnswerDesc = "cant_answer_desc";
inline constexpr std::string_view kClassifierPrompt = "classifier_prompt";
inline constexpr std::string_view kMultiModelsAnswerPrompt = "multi_models_answer_prompt";
inline constexpr std::string_view kRefinePrompt = "refine_prompt";
inline constexpr std::string_view kCotMethodPrompt = "cot_method_prompt";
inline constexpr std::string_view kSoftwareQaPrompt = "software_qa_prompt";
inline constexpr std::string_view kCantAnswerRefusal = "cant_answer_refusal";
}  // namespace templates

/// Bundled templates (compiled in from templates/*.txt).
const PromptTemplate& builtin_template(std::string_view id);
const std::vector<PromptTemplate>& builtin_templates();

// ---------------------------------------------------------------------------
// Prompt blocks understood by the mock provider

struct ContextDocument {
  std::string title;
  std::string body;
};

/// "\nCONTEXT:\n--- DOCUMENT: <title>\n<body>\n...END_CONTEXT\n"
std::string format_context(const std::vector<ContextDocument>& docs);

/// Contents between a line equal to `open` and the next line equal to
/// `close`, if both are present.
std::optional<std::string> extract_block(std::string_view prompt, std::string_view open, std::string_view close);

/// Documents listed inside the prompt's CONTEXT block (empty when absent).
std::vector<ContextDocument> parse_context(std::string_view prompt);

// ---------------------------------------------------------------------------
// Providers

enum class ProviderMode { mock, remote };
std::string_view to_string(ProviderMode mode) noexcept;
std::optional<ProviderMode> parse_provider_mode(std::string_view s) noexcept;

struct ProviderConfig {
  ProviderMode mode = ProviderMode::mock;
  std::optional<std::string> endpoint;    // full URL of the chat-completions route
  std::optional<std::string> model_name;
  std::optional<std::string> auth;        // secret reference, "env:VAR"
  std::size_t prompt_token_limit = kDefaultPromptTokenLimit;
  std::size_t max_concurrent_requests = 4;
  int timeout_seconds = 60;

  /// Throws Error{InvalidConfig} (remote mode without endpoint, bad auth ref).
  void check() const;
};

/// Resolves an "env:VAR" reference; nullopt when unset or empty.
std::optional<std::string> resolve_secret(const std::optional<std::string>& ref);

class CompletionProvider {
 public:
  virtual ~CompletionProvider() = default;
  virtual ProviderMode mode() const noexcept = 0;
  /// Throws Error{BudgetExceeded}, Error{ProviderUnavailable},
  /// Error{ProviderError} (details: status, body).
  virtual std::string complete(const CompletionRequest& request) = 0;
};

/// Pure function of the prompt:
///  * EXISTING_ANSWER block present: the existing answer followed by
///    "; refined with: <title>" for each context document;
///  * otherwise CONTEXT block present: "Based on: T1; T2." followed by the
///    first sentence of each document body;
///  * otherwise a fixed "I do not know." reply.
class MockProvider final : public CompletionProvider {
 public:
  explicit MockProvider(std::size_t prompt_token_limit = kDefaultPromptTokenLimit)
      : prompt_token_limit_(prompt_token_limit) {}
  ProviderMode mode() const noexcept override { return ProviderMode::mock; }
  std::string complete(const CompletionRequest& request) override;

 private:
  std::size_t prompt_token_limit_;
};

/// Chat-completions-style JSON over HTTP.
std::unique_ptr<CompletionProvider> make_remote_provider(const ProviderConfig& config);

std::unique_ptr<CompletionProvider> make_provider(const ProviderConfig& config);

/// One-shot convenience over make_provider().
std::string complete(const ProviderConfig& provider, const CompletionRequest& request);

}  // namespace asktmk::genai
