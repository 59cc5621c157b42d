#pragma once

// The three-stage question answering pipeline over a TMK self-model:
// classify the question, localize relevant elements, generate a refined
// explanation. Sessions carry a rolling summary for recall.

#include <cstddef>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "asktmk/genai.hpp"
#include "asktmk/retrieval.hpp"
#include "asktmk/tmk.hpp"

namespace asktmk::pipeline {

inline constexpr std::size_t kDefaultK = 4;
inline constexpr std::size_t kDefaultSessionBound = 10;

enum class QuestionClass { mmodel, multimodels, cant_answer };

std::string_view to_string(QuestionClass c) noexcept;
/// Accepts the canonical names plus the "mmodels" spelling.
std::optional<QuestionClass> parse_question_class(std::string_view s) noexcept;

/// Task+method documents for mmodel, every kind for multimodels.
tmk::KindSet kinds_for(QuestionClass c);

// ---------------------------------------------------------------------------
// Stage 1

struct Classification {
  QuestionClass value = QuestionClass::cant_answer;
  bool used_provider = false;
  std::vector<std::string> warnings;
};

/// Deterministic classifier:
///  1. no agent reference and no TMK element name -> cant_answer;
///  2. a how-interrogative ("how do/does/did/can/could/would/should/will")
///     that names a task or method -> mmodel;
///  3. otherwise multimodels.
/// Names match as whole token runs, case-insensitively. Agent references
/// are the agent name and the self-references listed in agent_references().
QuestionClass classify_by_rules(std::string_view question, const tmk::TmkModel& model);
const std::vector<std::string>& agent_references();

/// Mock providers use the rule classifier without a completion call. Remote
/// providers get the classifier prompt; unparseable replies and provider
/// failures fall back to the rules with a warning. Throws Error{EmptyQuestion}.
Classification classify(std::string_view question, const tmk::TmkModel& model,
                        genai::CompletionProvider& provider, const genai::CompletionRequest& settings = {});

/// The classifier prompt sent in remote mode.
std::string classifier_prompt(std::string_view question, const tmk::TmkModel& model);

/// Reads a class name out of a provider reply; nullopt unless exactly one
/// class is named.
std::optional<QuestionClass> parse_classifier_reply(std::string_view reply);

// ---------------------------------------------------------------------------
// Stage 2

/// Prebuilt indexes per kind set; immutable once constructed.
class IndexSource {
 public:
  virtual ~IndexSource() = default;
  virtual const retrieval::VectorIndex& index(const tmk::KindSet& kinds) const = 0;
  virtual const retrieval::Embedder& embedder() const = 0;
};

/// Renders and indexes the two corpora the pipeline needs.
class ModelIndexes final : public IndexSource {
 public:
  ModelIndexes(const tmk::TmkModel& model, std::shared_ptr<const retrieval::Embedder> embedder);
  const retrieval::VectorIndex& index(const tmk::KindSet& kinds) const override;
  const retrieval::Embedder& embedder() const override { return *embedder_; }

 private:
  std::shared_ptr<const retrieval::Embedder> embedder_;
  std::map<tmk::KindSet, retrieval::VectorIndex> indexes_;
};

/// Top-k hits from the class's corpus. Throws Error{InvalidArgument} for
/// cant_answer; retrieval errors propagate.
std::vector<retrieval::RetrievalHit> localize(std::string_view question, QuestionClass cls,
                                              const IndexSource& source, std::size_t k);

// ---------------------------------------------------------------------------
// Chain-of-thought decomposition

struct MethodStep {
  std::string state_id;
  std::string state_name;
  std::optional<std::string> subtask_id;
  std::optional<std::string> subtask_name;
  std::optional<std::string> entered_via;       // guard of the transition that reached it
  std::vector<std::string> outgoing_labels;     // ascending
  bool terminal = false;

  bool operator==(const MethodStep&) const = default;
};

/// Depth-first preorder from the start state, branches in ascending label
/// order, each state once. Throws Error{UnknownMethod}.
std::vector<MethodStep> decompose_method(const tmk::TmkModel& model, std::string_view method_id);

/// Numbered outline of a decomposition, one line per step.
std::string format_method_steps(const tmk::Method& method, const std::vector<MethodStep>& steps);

// ---------------------------------------------------------------------------
// Sessions

class Session {
 public:
  explicit Session(std::string id, std::size_t bound = kDefaultSessionBound);

  const std::string& id() const noexcept { return id_; }
  std::size_t bound() const noexcept { return bound_; }
  std::vector<std::pair<std::string, std::string>> history() const;
  /// One paragraph, "none" while the history is empty.
  std::string summary() const;

  /// Appends under the session lock, drops the oldest entry beyond the
  /// bound and rebuilds the summary.
  void record(std::string question, std::string answer);

 private:
  std::string id_;
  std::size_t bound_;
  mutable std::mutex mutex_;
  std::deque<std::pair<std::string, std::string>> history_;
  std::string summary_;
};

class SessionStore {
 public:
  explicit SessionStore(std::size_t bound = kDefaultSessionBound) : bound_(bound) {}
  std::shared_ptr<Session> get_or_create(const std::string& id);
  std::shared_ptr<Session> find(const std::string& id) const;
  std::size_t size() const;

 private:
  std::size_t bound_;
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
};

// ---------------------------------------------------------------------------
// Stage 3

struct ExplanationResult {
  std::string question;
  QuestionClass cls = QuestionClass::cant_answer;
  std::vector<retrieval::RetrievalHit> hits;
  std::vector<std::string> steps;
  std::string answer;
  nlohmann::json metadata = nlohmann::json::object();

  bool operator==(const ExplanationResult&) const = default;
};

nlohmann::json to_json(const ExplanationResult& r);
ExplanationResult explanation_from_json(const nlohmann::json& j);

struct GenerationSettings {
  int max_tokens = genai::kDefaultMaxTokens;
  double temperature = genai::kDefaultTemperature;
  std::size_t prompt_token_limit = genai::kDefaultPromptTokenLimit;
};

/// Refine chain: an initial answer from the best hit, then one refine call
/// per remaining hit in descending score order. mmodel prompts also carry
/// the decomposition of each retrieved method (and of the methods of each
/// retrieved task). Prompts over the token limit shed method outlines
/// lowest-score-first, then truncate the document body, with a warning.
/// Provider errors propagate with stage "generate" and the steps completed
/// so far in details.partial_steps.
ExplanationResult generate(std::string_view question, QuestionClass cls,
                           const std::vector<retrieval::RetrievalHit>& hits, const tmk::TmkModel& model,
                           const Session& session, genai::CompletionProvider& provider,
                           const GenerationSettings& settings = {});

// ---------------------------------------------------------------------------
// Engine

struct EngineOptions {
  std::size_t k = kDefaultK;
  std::size_t session_bound = kDefaultSessionBound;
  GenerationSettings generation;
};

/// Validated model + prebuilt indexes + provider. Shareable across threads;
/// concurrent asks on one session serialize at Session::record.
class Engine {
 public:
  /// Throws Error{InvalidModel} with the validation report in details.
  Engine(tmk::TmkModel model, EngineOptions options, std::shared_ptr<genai::CompletionProvider> provider,
         std::shared_ptr<const retrieval::Embedder> embedder = std::make_shared<retrieval::HashingEmbedder>());

  /// classify -> localize -> generate; cant_answer short-circuits to the
  /// fixed refusal. Errors carry the failing stage.
  ExplanationResult ask(std::string_view question, Session& session, std::optional<std::size_t> k = {}) const;

  /// Uses the stored session `session_id`, or a throwaway one when absent.
  ExplanationResult ask(std::string_view question, const std::optional<std::string>& session_id,
                        std::optional<std::size_t> k = {});

  const tmk::TmkModel& model() const noexcept { return model_; }
  const EngineOptions& options() const noexcept { return options_; }
  genai::CompletionProvider& provider() const noexcept { return *provider_; }
  const IndexSource& indexes() const noexcept { return *indexes_; }
  SessionStore& sessions() noexcept { return sessions_; }

 private:
  tmk::TmkModel model_;
  EngineOptions options_;
  std::shared_ptr<genai::CompletionProvider> provider_;
  std::unique_ptr<ModelIndexes> indexes_;
  SessionStore sessions_;
};

/// The fixed cant_answer reply for `agent_name`.
std::string refusal_text(std::string_view agent_name);

}  // namespace asktmk::pipeline
