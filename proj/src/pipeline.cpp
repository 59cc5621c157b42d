#include "asktmk/pipeline.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "asktmk/error.hpp"
#include "asktmk/text.hpp"

namespace asktmk::pipeline {

using nlohmann::json;
namespace t = genai::templates;

std::string_view to_string(QuestionClass c) noexcept {
  switch (c) {
    case QuestionClass::mmodel: return "mmodel";
    case QuestionClass::multimodels: return "multimodels";
    case QuestionClass::cant_answer: return "cant_answer";
  }
  return "cant_answer";
}

std::optional<QuestionClass> parse_question_class(std::string_view s) noexcept {
  if (s == "mmodel" || s == "mmodels") return QuestionClass::mmodel;
  if (s == "multimodels") return QuestionClass::multimodels;
  if (s == "cant_answer") return QuestionClass::cant_answer;
  return std::nullopt;
}

tmk::KindSet kinds_for(QuestionClass c) {
  if (c == QuestionClass::mmodel) return tmk::kTaskAndMethod;
  return tmk::kAllKinds;
}

// ---------------------------------------------------------------------------
// Stage 1

const std::vector<std::string>& agent_references() {
  static const std::vector<std::string> refs{"you",        "your",      "yours",     "yourself",
                                             "the system", "this system", "the agent", "this agent"};
  return refs;
}

namespace {

bool mentions_any(const std::vector<std::string>& question_tokens, const std::vector<std::string>& names) {
  return std::any_of(names.begin(), names.end(), [&](const std::string& name) {
    return text::contains_token_run(question_tokens, text::tokenize(name));
  });
}

bool is_how_interrogative(const std::vector<std::string>& tokens) {
  static const std::set<std::string> auxiliaries{"do", "does", "did", "can", "could", "would", "should", "will"};
  for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
    if (tokens[i] == "how" && auxiliaries.count(tokens[i + 1])) return true;
  }
  return false;
}

void require_question(std::string_view question) {
  if (text::trim(question).empty()) throw Error(Errc::EmptyQuestion, "question is empty");
}

template <typename T>
std::vector<std::string> names(const std::vector<T>& items) {
  std::vector<std::string> out;
  for (const auto& x : items) out.push_back(x.name);
  return out;
}

}  // namespace

QuestionClass classify_by_rules(std::string_view question, const tmk::TmkModel& model) {
  const auto tokens = text::tokenize(question);
  std::vector<std::string> procedural = names(model.tasks);
  for (const auto& m : model.methods) procedural.push_back(m.name);

  std::vector<std::string> any = procedural;
  for (const auto& c : model.knowledge) any.push_back(c.name);
  any.push_back(model.agent_name);
  for (const auto& r : agent_references()) any.push_back(r);

  if (!mentions_any(tokens, any)) return QuestionClass::cant_answer;
  if (is_how_interrogative(tokens) && mentions_any(tokens, procedural)) return QuestionClass::mmodel;
  return QuestionClass::multimodels;
}

std::string classifier_prompt(std::string_view question, const tmk::TmkModel& model) {
  const std::string task_names = text::join(names(model.tasks), ", ");
  const std::string method_names = text::join(names(model.methods), ", ");
  const std::string knowledge_names = text::join(names(model.knowledge), ", ");
  const std::string descriptions =
      genai::render_prompt(genai::builtin_template(t::kMmodelDesc),
                           {{"Task_names", task_names}, {"Method_names", method_names}}) +
      "\n" +
      genai::render_prompt(genai::builtin_template(t::kMultiModelsDesc),
                           {{"Knowledge_names", knowledge_names},
                            {"Task_names", task_names},
                            {"Method_names", method_names}}) +
      "\n" +
      genai::render_prompt(genai::builtin_template(t::kCantAnswerDesc), {{"agent_name", model.agent_name}});
  return genai::render_prompt(genai::builtin_template(t::kClassifierPrompt),
                              {{"class_descriptions", descriptions}, {"question", text::single_line(question)}});
}

std::optional<QuestionClass> parse_classifier_reply(std::string_view reply) {
  std::string normalized;
  for (char c : text::to_lower(reply)) {
    normalized.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '_' ? c : ' ');
  }
  std::set<QuestionClass> found;
  std::istringstream in(normalized);
  std::string word;
  while (in >> word) {
    if (word == "mmodel" || word == "mmodels") found.insert(QuestionClass::mmodel);
    if (word == "multimodels" || word == "multimodel" || word == "multi_models") {
      found.insert(QuestionClass::multimodels);
    }
    if (word == "cant_answer") found.insert(QuestionClass::cant_answer);
  }
  if (found.size() != 1) return std::nullopt;
  return *found.begin();
}

Classification classify(std::string_view question, const tmk::TmkModel& model, genai::CompletionProvider& provider,
                        const genai::CompletionRequest& settings) {
  require_question(question);
  Classification out;
  if (provider.mode() == genai::ProviderMode::mock) {
    out.value = classify_by_rules(question, model);
    return out;
  }
  genai::CompletionRequest request = settings;
  request.prompt = classifier_prompt(question, model);
  try {
    out.used_provider = true;
    const std::string reply = provider.complete(request);
    if (auto parsed = parse_classifier_reply(reply)) {
      out.value = *parsed;
      return out;
    }
    out.warnings.push_back("classifier reply not understood, used rule classifier: " +
                           text::single_line(reply.substr(0, 200)));
  } catch (const Error& e) {
    out.warnings.push_back("classifier provider failed (" + std::string(e.code_name()) +
                           "), used rule classifier: " + e.what());
  }
  out.value = classify_by_rules(question, model);
  return out;
}

// ---------------------------------------------------------------------------
// Stage 2

ModelIndexes::ModelIndexes(const tmk::TmkModel& model, std::shared_ptr<const retrieval::Embedder> embedder)
    : embedder_(std::move(embedder)) {
  for (const auto& kinds : {tmk::kAllKinds, tmk::kTaskAndMethod}) {
    const auto docs = tmk::render_documents(model, kinds);
    indexes_.emplace(kinds, retrieval::build_index(docs, *embedder_));
  }
}

const retrieval::VectorIndex& ModelIndexes::index(const tmk::KindSet& kinds) const {
  auto it = indexes_.find(kinds);
  if (it == indexes_.end()) throw Error(Errc::InvalidArgument, "no index built for the requested kinds");
  return it->second;
}

std::vector<retrieval::RetrievalHit> localize(std::string_view question, QuestionClass cls,
                                              const IndexSource& source, std::size_t k) {
  if (cls == QuestionClass::cant_answer) {
    throw Error(Errc::InvalidArgument, "cant_answer questions are not localized");
  }
  const auto& index = source.index(kinds_for(cls));
  return retrieval::search(index, source.embedder().embed(question), k);
}

// ---------------------------------------------------------------------------
// Decomposition

std::vector<MethodStep> decompose_method(const tmk::TmkModel& model, std::string_view method_id) {
  const tmk::Method* method = model.find_method(method_id);
  if (!method) throw Error(Errc::UnknownMethod, "unknown method \"" + std::string(method_id) + "\"");
  std::vector<MethodStep> steps;
  std::set<std::string> visited;

  // Explicit stack keeps deep FSMs off the call stack; children pushed in
  // reverse so the smallest label is expanded first.
  struct Frame {
    std::string state;
    std::optional<std::string> via;
  };
  std::vector<Frame> stack{{method->start_state, std::nullopt}};
  while (!stack.empty()) {
    Frame f = std::move(stack.back());
    stack.pop_back();
    if (!visited.insert(f.state).second) continue;
    const tmk::State* s = method->find_state(f.state);
    if (!s) continue;
    MethodStep step;
    step.state_id = s->id;
    step.state_name = s->name;
    step.entered_via = f.via;
    step.terminal = s->terminal;
    if (s->subtask) {
      step.subtask_id = *s->subtask;
      const tmk::Task* sub = model.find_task(*s->subtask);
      step.subtask_name = sub ? sub->name : *s->subtask;
    }
    const auto out = method->outgoing(s->id);
    for (const auto* tr : out) step.outgoing_labels.push_back(tr->condition_label);
    for (auto it = out.rbegin(); it != out.rend(); ++it) {
      if (!visited.count((*it)->to_state)) stack.push_back({(*it)->to_state, (*it)->condition_label});
    }
    steps.push_back(std::move(step));
  }
  return steps;
}

std::string format_method_steps(const tmk::Method& method, const std::vector<MethodStep>& steps) {
  std::ostringstream out;
  out << method.name << ":";
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const auto& s = steps[i];
    out << "\n  " << (i + 1) << ". " << s.state_name;
    if (s.entered_via) out << " [after: " << *s.entered_via << "]";
    if (s.subtask_name) out << " (subtask: " << *s.subtask_name << ")";
    if (s.terminal) out << " (end)";
    if (!s.outgoing_labels.empty()) out << " -> on " << text::join(s.outgoing_labels, " | ");
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Sessions

Session::Session(std::string id, std::size_t bound) : id_(std::move(id)), bound_(bound), summary_("none") {
  if (bound_ == 0) throw Error(Errc::InvalidArgument, "session history bound must be positive");
}

std::vector<std::pair<std::string, std::string>> Session::history() const {
  std::lock_guard lock(mutex_);
  return {history_.begin(), history_.end()};
}

std::string Session::summary() const {
  std::lock_guard lock(mutex_);
  return summary_;
}

void Session::record(std::string question, std::string answer) {
  std::lock_guard lock(mutex_);
  history_.emplace_back(std::move(question), std::move(answer));
  while (history_.size() > bound_) history_.pop_front();
  std::vector<std::string> parts;
  for (const auto& [q, a] : history_) {
    parts.push_back("asked \"" + text::single_line(text::trim(q)) + "\" and was told \"" +
                    text::single_line(text::first_sentence(a)) + "\"");
  }
  summary_ = "The user " + text::join(parts, "; then ") + ".";
}

std::shared_ptr<Session> SessionStore::get_or_create(const std::string& id) {
  std::lock_guard lock(mutex_);
  auto& slot = sessions_[id];
  if (!slot) slot = std::make_shared<Session>(id, bound_);
  return slot;
}

std::shared_ptr<Session> SessionStore::find(const std::string& id) const {
  std::lock_guard lock(mutex_);
  auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

std::size_t SessionStore::size() const {
  std::lock_guard lock(mutex_);
  return sessions_.size();
}

// ---------------------------------------------------------------------------
// Results

json to_json(const ExplanationResult& r) {
  json hits = json::array();
  for (const auto& h : r.hits) {
    hits.push_back({{"element_id", h.element_id},
                    {"kind", std::string(tmk::to_string(h.kind))},
                    {"score", h.score},
                    {"title", h.title}});
  }
  return {{"question", r.question}, {"class", std::string(to_string(r.cls))}, {"hits", std::move(hits)},
          {"steps", r.steps},       {"answer", r.answer},                     {"metadata", r.metadata}};
}

ExplanationResult explanation_from_json(const json& j) {
  try {
    ExplanationResult r;
    r.question = j.at("question").get<std::string>();
    auto cls = parse_question_class(j.at("class").get<std::string>());
    if (!cls) throw Error(Errc::MalformedInput, "unknown class " + j.at("class").dump());
    r.cls = *cls;
    for (const auto& h : j.at("hits")) {
      auto kind = tmk::parse_kind(h.at("kind").get<std::string>());
      if (!kind) throw Error(Errc::MalformedInput, "unknown kind " + h.at("kind").dump());
      r.hits.push_back({h.at("element_id").get<std::string>(), *kind, h.at("score").get<double>(),
                        h.value("title", std::string())});
    }
    r.steps = j.at("steps").get<std::vector<std::string>>();
    r.answer = j.at("answer").get<std::string>();
    r.metadata = j.value("metadata", json::object());
    return r;
  } catch (const json::exception& e) {
    throw Error(Errc::MalformedInput, std::string("explanation result: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Stage 3

namespace {

struct Outline {
  std::string method_id;
  std::string text;
};

// Methods retrieved directly, plus the methods of retrieved tasks, in hit order.
std::vector<Outline> method_outlines(const tmk::TmkModel& model, const std::vector<retrieval::RetrievalHit>& hits) {
  std::vector<Outline> out;
  std::set<std::string> seen;
  auto add = [&](const std::string& id) {
    const tmk::Method* m = model.find_method(id);
    if (!m || !seen.insert(id).second) return;
    out.push_back({id, format_method_steps(*m, decompose_method(model, id))});
  };
  for (const auto& h : hits) {
    if (h.kind == tmk::Kind::method) {
      add(h.element_id);
    } else if (h.kind == tmk::Kind::task) {
      if (const tmk::Task* task = model.find_task(h.element_id)) {
        for (const auto& mid : task->by_methods) add(mid);
      }
    }
  }
  return out;
}

std::string outline_block(const std::vector<Outline>& outlines) {
  if (outlines.empty()) return "none";
  std::vector<std::string> parts;
  for (const auto& o : outlines) parts.push_back(o.text);
  return text::join(parts, "\n");
}

}  // namespace

ExplanationResult generate(std::string_view question, QuestionClass cls,
                           const std::vector<retrieval::RetrievalHit>& hits, const tmk::TmkModel& model,
                           const Session& session, genai::CompletionProvider& provider,
                           const GenerationSettings& settings) {
  require_question(question);
  if (cls == QuestionClass::cant_answer) throw Error(Errc::InvalidArgument, "cant_answer questions are not generated");
  if (hits.empty()) throw Error(Errc::InvalidArgument, "generate needs at least one retrieval hit");

  std::map<tmk::DocumentKey, tmk::Document> docs;
  for (auto& d : tmk::render_documents(model, kinds_for(cls))) docs.emplace(d.key(), std::move(d));

  const std::string inline_question = text::single_line(text::trim(question));
  std::string summary = session.summary();
  while (!summary.empty() && summary.back() == '.') summary.pop_back();
  const std::string software_qa = genai::render_prompt(
      genai::builtin_template(t::kSoftwareQaPrompt),
      {{"agent_name", model.agent_name}, {"session_summary", text::single_line(summary)}});

  const auto& initial_tmpl = genai::builtin_template(
      cls == QuestionClass::mmodel ? t::kCotMethodPrompt : t::kMultiModelsAnswerPrompt);
  const auto& refine_tmpl = genai::builtin_template(t::kRefinePrompt);

  ExplanationResult result;
  result.question = std::string(question);
  result.cls = cls;
  result.hits = hits;
  json warnings = json::array();
  std::vector<Outline> outlines;
  if (cls == QuestionClass::mmodel) outlines = method_outlines(model, hits);

  for (std::size_t i = 0; i < hits.size(); ++i) {
    auto it = docs.find(hits[i].key());
    if (it == docs.end()) {
      throw Error(Errc::InvalidArgument, "hit " + hits[i].key().str() + " is not in the model")
          .with_stage(kStageGenerate);
    }
    genai::ContextDocument context{it->second.title, it->second.body};

    auto build = [&]() {
      genai::Bindings b{{"software_qa_prompt", software_qa},
                        {"context_str", genai::format_context({context})},
                        {"question", inline_question}};
      if (i == 0) {
        if (cls == QuestionClass::mmodel) b["method_steps"] = outline_block(outlines);
        return genai::render_prompt(initial_tmpl, b);
      }
      b["existing_answer"] = result.steps.back();
      return genai::render_prompt(refine_tmpl, b);
    };

    std::string prompt = build();
    while (genai::estimate_tokens(prompt) > settings.prompt_token_limit) {
      if (i == 0 && !outlines.empty()) {
        warnings.push_back("prompt over budget: dropped outline of method " + outlines.back().method_id);
        outlines.pop_back();
      } else if (!context.body.empty()) {
        const std::size_t excess = (genai::estimate_tokens(prompt) - settings.prompt_token_limit) * 4 + 4;
        const std::size_t keep = context.body.size() > excess ? context.body.size() - excess : 0;
        warnings.push_back("prompt over budget: truncated " + hits[i].key().str() + " body to " +
                           std::to_string(keep) + " bytes");
        context.body.resize(keep);
      } else {
        break;  // fixed text alone is over budget; the provider reports it
      }
      prompt = build();
    }

    try {
      result.steps.push_back(provider.complete({prompt, settings.max_tokens, settings.temperature}));
    } catch (Error& e) {
      e.details()["partial_steps"] = result.steps;
      e.with_stage(kStageGenerate);
      throw;
    }
  }
  result.answer = result.steps.back();

  json templates = json::array({genai::builtin_template(t::kSoftwareQaPrompt).tag(), initial_tmpl.tag()});
  if (hits.size() > 1) templates.push_back(refine_tmpl.tag());
  result.metadata = {{"templates", std::move(templates)},
                     {"provider_mode", std::string(genai::to_string(provider.mode()))},
                     {"refinement_steps", result.steps.size()},
                     {"max_tokens", settings.max_tokens},
                     {"temperature", settings.temperature},
                     {"warnings", std::move(warnings)}};
  if (cls == QuestionClass::mmodel) {
    json ids = json::array();
    for (const auto& o : outlines) ids.push_back(o.method_id);
    result.metadata["decomposed_methods"] = std::move(ids);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Engine

std::string refusal_text(std::string_view agent_name) {
  return genai::render_prompt(genai::builtin_template(t::kCantAnswerRefusal),
                              {{"agent_name", std::string(agent_name)}});
}

Engine::Engine(tmk::TmkModel model, EngineOptions options, std::shared_ptr<genai::CompletionProvider> provider,
               std::shared_ptr<const retrieval::Embedder> embedder)
    : model_(std::move(model)), options_(options), provider_(std::move(provider)), sessions_(options.session_bound) {
  if (options_.k < 1) throw Error(Errc::InvalidConfig, "k must be at least 1");
  if (!provider_) throw Error(Errc::InvalidConfig, "engine needs a completion provider");
  auto report = tmk::validate(model_);
  if (!report.ok()) {
    throw Error(Errc::InvalidModel, "model failed validation:\n" + report.to_text(), report.to_json());
  }
  indexes_ = std::make_unique<ModelIndexes>(model_, std::move(embedder));
}

ExplanationResult Engine::ask(std::string_view question, Session& session, std::optional<std::size_t> k) const {
  try {
    require_question(question);
  } catch (Error& e) {
    e.with_stage(kStageClassify);
    throw;
  }
  const std::size_t top_k = k.value_or(options_.k);
  if (top_k < 1) throw Error(Errc::InvalidArgument, "k must be at least 1").with_stage(kStageLocalize);

  genai::CompletionRequest settings{"", options_.generation.max_tokens, options_.generation.temperature};
  Classification c;
  try {
    c = classify(question, model_, *provider_, settings);
  } catch (Error& e) {
    e.with_stage(kStageClassify);
    throw;
  }

  ExplanationResult result;
  if (c.value == QuestionClass::cant_answer) {
    result.question = std::string(question);
    result.cls = c.value;
    result.answer = refusal_text(model_.agent_name);
    result.metadata = {{"templates", json::array({genai::builtin_template(t::kCantAnswerRefusal).tag()})},
                       {"provider_mode", std::string(genai::to_string(provider_->mode()))},
                       {"refinement_steps", 0},
                       {"warnings", json::array()}};
  } else {
    std::vector<retrieval::RetrievalHit> hits;
    try {
      hits = localize(question, c.value, *indexes_, top_k);
    } catch (Error& e) {
      e.with_stage(kStageLocalize);
      throw;
    }
    try {
      result = generate(question, c.value, hits, model_, session, *provider_, options_.generation);
    } catch (Error& e) {
      e.with_stage(kStageGenerate);
      throw;
    }
  }

  const auto& index = indexes_->index(kinds_for(c.value));
  result.metadata["k"] = top_k;
  result.metadata["session_id"] = session.id();
  result.metadata["embedder"] = index.embedder_id();
  result.metadata["document_template"] = std::string(tmk::kDocumentTemplateId);
  result.metadata["classified_by"] = c.used_provider ? "provider" : "rules";
  if (c.value != QuestionClass::cant_answer) {
    result.metadata["corpus_size"] = index.size();
    json kinds = json::array();
    for (auto kind : kinds_for(c.value)) kinds.push_back(std::string(tmk::to_string(kind)));
    result.metadata["kinds"] = std::move(kinds);
  }
  const std::string_view class_desc = c.value == QuestionClass::mmodel        ? t::kMmodelDesc
                                      : c.value == QuestionClass::multimodels ? t::kMultiModelsDesc
                                                                              : t::kCantAnswerDesc;
  result.metadata["class_templates"] = json::array({genai::builtin_template(class_desc).tag()});
  for (const auto& w : c.warnings) result.metadata["warnings"].push_back(w);

  session.record(std::string(question), result.answer);
  return result;
}

ExplanationResult Engine::ask(std::string_view question, const std::optional<std::string>& session_id,
                              std::optional<std::size_t> k) {
  if (!session_id || session_id->empty()) {
    Session once("single-shot", options_.session_bound);
    return ask(question, once, k);
  }
  auto session = sessions_.get_or_create(*session_id);
  return ask(question, *session, k);
}

}  // namespace asktmk::pipeline
