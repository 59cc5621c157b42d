#include "asktmk/trace.hpp"

#include <sstream>

#include "asktmk/error.hpp"
#include "asktmk/text.hpp"

namespace asktmk::trace {

using nlohmann::json;

namespace {

std::size_t count_nodes(const TraceNode& n) {
  std::size_t total = 1;
  for (const auto& c : n.children) total += count_nodes(c);
  return total;
}

std::size_t count_states(const TraceNode& n) {
  std::size_t total = n.visited_states.size();
  for (const auto& c : n.children) total += count_states(c);
  return total;
}

class Walker {
 public:
  Walker(const tmk::TmkModel& model, const TraceOptions& options) : model_(model), options_(options) {}

  TraceNode expand(const tmk::Task& task) {
    TraceNode node;
    node.task_id = task.id;
    const tmk::Method* method = pick_method(task);
    if (!method) return node;
    node.method_id = method->id;

    std::string current = method->start_state;
    while (true) {
      const tmk::State* state = method->find_state(current);
      if (!state) {
        throw Error(Errc::UnresolvedChoice, "method " + method->id + " has no state \"" + current + "\"");
      }
      if (++visited_ > options_.step_bound) {
        throw Error(Errc::StepBoundExceeded,
                    "walk exceeded " + std::to_string(options_.step_bound) + " visited states in method " + method->id,
                    json{{"step_bound", options_.step_bound}, {"method", method->id}, {"state", current}});
      }
      node.visited_states.push_back({state->id, ""});
      if (state->subtask) {
        const tmk::Task* sub = model_.find_task(*state->subtask);
        if (!sub) throw Error(Errc::UnknownTask, "unknown subtask \"" + *state->subtask + "\"");
        node.children.push_back(expand(*sub));
      }
      if (state->terminal) break;
      const auto out = method->outgoing(state->id);
      if (out.empty()) break;
      const tmk::Transition* chosen = out.front();
      if (auto sel = options_.path_selector.find(state->id); sel != options_.path_selector.end()) {
        chosen = nullptr;
        for (const auto* tr : out) {
          if (tr->condition_label == sel->second) chosen = tr;
        }
        if (!chosen) {
          throw Error(Errc::UnresolvedChoice,
                      "state " + state->id + " has no transition labelled \"" + sel->second + "\"");
        }
      }
      node.visited_states.back().taken_label = chosen->condition_label;
      current = chosen->to_state;
    }
    return node;
  }

 private:
  const tmk::Method* pick_method(const tmk::Task& task) const {
    if (auto sel = options_.method_selector.find(task.id); sel != options_.method_selector.end()) {
      for (const auto& mid : task.by_methods) {
        if (mid == sel->second) {
          if (const auto* m = model_.find_method(mid)) return m;
        }
      }
      throw Error(Errc::UnresolvedChoice, "task " + task.id + " has no method \"" + sel->second + "\"");
    }
    const tmk::Method* best = nullptr;
    for (const auto& mid : task.by_methods) {
      const auto* m = model_.find_method(mid);
      if (m && (!best || m->id < best->id)) best = m;
    }
    if (!best && !task.by_methods.empty()) {
      throw Error(Errc::UnresolvedChoice, "task " + task.id + " lists no resolvable method");
    }
    return best;
  }

  const tmk::TmkModel& model_;
  const TraceOptions& options_;
  std::size_t visited_ = 0;
};

std::string task_label(const tmk::TmkModel& model, const std::string& id) {
  const tmk::Task* t = model.find_task(id);
  return t ? t->name : id;
}

void outline_node(const TraceNode& node, const tmk::TmkModel& model, int depth, std::ostringstream& out) {
  const std::string pad(static_cast<std::size_t>(depth) * 2, ' ');
  out << pad << "Task: " << task_label(model, node.task_id);
  const tmk::Method* method = node.method_id ? model.find_method(*node.method_id) : nullptr;
  if (method) out << " (method: " << method->name << ")";
  out << "\n";
  std::size_t child = 0;
  for (const auto& v : node.visited_states) {
    const tmk::State* s = method ? method->find_state(v.state_id) : nullptr;
    out << pad << "  - " << (s ? s->name : v.state_id);
    if (!v.taken_label.empty()) out << " -> [" << v.taken_label << "]";
    out << "\n";
    if (s && s->subtask && child < node.children.size()) outline_node(node.children[child++], model, depth + 2, out);
  }
}

std::string node_summary(const TraceNode& node, const tmk::TmkModel& model) {
  std::ostringstream out;
  const tmk::Method* method = node.method_id ? model.find_method(*node.method_id) : nullptr;
  if (!method) {
    out << "Leaf task, carried out directly.";
    return out.str();
  }
  out << "Carried out by " << method->name << ".";
  for (const auto& v : node.visited_states) {
    const tmk::State* s = method->find_state(v.state_id);
    out << "\n- " << (s ? s->name : v.state_id);
    if (s && s->subtask) out << " (subtask: " << task_label(model, *s->subtask) << ")";
    if (!v.taken_label.empty()) out << " then [" << v.taken_label << "]";
  }
  return out.str();
}

void collect_context(const TraceNode& node, const tmk::TmkModel& model, std::vector<genai::ContextDocument>& docs) {
  docs.push_back({task_label(model, node.task_id), node_summary(node, model)});
  for (const auto& c : node.children) collect_context(c, model, docs);
}

json node_to_json(const TraceNode& n) {
  json states = json::array();
  for (const auto& v : n.visited_states) states.push_back({{"state", v.state_id}, {"taken", v.taken_label}});
  json children = json::array();
  for (const auto& c : n.children) children.push_back(node_to_json(c));
  json out = {{"task", n.task_id}, {"visited_states", std::move(states)}, {"children", std::move(children)}};
  out["method"] = n.method_id ? json(*n.method_id) : json(nullptr);
  return out;
}

TraceNode node_from_json(const json& j) {
  TraceNode n;
  n.task_id = j.at("task").get<std::string>();
  if (j.contains("method") && !j.at("method").is_null()) n.method_id = j.at("method").get<std::string>();
  for (const auto& v : j.at("visited_states")) {
    n.visited_states.push_back({v.at("state").get<std::string>(), v.at("taken").get<std::string>()});
  }
  for (const auto& c : j.at("children")) n.children.push_back(node_from_json(c));
  return n;
}

}  // namespace

std::size_t DerivationalTrace::node_count() const { return count_nodes(root); }
std::size_t DerivationalTrace::visited_state_count() const { return count_states(root); }

DerivationalTrace derive_trace(const tmk::TmkModel& model, std::string_view task_id, const TraceOptions& options) {
  const tmk::Task* task = model.find_task(task_id);
  if (!task) throw Error(Errc::UnknownTask, "unknown task \"" + std::string(task_id) + "\"");
  if (options.step_bound == 0) throw Error(Errc::InvalidArgument, "step_bound must be positive");
  for (const auto& [concept_id, _] : options.bindings) {
    if (!model.find_concept(concept_id)) {
      throw Error(Errc::UnresolvedChoice, "binding names unknown concept \"" + concept_id + "\"");
    }
  }
  Walker walker(model, options);
  DerivationalTrace trace;
  trace.root = walker.expand(*task);
  trace.instance_bindings = options.bindings;
  return trace;
}

std::string to_outline(const DerivationalTrace& trace, const tmk::TmkModel& model) {
  std::ostringstream out;
  if (!trace.instance_bindings.empty()) {
    out << "Instance:\n";
    for (const auto& [k, v] : trace.instance_bindings) {
      const tmk::Concept* c = model.find_concept(k);
      out << "  " << (c ? c->name : k) << " = " << v << "\n";
    }
  }
  outline_node(trace.root, model, 0, out);
  return out.str();
}

json to_json(const DerivationalTrace& trace) {
  return {{"root", node_to_json(trace.root)}, {"instance_bindings", trace.instance_bindings}};
}

DerivationalTrace trace_from_json(const json& j) {
  try {
    DerivationalTrace t;
    t.root = node_from_json(j.at("root"));
    t.instance_bindings = j.value("instance_bindings", std::map<std::string, std::string>{});
    return t;
  } catch (const json::exception& e) {
    throw Error(Errc::MalformedInput, std::string("trace: ") + e.what());
  }
}

std::vector<genai::ContextDocument> trace_context(const DerivationalTrace& trace, const tmk::TmkModel& model) {
  std::vector<genai::ContextDocument> docs;
  if (!trace.instance_bindings.empty()) {
    std::vector<std::string> lines;
    for (const auto& [k, v] : trace.instance_bindings) {
      const tmk::Concept* c = model.find_concept(k);
      lines.push_back((c ? c->name : k) + " = " + v);
    }
    docs.push_back({"Instance", text::join(lines, "\n")});
  }
  collect_context(trace.root, model, docs);
  return docs;
}

std::string explain_trace(const DerivationalTrace& trace, const tmk::TmkModel& model, std::string_view question,
                          genai::CompletionProvider& provider, const genai::CompletionRequest& settings) {
  if (text::trim(question).empty()) throw Error(Errc::EmptyQuestion, "question is empty");
  const std::string software_qa =
      genai::render_prompt(genai::builtin_template(genai::templates::kSoftwareQaPrompt),
                           {{"agent_name", model.agent_name}, {"session_summary", "none"}});
  genai::CompletionRequest request = settings;
  request.prompt = genai::render_prompt(genai::builtin_template(genai::templates::kMultiModelsAnswerPrompt),
                                        {{"software_qa_prompt", software_qa},
                                         {"context_str", genai::format_context(trace_context(trace, model))},
                                         {"question", text::single_line(text::trim(question))}});
  return provider.complete(request);
}

}  // namespace asktmk::trace
