#include "asktmk/tmk.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "asktmk/error.hpp"
#include "asktmk/text.hpp"

namespace asktmk::tmk {

using nlohmann::json;

const State* Method::find_state(std::string_view state_id) const {
  auto it = std::find_if(states.begin(), states.end(),
                         [&](const State& s) { return s.id == state_id; });
  return it == states.end() ? nullptr : &*it;
}

std::vector<const Transition*> Method::outgoing(std::string_view state_id) const {
  std::vector<const Transition*> out;
  for (const auto& t : transitions) {
    if (t.from_state == state_id) out.push_back(&t);
  }
  std::stable_sort(out.begin(), out.end(), [](const Transition* a, const Transition* b) {
    return a->condition_label < b->condition_label;
  });
  return out;
}

namespace {
template <typename T>
const T* find_by_id(const std::vector<T>& items, std::string_view id) {
  auto it = std::find_if(items.begin(), items.end(), [&](const T& x) { return x.id == id; });
  return it == items.end() ? nullptr : &*it;
}
}  // namespace

const Task* TmkModel::find_task(std::string_view id) const { return find_by_id(tasks, id); }
const Method* TmkModel::find_method(std::string_view id) const { return find_by_id(methods, id); }
const Concept* TmkModel::find_concept(std::string_view id) const { return find_by_id(knowledge, id); }

const Task* TmkModel::top_level_task() const {
  const Task* found = nullptr;
  for (const auto& t : tasks) {
    if (!t.top_level) continue;
    if (found) return nullptr;
    found = &t;
  }
  return found;
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

[[noreturn]] void schema_error(const std::string& path, const std::string& what) {
  throw Error(Errc::SchemaViolation, path + ": " + what, json{{"path", path}});
}

class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) schema_error(path_, "expected an object");
  }

  std::string str(const char* key) {
    const json& v = field(key);
    if (!v.is_string()) schema_error(path_ + "." + key, "expected a string");
    return v.get<std::string>();
  }

  bool boolean(const char* key) {
    const json& v = field(key);
    if (!v.is_boolean()) schema_error(path_ + "." + key, "expected a boolean");
    return v.get<bool>();
  }

  std::optional<std::string> optional_str(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) schema_error(path_ + "." + key, "expected a string or null");
    return it->get<std::string>();
  }

  std::vector<std::string> str_list(const char* key) {
    const json& v = array(key);
    std::vector<std::string> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_string()) {
        schema_error(path_ + "." + key + "[" + std::to_string(i) + "]", "expected a string");
      }
      out.push_back(v[i].get<std::string>());
    }
    return out;
  }

  const json& array(const char* key) {
    const json& v = field(key);
    if (!v.is_array()) schema_error(path_ + "." + key, "expected an array");
    return v;
  }

  const std::string& path() const { return path_; }

  /// Rejects keys that were never read.
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) schema_error(path_ + "." + it.key(), "unknown field");
    }
  }

 private:
  const json& field(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) schema_error(path_ + "." + key, "missing required field");
    return *it;
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename T, typename Fn>
std::vector<T> read_list(ObjectReader& r, const char* key, Fn&& read_one) {
  const json& arr = r.array(key);
  std::vector<T> out;
  out.reserve(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) {
    ObjectReader item(arr[i], r.path() + "." + key + "[" + std::to_string(i) + "]");
    out.push_back(read_one(item));
    item.finish();
  }
  return out;
}

template <typename T>
void reject_duplicates(const std::vector<T>& items, const std::string& ns) {
  std::unordered_set<std::string> seen;
  for (const auto& x : items) {
    if (!seen.insert(x.id).second) {
      throw Error(Errc::SchemaViolation, "duplicate " + ns + " id \"" + x.id + "\"",
                  json{{"id", x.id}, {"namespace", ns}})
          .with_reason(std::string(codes::kDuplicateId));
    }
  }
}

}  // namespace

TmkModel parse_model(std::string_view bytes) {
  json root;
  try {
    root = json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    throw Error(Errc::MalformedInput, std::string("model is not valid JSON: ") + e.what());
  }

  ObjectReader r(root, "$");
  TmkModel model;
  model.agent_name = r.str("agent_name");
  model.version = r.str("version");
  model.tasks = read_list<Task>(r, "tasks", [](ObjectReader& t) {
    Task task;
    task.id = t.str("id");
    task.name = t.str("name");
    task.description = t.str("description");
    task.givens = t.str_list("givens");
    task.makes = t.str_list("makes");
    task.subtasks = t.str_list("subtasks");
    task.by_methods = t.str_list("by_methods");
    task.top_level = t.boolean("top_level");
    return task;
  });
  model.methods = read_list<Method>(r, "methods", [](ObjectReader& m) {
    Method method;
    method.id = m.str("id");
    method.name = m.str("name");
    method.description = m.str("description");
    method.implements = m.str("implements");
    method.states = read_list<State>(m, "states", [](ObjectReader& s) {
      State state;
      state.id = s.str("id");
      state.name = s.str("name");
      state.subtask = s.optional_str("subtask");
      state.terminal = s.boolean("terminal");
      return state;
    });
    method.transitions = read_list<Transition>(m, "transitions", [](ObjectReader& t) {
      return Transition{t.str("from_state"), t.str("to_state"), t.str("condition_label")};
    });
    method.start_state = m.str("start_state");
    reject_duplicates(method.states, "state (method " + method.id + ")");
    return method;
  });
  model.knowledge = read_list<Concept>(r, "knowledge", [](ObjectReader& c) {
    Concept concept_;
    concept_.id = c.str("id");
    concept_.name = c.str("name");
    concept_.definition = c.str("definition");
    concept_.relations = read_list<Relation>(c, "relations", [](ObjectReader& rel) {
      return Relation{rel.str("relation_name"), rel.str("target")};
    });
    return concept_;
  });
  r.finish();

  if (model.tasks.empty()) {
    throw Error(Errc::SchemaViolation, "$.tasks: a model needs at least one task")
        .with_reason(std::string(codes::kNoTasks));
  }
  reject_duplicates(model.tasks, "task");
  reject_duplicates(model.methods, "method");
  reject_duplicates(model.knowledge, "concept");
  return model;
}

TmkModel load_model_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open model file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_model(buf.str());
}

json to_json(const TmkModel& model) {
  json tasks = json::array();
  for (const auto& t : model.tasks) {
    tasks.push_back({{"id", t.id},
                     {"name", t.name},
                     {"description", t.description},
                     {"givens", t.givens},
                     {"makes", t.makes},
                     {"subtasks", t.subtasks},
                     {"by_methods", t.by_methods},
                     {"top_level", t.top_level}});
  }
  json methods = json::array();
  for (const auto& m : model.methods) {
    json states = json::array();
    for (const auto& s : m.states) {
      json js = {{"id", s.id}, {"name", s.name}, {"terminal", s.terminal}};
      if (s.subtask) js["subtask"] = *s.subtask;
      states.push_back(std::move(js));
    }
    json transitions = json::array();
    for (const auto& t : m.transitions) {
      transitions.push_back(
          {{"from_state", t.from_state}, {"to_state", t.to_state}, {"condition_label", t.condition_label}});
    }
    methods.push_back({{"id", m.id},
                       {"name", m.name},
                       {"description", m.description},
                       {"implements", m.implements},
                       {"states", std::move(states)},
                       {"transitions", std::move(transitions)},
                       {"start_state", m.start_state}});
  }
  json knowledge = json::array();
  for (const auto& c : model.knowledge) {
    json relations = json::array();
    for (const auto& r : c.relations) {
      relations.push_back({{"relation_name", r.relation_name}, {"target", r.target}});
    }
    knowledge.push_back({{"id", c.id},
                         {"name", c.name},
                         {"definition", c.definition},
                         {"relations", std::move(relations)}});
  }
  return {{"agent_name", model.agent_name},
          {"version", model.version},
          {"tasks", std::move(tasks)},
          {"methods", std::move(methods)},
          {"knowledge", std::move(knowledge)}};
}

std::string serialize_model(const TmkModel& model, int indent) { return to_json(model).dump(indent); }

// ---------------------------------------------------------------------------
// Validation

const std::vector<std::string_view>& all_validation_codes() {
  static const std::vector<std::string_view> all{
      codes::kNoTasks,           codes::kTopLevelCount,       codes::kDuplicateId,
      codes::kMissingConceptRef, codes::kDanglingTaskRef,     codes::kDanglingMethodRef,
      codes::kMethodTaskMismatch, codes::kCyclicHierarchy,    codes::kMissingMethod,
      codes::kDanglingState,     codes::kNondeterministicFsm, codes::kUnreachableState,
      codes::kTerminalHasTransitions, codes::kEmptyConditionLabel};
  return all;
}

bool ValidationReport::has(std::string_view code) const {
  return std::any_of(errors.begin(), errors.end(), [&](const auto& e) { return e.code == code; });
}

std::vector<std::string> ValidationReport::codes() const {
  std::vector<std::string> out;
  for (const auto& e : errors) out.push_back(e.code);
  return out;
}

json ValidationReport::to_json() const {
  json errs = json::array();
  for (const auto& e : errors) errs.push_back({{"code", e.code}, {"path", e.path}, {"message", e.message}});
  return {{"ok", ok()}, {"errors", std::move(errs)}};
}

std::string ValidationReport::to_text() const {
  if (ok()) return "ok\n";
  std::ostringstream out;
  for (const auto& e : errors) out << e.code << " " << e.path << ": " << e.message << "\n";
  return out.str();
}

namespace {

std::string transition_path(const Method& m, const Transition& t) {
  return "methods[" + m.id + "].transitions[" + t.from_state + " -" + t.condition_label + "-> " +
         t.to_state + "]";
}

class Validator {
 public:
  explicit Validator(const TmkModel& model) : model_(model) {}

  ValidationReport run() {
    check_tasks_present();
    check_unique_ids();
    check_concept_refs();
    check_task_refs();
    check_hierarchy();
    for (const auto& m : model_.methods) check_method(m);
    std::sort(report_.errors.begin(), report_.errors.end());
    report_.errors.erase(std::unique(report_.errors.begin(), report_.errors.end()), report_.errors.end());
    return std::move(report_);
  }

 private:
  void add(std::string_view code, std::string path, std::string message) {
    report_.errors.push_back({std::string(code), std::move(path), std::move(message)});
  }

  void check_tasks_present() {
    if (model_.tasks.empty()) {
      add(codes::kNoTasks, "tasks", "model declares no tasks");
      return;
    }
    std::vector<std::string> tops;
    for (const auto& t : model_.tasks) {
      if (t.top_level) tops.push_back(t.id);
    }
    if (tops.size() != 1) {
      std::sort(tops.begin(), tops.end());
      add(codes::kTopLevelCount, "tasks",
          "exactly one top-level task required, found " + std::to_string(tops.size()) +
              (tops.empty() ? "" : " (" + text::join(tops, ", ") + ")"));
    }
  }

  template <typename T>
  void unique_in(const std::vector<T>& items, const std::string& ns) {
    std::map<std::string, int> counts;
    for (const auto& x : items) ++counts[x.id];
    for (const auto& [id, n] : counts) {
      if (n > 1) add(codes::kDuplicateId, ns + "[" + id + "]", "id declared " + std::to_string(n) + " times");
    }
  }

  void check_unique_ids() {
    unique_in(model_.tasks, "tasks");
    unique_in(model_.methods, "methods");
    unique_in(model_.knowledge, "knowledge");
    for (const auto& m : model_.methods) unique_in(m.states, "methods[" + m.id + "].states");
  }

  void concept_ref(const std::string& ref, const std::string& path) {
    if (!model_.find_concept(ref)) add(codes::kMissingConceptRef, path, "unknown concept \"" + ref + "\"");
  }

  void check_concept_refs() {
    for (const auto& t : model_.tasks) {
      for (const auto& g : t.givens) concept_ref(g, "tasks[" + t.id + "].givens");
      for (const auto& m : t.makes) concept_ref(m, "tasks[" + t.id + "].makes");
    }
    for (const auto& c : model_.knowledge) {
      for (const auto& r : c.relations) {
        concept_ref(r.target, "knowledge[" + c.id + "].relations[" + r.relation_name + "]");
      }
    }
  }

  void check_task_refs() {
    for (const auto& t : model_.tasks) {
      const std::string base = "tasks[" + t.id + "]";
      for (const auto& s : t.subtasks) {
        if (!model_.find_task(s)) add(codes::kDanglingTaskRef, base + ".subtasks", "unknown task \"" + s + "\"");
      }
      for (const auto& mid : t.by_methods) {
        const Method* m = model_.find_method(mid);
        if (!m) {
          add(codes::kDanglingMethodRef, base + ".by_methods", "unknown method \"" + mid + "\"");
        } else if (m->implements != t.id) {
          add(codes::kMethodTaskMismatch, base + ".by_methods",
              "method \"" + mid + "\" implements \"" + m->implements + "\", not \"" + t.id + "\"");
        }
      }
      if (!t.is_leaf() && t.by_methods.empty()) {
        add(codes::kMissingMethod, base, "task has subtasks but no method");
      }
    }
    for (const auto& m : model_.methods) {
      if (!model_.find_task(m.implements)) {
        add(codes::kDanglingTaskRef, "methods[" + m.id + "].implements", "unknown task \"" + m.implements + "\"");
      }
      for (const auto& s : m.states) {
        if (s.subtask && !model_.find_task(*s.subtask)) {
          add(codes::kDanglingTaskRef, "methods[" + m.id + "].states[" + s.id + "].subtask",
              "unknown task \"" + *s.subtask + "\"");
        }
      }
    }
  }

  // Tarjan SCC over the subtask graph; one error per cycle, anchored at its
  // smallest task id so the report is independent of declaration order.
  void check_hierarchy() {
    std::map<std::string, std::vector<std::string>> edges;
    for (const auto& t : model_.tasks) {
      auto& out = edges[t.id];
      for (const auto& s : t.subtasks) {
        if (model_.find_task(s)) out.push_back(s);
      }
      std::sort(out.begin(), out.end());
    }
    std::map<std::string, int> index, low;
    std::set<std::string> on_stack;
    std::vector<std::string> stack;
    int counter = 0;
    std::function<void(const std::string&)> strongconnect = [&](const std::string& v) {
      index[v] = low[v] = counter++;
      stack.push_back(v);
      on_stack.insert(v);
      for (const auto& w : edges[v]) {
        if (!index.count(w)) {
          strongconnect(w);
          low[v] = std::min(low[v], low[w]);
        } else if (on_stack.count(w)) {
          low[v] = std::min(low[v], index[w]);
        }
      }
      if (low[v] != index[v]) return;
      std::vector<std::string> component;
      std::string w;
      do {
        w = stack.back();
        stack.pop_back();
        on_stack.erase(w);
        component.push_back(w);
      } while (w != v);
      const auto& self = edges[v];
      bool self_loop = std::find(self.begin(), self.end(), v) != self.end();
      if (component.size() > 1 || self_loop) {
        std::sort(component.begin(), component.end());
        add(codes::kCyclicHierarchy, "tasks[" + component.front() + "]",
            "subtask cycle through " + text::join(component, ", "));
      }
    };
    for (const auto& [id, _] : edges) {
      if (!index.count(id)) strongconnect(id);
    }
  }

  void check_method(const Method& m) {
    const std::string base = "methods[" + m.id + "]";
    if (!m.find_state(m.start_state)) {
      add(codes::kDanglingState, base + ".start_state", "unknown state \"" + m.start_state + "\"");
    }
    std::map<std::pair<std::string, std::string>, int> guards;
    for (const auto& t : m.transitions) {
      const std::string path = transition_path(m, t);
      if (!m.find_state(t.from_state)) add(codes::kDanglingState, path, "unknown from_state \"" + t.from_state + "\"");
      if (!m.find_state(t.to_state)) add(codes::kDanglingState, path, "unknown to_state \"" + t.to_state + "\"");
      if (text::trim(t.condition_label).empty()) add(codes::kEmptyConditionLabel, path, "condition label is empty");
      ++guards[{t.from_state, t.condition_label}];
      if (const State* from = m.find_state(t.from_state); from && from->terminal) {
        add(codes::kTerminalHasTransitions, base + ".states[" + from->id + "]",
            "terminal state has an outgoing transition");
      }
    }
    for (const auto& [guard, n] : guards) {
      if (n > 1) {
        add(codes::kNondeterministicFsm, base + ".states[" + guard.first + "]",
            std::to_string(n) + " transitions share condition \"" + guard.second + "\"");
      }
    }
    if (!m.find_state(m.start_state)) return;
    std::set<std::string> reached{m.start_state};
    std::vector<std::string> frontier{m.start_state};
    while (!frontier.empty()) {
      std::string s = std::move(frontier.back());
      frontier.pop_back();
      for (const auto& t : m.transitions) {
        if (t.from_state == s && m.find_state(t.to_state) && reached.insert(t.to_state).second) {
          frontier.push_back(t.to_state);
        }
      }
    }
    for (const auto& s : m.states) {
      if (!reached.count(s.id)) {
        add(codes::kUnreachableState, base + ".states[" + s.id + "]",
            "not reachable from start state \"" + m.start_state + "\"");
      }
    }
  }

  const TmkModel& model_;
  ValidationReport report_;
};

}  // namespace

ValidationReport validate(const TmkModel& model) { return Validator(model).run(); }

// ---------------------------------------------------------------------------
// Documents

std::string_view to_string(Kind kind) noexcept {
  switch (kind) {
    case Kind::task: return "task";
    case Kind::method: return "method";
    case Kind::knowledge: return "knowledge";
  }
  return "task";
}

std::optional<Kind> parse_kind(std::string_view s) noexcept {
  if (s == "task") return Kind::task;
  if (s == "method") return Kind::method;
  if (s == "knowledge") return Kind::knowledge;
  return std::nullopt;
}

std::string DocumentKey::str() const { return std::string(to_string(kind)) + ":" + element_id; }

namespace {

template <typename Lookup>
std::string names_of(const std::vector<std::string>& ids, Lookup&& lookup) {
  if (ids.empty()) return "none";
  std::vector<std::string> names;
  for (const auto& id : ids) {
    const auto* x = lookup(id);
    names.push_back(x ? x->name : id);
  }
  return text::join(names, ", ");
}

std::string task_body(const TmkModel& model, const Task& t) {
  auto concept_of = [&](const std::string& id) { return model.find_concept(id); };
  auto task_of = [&](const std::string& id) { return model.find_task(id); };
  auto method_of = [&](const std::string& id) { return model.find_method(id); };
  std::ostringstream out;
  if (!t.description.empty()) out << t.description << "\n";
  out << "Givens: " << names_of(t.givens, concept_of) << "\n"
      << "Makes: " << names_of(t.makes, concept_of) << "\n"
      << "Subtasks: " << names_of(t.subtasks, task_of) << "\n"
      << "Methods: " << names_of(t.by_methods, method_of);
  if (t.top_level) out << "\nTop-level task of " << model.agent_name;
  return out.str();
}

std::string method_body(const TmkModel& model, const Method& m) {
  auto state_name = [&](const std::string& id) {
    const State* s = m.find_state(id);
    return s ? s->name : id;
  };
  std::ostringstream out;
  if (!m.description.empty()) out << m.description << "\n";
  const Task* task = model.find_task(m.implements);
  out << "Implements: " << (task ? task->name : m.implements) << "\n"
      << "Start state: " << state_name(m.start_state) << "\n"
      << "States: ";
  for (std::size_t i = 0; i < m.states.size(); ++i) {
    const auto& s = m.states[i];
    if (i) out << "; ";
    out << s.name;
    if (s.subtask) {
      const Task* sub = model.find_task(*s.subtask);
      out << " (subtask " << (sub ? sub->name : *s.subtask) << ")";
    }
    if (s.terminal) out << " (terminal)";
  }
  out << "\nTransitions: ";
  for (std::size_t i = 0; i < m.transitions.size(); ++i) {
    const auto& t = m.transitions[i];
    if (i) out << "; ";
    out << state_name(t.from_state) << " -[" << t.condition_label << "]-> " << state_name(t.to_state);
  }
  return out.str();
}

std::string concept_body(const TmkModel& model, const Concept& c) {
  std::ostringstream out;
  if (!c.definition.empty()) out << c.definition << "\n";
  out << "Relations: ";
  if (c.relations.empty()) out << "none";
  for (std::size_t i = 0; i < c.relations.size(); ++i) {
    const auto& r = c.relations[i];
    const Concept* target = model.find_concept(r.target);
    if (i) out << "; ";
    out << r.relation_name << " " << (target ? target->name : r.target);
  }
  return out.str();
}

}  // namespace

std::vector<Document> render_documents(const TmkModel& model, const KindSet& kinds) {
  if (kinds.empty()) throw Error(Errc::EmptyKindSet, "render_documents needs at least one kind");
  std::vector<Document> docs;
  if (kinds.count(Kind::task)) {
    for (const auto& t : model.tasks) docs.push_back({t.id, Kind::task, t.name, task_body(model, t)});
  }
  if (kinds.count(Kind::method)) {
    for (const auto& m : model.methods) docs.push_back({m.id, Kind::method, m.name, method_body(model, m)});
  }
  if (kinds.count(Kind::knowledge)) {
    for (const auto& c : model.knowledge) {
      docs.push_back({c.id, Kind::knowledge, c.name, concept_body(model, c)});
    }
  }
  std::sort(docs.begin(), docs.end(),
            [](const Document& a, const Document& b) { return a.key() < b.key(); });
  return docs;
}

}  // namespace asktmk::tmk
