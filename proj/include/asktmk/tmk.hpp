#pragma once

// Task-Method-Knowledge self-model: data types, JSON interchange, semantic
// validation and the document rendering consumed by retrieval.

#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace asktmk::tmk {

struct Relation {
  std::string relation_name;
  std::string target;  // concept id

  bool operator==(const Relation&) const = default;
};

struct Concept {
  std::string id;
  std::string name;
  std::string definition;
  std::vector<Relation> relations;

  bool operator==(const Concept&) const = default;
};

struct Task {
  std::string id;
  std::string name;
  std::string description;
  std::vector<std::string> givens;      // concept ids
  std::vector<std::string> makes;       // concept ids
  std::vector<std::string> subtasks;    // task ids
  std::vector<std::string> by_methods;  // method ids
  bool top_level = false;

  bool is_leaf() const noexcept { return subtasks.empty(); }
  bool operator==(const Task&) const = default;
};

struct State {
  std::string id;
  std::string name;
  std::optional<std::string> subtask;  // task id
  bool terminal = false;

  bool operator==(const State&) const = default;
};

struct Transition {
  std::string from_state;
  std::string to_state;
  std::string condition_label;  // opaque guard text

  bool operator==(const Transition&) const = default;
};

struct Method {
  std::string id;
  std::string name;
  std::string description;
  std::string implements;  // task id
  std::vector<State> states;
  std::vector<Transition> transitions;
  std::string start_state;

  const State* find_state(std::string_view state_id) const;
  /// Outgoing transitions of `state_id`, ascending by condition label.
  std::vector<const Transition*> outgoing(std::string_view state_id) const;

  bool operator==(const Method&) const = default;
};

struct TmkModel {
  std::string agent_name;
  std::string version;
  std::vector<Task> tasks;
  std::vector<Method> methods;
  std::vector<Concept> knowledge;

  const Task* find_task(std::string_view id) const;
  const Method* find_method(std::string_view id) const;
  const Concept* find_concept(std::string_view id) const;
  /// The unique top-level task, or nullptr when the model has none or several.
  const Task* top_level_task() const;

  bool operator==(const TmkModel&) const = default;
};

// ---------------------------------------------------------------------------
// Interchange

/// Parses the JSON interchange format. Structural checks only: required
/// fields, field types, unknown keys, at least one task, duplicate ids.
/// Throws Error{MalformedInput} on syntax errors and Error{SchemaViolation}
/// otherwise; duplicate ids carry reason DUPLICATE_ID.
TmkModel parse_model(std::string_view bytes);
TmkModel load_model_file(const std::string& path);

nlohmann::json to_json(const TmkModel& model);
std::string serialize_model(const TmkModel& model, int indent = 2);

// ---------------------------------------------------------------------------
// Validation

namespace codes {
inline constexpr std::string_view kNoTasks = "NO_TASKS";
inline constexpr std::string_view kTopLevelCount = "TOP_LEVEL_COUNT";
inline constexpr std::string_view kDuplicateId = "DUPLICATE_ID";
inline constexpr std::string_view kMissingConceptRef = "MISSING_CONCEPT_REF";
inline constexpr std::string_view kDanglingTaskRef = "DANGLING_TASK_REF";
inline constexpr std::string_view kDanglingMethodRef = "DANGLING_METHOD_REF";
inline constexpr std::string_view kMethodTaskMismatch = "METHOD_TASK_MISMATCH";
inline constexpr std::string_view kCyclicHierarchy = "CYCLIC_HIERARCHY";
inline constexpr std::string_view kMissingMethod = "MISSING_METHOD";
inline constexpr std::string_view kDanglingState = "DANGLING_STATE";
inline constexpr std::string_view kNondeterministicFsm = "NONDETERMINISTIC_FSM";
inline constexpr std::string_view kUnreachableState = "UNREACHABLE_STATE";
inline constexpr std::string_view kTerminalHasTransitions = "TERMINAL_HAS_TRANSITIONS";
inline constexpr std::string_view kEmptyConditionLabel = "EMPTY_CONDITION_LABEL";
}  // namespace codes

/// Every validation code, in documentation order.
const std::vector<std::string_view>& all_validation_codes();

struct ValidationIssue {
  std::string code;
  std::string path;  // id-based, e.g. methods[m1].transitions[s1 -ok-> s2]
  std::string message;

  auto operator<=>(const ValidationIssue&) const = default;
};

struct ValidationReport {
  std::vector<ValidationIssue> errors;  // sorted, so independent of input order

  bool ok() const noexcept { return errors.empty(); }
  bool has(std::string_view code) const;
  std::vector<std::string> codes() const;
  nlohmann::json to_json() const;
  std::string to_text() const;
};

ValidationReport validate(const TmkModel& model);

// ---------------------------------------------------------------------------
// Documents

enum class Kind { task, method, knowledge };

std::string_view to_string(Kind kind) noexcept;
std::optional<Kind> parse_kind(std::string_view s) noexcept;

using KindSet = std::set<Kind>;
inline const KindSet kAllKinds{Kind::task, Kind::method, Kind::knowledge};
inline const KindSet kTaskAndMethod{Kind::task, Kind::method};

struct DocumentKey {
  Kind kind = Kind::task;
  std::string element_id;

  auto operator<=>(const DocumentKey&) const = default;
  std::string str() const;  // "task:t1"
};

struct Document {
  std::string element_id;
  Kind kind = Kind::task;
  std::string title;
  std::string body;

  DocumentKey key() const { return {kind, element_id}; }
  bool operator==(const Document&) const = default;
};

/// Version tag of the body layout below; recorded in corpus metadata.
inline constexpr std::string_view kDocumentTemplateId = "tmk-doc@v1";

/// One document per element whose kind is selected, ordered by (kind, id).
/// Body starts with the description/definition, then the structural
/// fields with references rendered as names. Throws Error{EmptyKindSet}.
std::vector<Document> render_documents(const TmkModel& model, const KindSet& kinds);

}  // namespace asktmk::tmk
