#pragma once

// Derivational knowledge traces: a symbolic walk through the task/method
// hierarchy for one instance, and explanations grounded in that walk.

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "asktmk/genai.hpp"
#include "asktmk/tmk.hpp"

namespace asktmk::trace {

inline constexpr std::size_t kDefaultStepBound = 1000;

struct VisitedState {
  std::string state_id;
  std::string taken_label;  // empty when the walk stopped here

  bool operator==(const VisitedState&) const = default;
};

struct TraceNode {
  std::string task_id;
  std::optional<std::string> method_id;
  std::vector<VisitedState> visited_states;
  std::vector<TraceNode> children;  // one per subtask-bearing visited state, in visit order

  bool operator==(const TraceNode&) const = default;
};

struct DerivationalTrace {
  TraceNode root;
  std::map<std::string, std::string> instance_bindings;  // concept id -> value, carried as labels

  std::size_t node_count() const;
  std::size_t visited_state_count() const;
  bool operator==(const DerivationalTrace&) const = default;
};

struct TraceOptions {
  std::map<std::string, std::string> bindings;         // concept id -> value
  std::map<std::string, std::string> method_selector;  // task id -> method id
  std::map<std::string, std::string> path_selector;    // state id -> condition label
  std::size_t step_bound = kDefaultStepBound;
};

/// Walks from `task_id`: picks a method (selector, else smallest method id),
/// follows the FSM from its start state (selector, else smallest label),
/// expanding each state's subtask recursively. Stops at terminal states and
/// states without outgoing transitions.
/// Throws Error{UnknownTask}, Error{StepBoundExceeded} when more than
/// `step_bound` states would be visited, and Error{UnresolvedChoice} when a
/// selector names a method or label that is not available, or a binding
/// names an unknown concept.
DerivationalTrace derive_trace(const tmk::TmkModel& model, std::string_view task_id, const TraceOptions& options = {});

/// Indented outline, one line per task and per visited state.
std::string to_outline(const DerivationalTrace& trace, const tmk::TmkModel& model);

nlohmann::json to_json(const DerivationalTrace& trace);
/// Throws Error{MalformedInput}.
DerivationalTrace trace_from_json(const nlohmann::json& j);

/// Context documents for the answer prompt: one per trace node, titled with
/// the task name, body = that node's slice of the outline.
std::vector<genai::ContextDocument> trace_context(const DerivationalTrace& trace, const tmk::TmkModel& model);

/// Feeds the trace as the context block of the answer prompt and returns
/// the provider's text. Throws Error{EmptyQuestion}; provider errors propagate.
std::string explain_trace(const DerivationalTrace& trace, const tmk::TmkModel& model, std::string_view question,
                          genai::CompletionProvider& provider, const genai::CompletionRequest& settings = {});

}  // namespace asktmk::trace
