#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace asktmk {

enum class Errc {
  MalformedInput,
  SchemaViolation,
  EmptyKindSet,
  EmptyText,
  DimensionMismatch,
  DuplicateKey,
  EmptyCorpus,
  InvalidArgument,
  MissingBinding,
  UnknownBinding,
  InvalidTemplate,
  ProviderUnavailable,
  ProviderError,
  BudgetExceeded,
  EmptyQuestion,
  UnknownMethod,
  UnknownTask,
  StepBoundExceeded,
  UnresolvedChoice,
  MalformedBank,
  UnknownCategory,
  MalformedRatings,
  UnratedRecord,
  InvalidModel,
  InvalidConfig,
  PortInUse,
  Io,
};

std::string_view to_string(Errc code) noexcept;

/// Pipeline stage an error is attributed to; empty when not raised inside ask().
inline constexpr std::string_view kStageClassify = "classify";
inline constexpr std::string_view kStageLocalize = "localize";
inline constexpr std::string_view kStageGenerate = "generate";

/// The single exception type thrown by the library. `code` is the contract
/// error name; `reason` is an optional finer-grained code (for example the
/// validation code behind a SchemaViolation); `details` carries structured
/// context such as an HTTP status or partial refinement steps.
class Error : public std::runtime_error {
 public:
  Error(Errc code, std::string message, nlohmann::json details = nlohmann::json::object())
      : std::runtime_error(std::move(message)), code_(code), details_(std::move(details)) {}

  Errc code() const noexcept { return code_; }
  std::string_view code_name() const noexcept { return to_string(code_); }

  const std::string& reason() const noexcept { return reason_; }
  Error& with_reason(std::string reason) {
    reason_ = std::move(reason);
    return *this;
  }

  const std::string& stage() const noexcept { return stage_; }
  Error& with_stage(std::string_view stage) {
    stage_ = std::string(stage);
    return *this;
  }

  const nlohmann::json& details() const noexcept { return details_; }
  nlohmann::json& details() noexcept { return details_; }

  /// `{code, reason?, stage?, message, details?}`
  nlohmann::json to_json() const;

 private:
  Errc code_;
  std::string reason_;
  std::string stage_;
  nlohmann::json details_;
};

}  // namespace asktmk
