#include "asktmk/error.hpp"

namespace asktmk {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::MalformedInput: return "MalformedInput";
    case Errc::SchemaViolation: return "SchemaViolation";
    case Errc::EmptyKindSet: return "EmptyKindSet";
    case Errc::EmptyText: return "EmptyText";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::DuplicateKey: return "DuplicateKey";
    case Errc::EmptyCorpus: return "EmptyCorpus";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::MissingBinding: return "MissingBinding";
    case Errc::UnknownBinding: return "UnknownBinding";
    case Errc::InvalidTemplate: return "InvalidTemplate";
    case Errc::ProviderUnavailable: return "ProviderUnavailable";
    case Errc::ProviderError: return "ProviderError";
    case Errc::BudgetExceeded: return "BudgetExceeded";
    case Errc::EmptyQuestion: return "EmptyQuestion";
    case Errc::UnknownMethod: return "UnknownMethod";
    case Errc::UnknownTask: return "UnknownTask";
    case Errc::StepBoundExceeded: return "StepBoundExceeded";
    case Errc::UnresolvedChoice: return "UnresolvedChoice";
    case Errc::MalformedBank: return "MalformedBank";
    case Errc::UnknownCategory: return "UnknownCategory";
    case Errc::MalformedRatings: return "MalformedRatings";
    case Errc::UnratedRecord: return "UnratedRecord";
    case Errc::InvalidModel: return "InvalidModel";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::PortInUse: return "PortInUse";
    case Errc::Io: return "Io";
  }
  return "Unknown";
}

nlohmann::json Error::to_json() const {
  nlohmann::json out = {{"code", std::string(code_name())}, {"message", what()}};
  if (!reason_.empty()) out["reason"] = reason_;
  if (!stage_.empty()) out["stage"] = stage_;
  if (!details_.is_null() && !details_.empty()) out["details"] = details_;
  return out;
}

}  // namespace asktmk
