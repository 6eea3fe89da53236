#include "dil/core.hpp"

#include <cstdio>

namespace dil {

const char* to_string(Errc code) noexcept {
  switch (code) {
    case Errc::MalformedFile: return "MalformedFile";
    case Errc::IllegalBinValue: return "IllegalBinValue";
    case Errc::DuplicateRowId: return "DuplicateRowId";
    case Errc::EmptyEraAfterSampling: return "EmptyEraAfterSampling";
    case Errc::UnknownGroup: return "UnknownGroup";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::DegenerateInput: return "DegenerateInput";
    case Errc::DegenerateTarget: return "DegenerateTarget";
    case Errc::DegenerateImportance: return "DegenerateImportance";
    case Errc::TooFewEras: return "TooFewEras";
    case Errc::InsufficientRows: return "InsufficientRows";
    case Errc::InsufficientHistory: return "InsufficientHistory";
    case Errc::FeatureMismatch: return "FeatureMismatch";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::OutOfRange: return "OutOfRange";
    case Errc::InvalidAlpha: return "InvalidAlpha";
    case Errc::PathTooShort: return "PathTooShort";
    case Errc::SingularSystem: return "SingularSystem";
    case Errc::WindowNotCovered: return "WindowNotCovered";
    case Errc::TooFewMembers: return "TooFewMembers";
    case Errc::BudgetExceeded: return "BudgetExceeded";
  }
  return "Unknown";
}

std::string format_double(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

}  // namespace dil
