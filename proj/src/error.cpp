#include "slicevlp/error.hpp"

namespace slicevlp {

const char* category_name(ErrorCategory c) noexcept {
  switch (c) {
    case ErrorCategory::kDimension: return "dimension";
    case ErrorCategory::kContract: return "contract";
    case ErrorCategory::kConfig: return "config";
    case ErrorCategory::kInput: return "input";
    case ErrorCategory::kCapacity: return "capacity";
    case ErrorCategory::kBatch: return "batch";
    case ErrorCategory::kFormat: return "format";
    case ErrorCategory::kLoad: return "load";
    case ErrorCategory::kCompatibility: return "compatibility";
    case ErrorCategory::kDependency: return "dependency";
    case ErrorCategory::kEvaluation: return "evaluation";
  }
  return "unknown";
}

}  // namespace slicevlp
