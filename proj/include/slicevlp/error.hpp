#pragma once

#include <stdexcept>
#include <string>

namespace slicevlp {

// Broad failure classes. The CLI maps each to a distinct exit code.
enum class ErrorCategory {
  kDimension,
  kContract,
  kConfig,
  kInput,
  kCapacity,
  kBatch,
  kFormat,
  kLoad,
  kCompatibility,
  kDependency,
  kEvaluation,
};

const char* category_name(ErrorCategory c) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& message)
      : std::runtime_error(message), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

#define SLICEVLP_DEFINE_ERROR(Name, Cat)                        \
  class Name : public Error {                                   \
   public:                                                      \
    explicit Name(const std::string& m) : Error(Cat, m) {}      \
  };

SLICEVLP_DEFINE_ERROR(DimensionError, ErrorCategory::kDimension)
SLICEVLP_DEFINE_ERROR(ContractError, ErrorCategory::kContract)
SLICEVLP_DEFINE_ERROR(ConfigError, ErrorCategory::kConfig)
SLICEVLP_DEFINE_ERROR(InputError, ErrorCategory::kInput)
SLICEVLP_DEFINE_ERROR(CapacityError, ErrorCategory::kCapacity)
SLICEVLP_DEFINE_ERROR(BatchError, ErrorCategory::kBatch)
SLICEVLP_DEFINE_ERROR(FormatError, ErrorCategory::kFormat)
SLICEVLP_DEFINE_ERROR(LoadError, ErrorCategory::kLoad)
SLICEVLP_DEFINE_ERROR(CompatibilityError, ErrorCategory::kCompatibility)
SLICEVLP_DEFINE_ERROR(DependencyError, ErrorCategory::kDependency)
SLICEVLP_DEFINE_ERROR(EvaluationError, ErrorCategory::kEvaluation)

#undef SLICEVLP_DEFINE_ERROR

}  // namespace slicevlp
