#include "flagforge/failure.hpp"

#include "flagforge/error.hpp"

namespace flagforge {

std::string_view to_string(FailureKind kind) {
  switch (kind) {
    case FailureKind::kCompilerCrash:
      return "COMPILER_CRASH";
    case FailureKind::kCompileError:
      return "COMPILE_ERROR";
    case FailureKind::kRuntimeCrash:
      return "RUNTIME_CRASH";
    case FailureKind::kWrongOutput:
      return "WRONG_OUTPUT";
    case FailureKind::kTimeout:
      return "TIMEOUT";
  }
  return "UNKNOWN";
}

FailureKind parse_failure_kind(std::string_view text) {
  for (auto kind : {FailureKind::kCompilerCrash, FailureKind::kCompileError, FailureKind::kRuntimeCrash,
                    FailureKind::kWrongOutput, FailureKind::kTimeout}) {
    if (to_string(kind) == text) return kind;
  }
  throw ContractError("unknown failure kind '" + std::string(text) + "'");
}

}  // namespace flagforge
