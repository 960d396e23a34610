#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace flagforge {

enum class FailureKind { kCompilerCrash, kCompileError, kRuntimeCrash, kWrongOutput, kTimeout };

std::string_view to_string(FailureKind kind);
/// Accepts the upper-case wire names (COMPILER_CRASH, ...).
FailureKind parse_failure_kind(std::string_view text);

inline bool is_compile_failure(FailureKind kind) {
  return kind == FailureKind::kCompilerCrash || kind == FailureKind::kCompileError;
}

}  // namespace flagforge
