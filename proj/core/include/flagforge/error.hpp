#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace flagforge {

/// Violated precondition or malformed input. The CLI maps this to exit code 1.
class ContractError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The environment cannot satisfy the request: no compiler, unreachable
/// server, unwritable repository. The CLI maps this to exit code 2.
class EnvironmentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Unparseable flag text; `position` is the zero-based token index and
/// `offset` the character offset of the offending token.
class FlagParseError : public ContractError {
 public:
  FlagParseError(const std::string& token, std::size_t position, std::size_t offset)
      : ContractError("unknown flag token '" + token + "' at token " + std::to_string(position) +
                      " (offset " + std::to_string(offset) + ")"),
        token_(token),
        position_(position),
        offset_(offset) {}

  const std::string& token() const noexcept { return token_; }
  std::size_t position() const noexcept { return position_; }
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::string token_;
  std::size_t position_;
  std::size_t offset_;
};

}  // namespace flagforge
