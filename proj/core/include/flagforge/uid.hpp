#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace flagforge {

/// Generates 16-lowercase-hex identifiers. Within one generator the
/// sequence never repeats: each uid is a bijective mix of (seed + counter).
class UidGenerator {
 public:
  explicit UidGenerator(std::uint64_t seed);

  /// Seeds from FLAGFORGE_SEED when set, else from std::random_device.
  static UidGenerator from_environment();

  std::string next();

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

bool is_uid(std::string_view text);

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace flagforge
