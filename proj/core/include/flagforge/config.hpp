#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace flagforge {

enum class CompilerPolicy { kNewest, kPrompt, kExplicit };

struct GlobalConfig {
  std::filesystem::path repo_root = "flagforge-repo";
  CompilerPolicy compiler_policy = CompilerPolicy::kNewest;
  std::string compiler;  // explicit selection
  double trust_threshold = 0.05;
  std::optional<std::uint64_t> seed;
  std::string server_url;
  std::vector<std::filesystem::path> flagspace_dirs;
  std::vector<std::filesystem::path> probe_paths;

  /// Defaults, then repo_root/config.json, then FLAGFORGE_* variables.
  static GlobalConfig load(const std::optional<std::filesystem::path>& repo_override = std::nullopt);
  void validate() const;
};

}  // namespace flagforge
