#include "flagforge/config.hpp"

#include <cstdlib>

#include "flagforge/error.hpp"
#include "flagforge/util.hpp"

namespace flagforge {
namespace {

std::optional<std::string> env(const char* name) {
  const char* v = std::getenv(name);
  if (!v || !*v) return std::nullopt;
  return std::string(v);
}

std::uint64_t parse_seed(const std::string& text) {
  try {
    std::size_t used = 0;
    auto v = std::stoull(text, &used, 0);
    if (used != text.size()) throw ContractError("");
    return v;
  } catch (const std::exception&) {
    throw ContractError("invalid seed '" + text + "'");
  }
}

}  // namespace

GlobalConfig GlobalConfig::load(const std::optional<std::filesystem::path>& repo_override) {
  GlobalConfig c;
  if (repo_override) c.repo_root = *repo_override;
  else if (auto repo = env("FLAGFORGE_REPO")) c.repo_root = *repo;

  auto file = c.repo_root / "config.json";
  if (std::filesystem::exists(file)) {
    auto j = read_json(file);
    try {
      auto policy = j.value("compiler_policy", std::string("newest"));
      if (policy == "newest") c.compiler_policy = CompilerPolicy::kNewest;
      else if (policy == "prompt") c.compiler_policy = CompilerPolicy::kPrompt;
      else if (policy == "explicit") c.compiler_policy = CompilerPolicy::kExplicit;
      else throw ContractError("unknown compiler_policy '" + policy + "' in " + file.string());
      c.compiler = j.value("compiler", std::string());
      c.trust_threshold = j.value("trust_threshold", c.trust_threshold);
      if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
      c.server_url = j.value("server_url", std::string());
      for (const auto& d : j.value("flagspace_dirs", std::vector<std::string>{})) c.flagspace_dirs.emplace_back(d);
      for (const auto& d : j.value("probe_paths", std::vector<std::string>{})) c.probe_paths.emplace_back(d);
    } catch (const Json::exception& e) {
      throw ContractError("malformed " + file.string() + ": " + e.what());
    }
  }
  if (auto server = env("FLAGFORGE_SERVER")) c.server_url = *server;
  if (auto seed = env("FLAGFORGE_SEED")) c.seed = parse_seed(*seed);
  c.validate();
  return c;
}

void GlobalConfig::validate() const {
  if (!(trust_threshold > 0 && trust_threshold < 1)) throw ContractError("trust_threshold must lie in (0, 1)");
  if (compiler_policy == CompilerPolicy::kExplicit && compiler.empty()) {
    throw ContractError("compiler_policy 'explicit' needs a compiler");
  }
  if (repo_root.empty()) throw ContractError("repository root is empty");
}

}  // namespace flagforge
