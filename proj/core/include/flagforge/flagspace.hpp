#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "flagforge/util.hpp"
#include "flagforge/version.hpp"

namespace flagforge {

struct BooleanForms {
  std::string on_form;   // "-fivopts"
  std::string off_form;  // "-fno-ivopts"
};

/// Integer flag rendered through a template, NAME and VALUE substituted:
/// "--param NAME=VALUE".
struct ParametricForm {
  std::int64_t min = 0;
  std::int64_t max = 0;
  std::string render_template = "--param NAME=VALUE";
};

struct ChoiceForm {
  std::vector<std::string> values;
  std::string render_template;  // "-fira-algorithm=VALUE"
};

/// Integer exposed to the run environment rather than the command line.
struct EnvParamForm {
  std::string variable;
  std::int64_t min = 0;
  std::int64_t max = 0;
};

enum class FlagTag { kBase, kCpu, kParametric };

struct FlagDescriptor {
  std::string name;
  std::variant<BooleanForms, ParametricForm, ChoiceForm, EnvParamForm> kind;
  std::set<FlagTag> tags;
  VersionRange versions;

  bool is_boolean() const { return std::holds_alternative<BooleanForms>(kind); }
  bool is_parametric() const { return std::holds_alternative<ParametricForm>(kind); }
  bool is_choice() const { return std::holds_alternative<ChoiceForm>(kind); }
  bool is_env() const { return std::holds_alternative<EnvParamForm>(kind); }
  bool has_tag(FlagTag t) const { return tags.contains(t); }
};

/// A selected value: boolean on/off, an integer, or a choice string.
using FlagValue = std::variant<bool, std::int64_t, std::string>;

struct FlagAssignment {
  std::string base_level;
  std::map<std::string, FlagValue> values;
  std::map<std::string, std::int64_t> env_values;

  bool operator==(const FlagAssignment&) const = default;

  /// Copy with `flag` removed from values/env_values.
  FlagAssignment without(const std::string& flag) const;
  std::vector<std::string> flag_names() const;
};

class FlagSpace {
 public:
  FlagSpace() = default;
  FlagSpace(std::string compiler_id, VersionRange versions, std::vector<std::string> base_levels,
            std::vector<FlagDescriptor> descriptors);

  const std::string& compiler_id() const noexcept { return compiler_id_; }
  const VersionRange& versions() const noexcept { return versions_; }
  const std::vector<std::string>& base_levels() const noexcept { return base_levels_; }
  const std::vector<FlagDescriptor>& descriptors() const noexcept { return descriptors_; }

  const FlagDescriptor* find(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;  // throws when absent
  bool has_base_level(std::string_view level) const;
  std::size_t boolean_count() const;

  /// Throws ContractError when a key is unknown, a value has the wrong kind,
  /// or a parametric value is out of range.
  void validate(const FlagAssignment& assignment) const;

 private:
  std::string compiler_id_;
  VersionRange versions_;
  std::vector<std::string> base_levels_;
  std::vector<FlagDescriptor> descriptors_;
  std::map<std::string, std::size_t, std::less<>> by_name_;
};

struct SamplingPolicy {
  double include_probability = 0.25;
  bool enable_parametric = false;
  bool enable_cpu = false;
  bool enable_base = false;
  std::uint64_t seed = 0;
};

/// Parses a description file without version filtering.
FlagSpace parse_flagspace(const Json& doc);
Json flagspace_to_json(const FlagSpace& space);

/// Finds the description file for `compiler_id` whose range covers
/// `version` among `search_dirs` and keeps the descriptors valid at
/// `version`, preserving order.
FlagSpace load_flagspace(std::string_view compiler_id, std::string_view version,
                         const std::vector<std::filesystem::path>& search_dirs);

/// Bundled description directories (build tree, then install prefix).
std::vector<std::filesystem::path> default_flagspace_dirs();

FlagAssignment sample_random(const FlagSpace& space, const SamplingPolicy& policy);

/// Space-ordered, single-space separated; env values are not rendered.
std::string render(const FlagAssignment& assignment, const FlagSpace& space);
/// The rendered tokens as a list ("--param x=5" stays one entry).
std::vector<std::string> render_tokens(const FlagAssignment& assignment, const FlagSpace& space);

FlagAssignment parse(std::string_view command, const FlagSpace& space);

/// Environment assignments for the run command.
std::map<std::string, std::string> render_env(const FlagAssignment& assignment, const FlagSpace& space);

Json assignment_to_json(const FlagAssignment& assignment);
FlagAssignment assignment_from_json(const Json& doc);

std::string_view to_string(FlagTag tag);

}  // namespace flagforge
