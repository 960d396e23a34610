#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "flagforge/failure.hpp"
#include "flagforge/flagspace.hpp"
#include "flagforge/util.hpp"
#include "flagforge/workload.hpp"

namespace flagforge {

struct CompilerEnv {
  std::string id;
  std::string family;   // gcc, clang
  std::string version;  // dotted
  std::filesystem::path executable;
  std::int64_t detected_at = 0;
  bool synthetic = false;

  static CompilerEnv synthetic_env(std::string family = "gcc", std::string version = "4.9.2");
  bool operator==(const CompilerEnv&) const = default;
};

Json to_json(const CompilerEnv& env);
CompilerEnv compiler_env_from_json(const Json& doc);

/// Probes files or directories for gcc/clang executables (gcc, gcc-11,
/// clang-14, ...), queries their versions and deduplicates by resolved
/// path and version. Sorted by family then ascending version.
std::vector<CompilerEnv> detect_compilers(const std::vector<std::filesystem::path>& probe_paths);

/// Directories from $PATH.
std::vector<std::filesystem::path> default_probe_paths();

struct RunOutcome {
  double wall_time = 0.0;
  int exit_status = 0;
  std::optional<bool> output_ok;  // nullopt when not validated or exit_status != 0
  std::optional<FailureKind> failure;
  std::int64_t started_ns = 0;
  std::int64_t finished_ns = 0;
  bool operator==(const RunOutcome&) const = default;
};

struct PipelineResult {
  bool compile_ok = false;
  double compile_time = 0.0;
  std::int64_t binary_size = 0;
  std::int64_t object_size = 0;
  std::string binary_md5;
  std::vector<RunOutcome> runs;
  std::optional<FailureKind> failure;
  bool operator==(const PipelineResult&) const = default;

  std::vector<double> run_times() const;
};

Json to_json(const PipelineResult& result);

struct PipelineRequest {
  std::string workload;
  std::string dataset;  // empty: no dataset
  std::string command_key;
  FlagAssignment assignment;
  CompilerEnv env;
  int repetitions = 1;
  std::chrono::duration<double> timeout{60.0};
  bool compile_only = false;
  std::uint64_t noise_seed = 0;  // synthetic noise stream
};

enum class ValidationResult { kMatch, kMismatch, kSkipped };

/// Exact digest comparison by default; numeric comparison applies a
/// per-value relative tolerance.
ValidationResult validate_output(std::string_view produced, const std::optional<OutputReference>& reference);

/// Evaluates a synthetic spec for a rendered command line. Pure function of
/// its inputs; noise draws come from `noise_seed`.
PipelineResult evaluate_synthetic(const SyntheticSpec& spec, const std::string& workload_id,
                                  const std::vector<std::string>& tokens, const DatasetMeta* dataset,
                                  const CompilerEnv& env, int repetitions, bool compile_only,
                                  std::uint64_t noise_seed);

class Pipeline {
 public:
  Pipeline(const WorkloadRegistry& registry, std::filesystem::path scratch_root);

  void set_keep_artifacts(bool keep) { keep_ = keep; }

  /// Pipeline failures are reported inside the result; throws only on
  /// registry or contract violations.
  PipelineResult execute(const PipelineRequest& request, const FlagSpace& space) const;

 private:
  PipelineResult execute_real(const PipelineRequest& request, const WorkloadMeta& workload,
                              const DatasetMeta* dataset, const std::string& flags,
                              const std::map<std::string, std::string>& env_vars) const;

  const WorkloadRegistry& registry_;
  std::filesystem::path scratch_root_;
  bool keep_ = false;
};

}  // namespace flagforge
