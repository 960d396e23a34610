#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "flagforge/failure.hpp"
#include "flagforge/flagspace.hpp"
#include "flagforge/pareto.hpp"
#include "flagforge/pipeline.hpp"
#include "flagforge/stats.hpp"
#include "flagforge/uid.hpp"
#include "flagforge/util.hpp"

namespace flagforge {

inline constexpr const char* kExecutionTime = "execution_time";
inline constexpr const char* kBinarySize = "binary_size";
inline constexpr const char* kCompileTime = "compile_time";

struct PlatformInfo {
  std::string os;
  std::string cpu_model;
  std::string hostname_hash;

  static PlatformInfo detect();
  /// Platform class used to key crowd tables: "<cpu model>|<os>".
  std::string platform_class() const { return cpu_model + "|" + os; }
  bool operator==(const PlatformInfo&) const = default;
};

struct ReplayInfo {
  std::string workload;
  std::string command_key;
  std::string dataset;
  std::uint64_t seed = 0;
  int repetitions = 1;
  bool operator==(const ReplayInfo&) const = default;
};

struct ExperimentPoint {
  std::string point_uid;
  std::string tag;  // baseline, random, reduced, inverted, minimized, solution:<uid>, ...
  FlagAssignment assignment;
  std::string rendered;
  std::map<std::string, CharacteristicStats> characteristics;
  std::string binary_md5;
  std::map<std::string, std::vector<double>> raw_samples;
  std::optional<FailureKind> failure;
  ReplayInfo replay_info;
  bool trustable = true;  // false once baseline drift was detected
  bool operator==(const ExperimentPoint&) const = default;

  /// Objective value of a characteristic (its expected value).
  double objective(const std::string& characteristic) const;
};

struct BaselineCheck {
  int iteration = 0;
  double expected = 0.0;
  double drift = 0.0;
  bool operator==(const BaselineCheck&) const = default;
};

struct ExperimentEntry {
  std::string entry_uid;
  std::string alias;
  std::string scenario_id;
  std::string workload;
  std::string dataset;
  CompilerEnv compiler;
  PlatformInfo platform;
  std::int64_t created_at = 0;
  std::vector<std::string> points;
  std::vector<BaselineCheck> baseline_checks;
  bool drift_detected = false;
  bool operator==(const ExperimentEntry&) const = default;
};

Json to_json(const ExperimentPoint& point);
ExperimentPoint point_from_json(const Json& doc);
Json to_json(const ExperimentEntry& entry);
ExperimentEntry entry_from_json(const Json& doc);

/// Builds a point from a pipeline result: summarizes run times, sizes and
/// compile time into characteristics (absent when the pipeline failed).
ExperimentPoint make_point(const PipelineResult& result, const FlagAssignment& assignment,
                           const FlagSpace& space, ReplayInfo replay, const StatsConfig& stats = {});

/// Expected values of `objectives`, or nullopt for failed points and
/// points missing one of them.
std::optional<std::vector<double>> objective_vector(const ExperimentPoint& point,
                                                    const std::vector<std::string>& objectives);

/// Objective vectors of the stored points that carry every objective.
std::vector<FrontierPoint> frontier_candidates(const std::vector<ExperimentPoint>& points,
                                               const std::vector<std::string>& objectives);

struct ReplayRow {
  std::string characteristic;
  double original = 0.0;
  double replayed = 0.0;
  double relative_difference = 0.0;
  bool passed = true;
};

struct ReplayReport {
  std::vector<ReplayRow> rows;
  bool md5_match = true;
  std::optional<FailureKind> original_failure;
  std::optional<FailureKind> replayed_failure;
  bool behavioral_difference = false;  // failure kind changed
  bool passed = true;
};

Json to_json(const ReplayReport& report);

/// repo_root/experiment/<entry_uid>/{meta.json, flagspace.json, points/<point_uid>.json}
class ExperimentStore {
 public:
  ExperimentStore(std::filesystem::path repo_root, UidGenerator uids);

  std::string create_entry(ExperimentEntry entry, const FlagSpace& space);
  /// Accepts an entry uid or its alias.
  std::string resolve(const std::string& uid_or_alias) const;
  bool has_entry(const std::string& uid_or_alias) const;
  ExperimentEntry load_entry(const std::string& uid_or_alias) const;
  void save_entry(const ExperimentEntry& entry);
  FlagSpace load_flagspace(const std::string& uid_or_alias) const;

  /// Sorted by creation time, then uid.
  std::vector<ExperimentEntry> list_entries() const;

  /// Assigns a uid when `point.point_uid` is empty. Written atomically.
  std::string record_point(const std::string& entry, ExperimentPoint point);
  ExperimentPoint load_point(const std::string& entry, const std::string& point_uid) const;
  std::vector<ExperimentPoint> load_points(const std::string& entry) const;
  void remove_point(const std::string& entry, const std::string& point_uid);

  std::filesystem::path point_path(const std::string& entry, const std::string& point_uid) const;

  /// Columns: uid, tag, time, time_pm, size, compile_time, md5, failure,
  /// flags, frontier. Defaults to uid,time,time_pm,size,flags,frontier.
  std::string export_table(const std::string& entry, const std::vector<std::string>& columns = {}) const;

  std::string new_uid() { return uids_.next(); }
  const std::filesystem::path& root() const noexcept { return root_; }

 private:
  std::filesystem::path entry_dir(const std::string& uid) const;

  std::filesystem::path root_;
  UidGenerator uids_;
};

/// Re-executes a stored point and compares monitored characteristics.
/// `env_override` replays under a different compiler.
ReplayReport replay(const ExperimentStore& store, const Pipeline& pipeline, const std::string& entry,
                    const std::string& point_uid, double tolerance = kDefaultTrustThreshold,
                    const std::optional<CompilerEnv>& env_override = std::nullopt,
                    const std::vector<std::string>& characteristics = {kExecutionTime, kBinarySize});

}  // namespace flagforge
