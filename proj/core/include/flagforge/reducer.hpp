#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "flagforge/experiment.hpp"
#include "flagforge/flagspace.hpp"
#include "flagforge/pipeline.hpp"
#include "flagforge/stats.hpp"

namespace flagforge {

enum class Condition { kNotWorse, kWithinTolerance };

struct PruneConfig {
  double tolerance = 0.025;
  bool use_md5_shortcut = false;
  bool invert = false;
  std::optional<std::string> keep_key;
  std::uint64_t seed = 0;
  bool deterministic_order = false;
  std::map<std::string, Condition> conditions = {{"execution_time", Condition::kNotWorse},
                                                 {"binary_size", Condition::kNotWorse}};
  int repetitions = 0;  // 0: reuse the point's repetitions
};

/// Reads the prune.json shape: {"tolerance": .., "md5": .., "invert": ..,
/// "keep": .., "conditions": {"execution_time": "not_worse", ...}}.
PruneConfig prune_config_from_json(const Json& doc);

enum class Verdict { kImproves, kDegrades, kNeutral };
std::string_view to_string(Verdict verdict);

struct ContributionRow {
  std::string flag;
  double delta_time = 0.0;  // relative change when the flag is removed
  double delta_size = 0.0;
  Verdict verdict = Verdict::kNeutral;
};

struct ContributionReport {
  std::vector<ContributionRow> rows;
};

Json to_json(const ContributionReport& report);

struct ReduceResult {
  FlagAssignment assignment;
  std::string point_uid;
  int evaluations = 0;       // pipeline executions, including compile-only
  int md5_shortcuts = 0;
};

class Reducer {
 public:
  Reducer(ExperimentStore& store, const Pipeline& pipeline, StatsConfig stats = {});

  ReduceResult reduce(const std::string& entry, const std::string& point_uid, const PruneConfig& config);
  ReduceResult invert(const std::string& entry, const std::string& point_uid, const PruneConfig& config);
  ContributionReport contribution(const std::string& entry, const std::string& point_uid,
                                  const PruneConfig& config = {});
  /// Result is 1-minimal: dropping any remaining flag loses the failure.
  ReduceResult minimize_failure(const std::string& entry, const std::string& point_uid,
                                const PruneConfig& config);

 private:
  struct Context;
  Context load(const std::string& entry, const std::string& point_uid, const PruneConfig& config) const;
  PipelineResult execute(const Context& ctx, const FlagAssignment& assignment, bool compile_only) const;
  ExperimentPoint measure(const Context& ctx, const FlagAssignment& assignment) const;

  ExperimentStore& store_;
  const Pipeline& pipeline_;
  StatsConfig stats_;
};

}  // namespace flagforge
