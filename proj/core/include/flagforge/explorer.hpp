#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "flagforge/experiment.hpp"
#include "flagforge/flagspace.hpp"
#include "flagforge/pareto.hpp"
#include "flagforge/pipeline.hpp"
#include "flagforge/stats.hpp"
#include "flagforge/workload.hpp"

namespace flagforge {

enum class RecordPolicy { kAll, kFrontierOnly, kFailuresOnly };
enum class SamplingMode { kRandom, kExhaustive };

struct Scenario {
  std::string scenario_id = "time-size";
  std::vector<std::string> objectives = {kExecutionTime, kBinarySize};
  int iterations = 0;
  int repetitions = 3;
  SamplingPolicy sampling;
  SamplingMode mode = SamplingMode::kRandom;
  RecordPolicy record_policy = RecordPolicy::kAll;
  std::string baseline_flags = "-O3";
  std::string command_key;
  std::string alias;
  int baseline_check_interval = 50;
};

Json to_json(const Scenario& scenario);
Scenario scenario_from_json(const Json& doc);
void validate_scenario(const Scenario& scenario);

inline constexpr std::uint64_t kMaxExhaustiveCombinations = std::uint64_t{1} << 20;

/// All subsets of the space's boolean flags (absent or on-form) on top of
/// `base`, in binary counting order over descriptor order.
std::vector<FlagAssignment> enumerate_boolean_combinations(const FlagSpace& space, const FlagAssignment& base);

struct ReactionCell {
  double speedup = 1.0;
  bool trustable = true;
};

struct ReactionTable {
  std::vector<std::string> datasets;
  std::vector<std::string> solutions;          // rendered
  std::vector<std::vector<ReactionCell>> cells;  // [dataset][solution]
};

Json to_json(const ReactionTable& table);

class Explorer {
 public:
  Explorer(const WorkloadRegistry& registry, ExperimentStore& store, const Pipeline& pipeline,
           StatsConfig stats = {});

  /// Holds the machine-wide measurement lock while running, when set.
  void set_measurement_lock(std::filesystem::path lock_file) { lock_file_ = std::move(lock_file); }

  std::string autotune(const Scenario& scenario, const std::string& workload, const std::string& dataset,
                       const FlagSpace& space, const CompilerEnv& env);

  /// autotune with record_policy forced to failures_only.
  std::string fuzz(Scenario scenario, const std::string& workload, const std::string& dataset,
                   const FlagSpace& space, const CompilerEnv& env);

  /// For every resolvable dataset, speedup of each solution over the
  /// scenario baseline. Row-major by dataset.
  ReactionTable sweep_datasets(const Scenario& scenario, const std::string& workload,
                               const std::vector<FlagAssignment>& solutions, const FlagSpace& space,
                               const CompilerEnv& env);

 private:
  PipelineResult run(const Scenario& scenario, const std::string& workload, const std::string& dataset,
                     const FlagAssignment& assignment, const FlagSpace& space, const CompilerEnv& env,
                     std::uint64_t noise_seed) const;

  const WorkloadRegistry& registry_;
  ExperimentStore& store_;
  const Pipeline& pipeline_;
  StatsConfig stats_;
  std::optional<std::filesystem::path> lock_file_;
};

}  // namespace flagforge
