#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "flagforge/experiment.hpp"
#include "flagforge/flagspace.hpp"
#include "flagforge/pipeline.hpp"
#include "flagforge/stats.hpp"

namespace flagforge {

struct ScenarioKey {
  std::string scenario_id;
  std::string compiler;  // family + version, e.g. "gcc 4.9.2"
  std::string platform;  // platform class

  std::string str() const { return scenario_id + "|" + compiler + "|" + platform; }
  auto operator<=>(const ScenarioKey&) const = default;
};

/// Best improvement seen for one (solution, workload) pair. `samples`
/// counts distinct contributors, so re-submitting a report changes nothing.
struct Reaction {
  double ratio = 1.0;
  std::int64_t samples = 0;
  std::set<std::string> contributors;  // short digests of participant tokens
  bool operator==(const Reaction&) const = default;
};

struct SolutionRecord {
  std::string solution_uid;
  std::string assignment_text;
  int best_species = 0;
  int worst_species = 0;
  double highest_improvement = 1.0;
  double worst_degradation = 1.0;
  std::map<std::string, Reaction> reactions;  // workload -> reaction
  bool operator==(const SolutionRecord&) const = default;
};

struct ScenarioTable {
  ScenarioKey key;
  std::vector<SolutionRecord> solutions;
  bool operator==(const ScenarioTable&) const = default;
};

struct Candidate {
  std::string assignment_text;
  double improvement = 1.0;
};

struct SubmitReport {
  std::string participant;
  ScenarioKey key;
  std::string workload;
  std::string baseline_digest;
  std::map<std::string, double> reactions;  // solution_uid -> improvement
  std::optional<Candidate> candidate;
};

struct MergeOutcome {
  std::optional<std::string> admitted_uid;
  std::vector<std::string> ignored;  // reactions for solutions not in the table
};

inline constexpr double kClassificationMargin = kDefaultTrustThreshold;

Json to_json(const ScenarioKey& key);
ScenarioKey scenario_key_from_json(const Json& doc);
Json to_json(const SolutionRecord& record);
SolutionRecord solution_from_json(const Json& doc);
Json to_json(const ScenarioTable& table);
ScenarioTable table_from_json(const Json& doc);
Json to_json(const SubmitReport& report);
SubmitReport report_from_json(const Json& doc);  // throws ContractError when malformed

/// Stable id derived from the scenario key and the flag text; re-submitting
/// the same solution text maps to the same record.
std::string solution_uid_for(const ScenarioKey& key, const std::string& assignment_text);

/// Whether `candidate` beats the baseline and every shared reaction of the
/// report by more than the margin.
bool candidate_admissible(const SubmitReport& report, double margin = kClassificationMargin);

/// Max-merges the report's reactions, admits its candidate and recomputes
/// counters and ordering.
MergeOutcome server_merge(ScenarioTable& table, const SubmitReport& report, double margin = kClassificationMargin);

/// Recomputes best/worst species and extreme ratios from reactions and
/// restores table ordering.
void recompute_counters(ScenarioTable& table, double margin = kClassificationMargin);

/// recompute_counters, then prunes solutions that are neither best nor
/// worst anywhere and never beat 1 + margin.
void classify_online(ScenarioTable& table, double margin = kClassificationMargin);

std::vector<SolutionRecord> top_solutions(const ScenarioTable& table, std::size_t n);

/// Thread-safe table collection, optionally persisted under a directory
/// (one JSON file per scenario key).
class CrowdServer {
 public:
  explicit CrowdServer(std::optional<std::filesystem::path> store_dir = std::nullopt, bool auto_create = true);

  MergeOutcome submit(const SubmitReport& report);
  std::vector<SolutionRecord> top(const ScenarioKey& key, std::size_t n) const;
  std::optional<std::pair<ScenarioKey, SolutionRecord>> solution(const std::string& uid) const;
  std::optional<ScenarioTable> table(const ScenarioKey& key) const;
  /// Adds a shared solution without reactions; returns its uid.
  std::string seed_solution(const ScenarioKey& key, const std::string& assignment_text);
  void classify(const ScenarioKey& key);

 private:
  void persist(const ScenarioTable& table) const;

  std::optional<std::filesystem::path> store_dir_;
  bool auto_create_;
  mutable std::mutex mutex_;
  std::map<ScenarioKey, ScenarioTable> tables_;
};

/// Client side of the wire protocol.
class CrowdTransport {
 public:
  virtual ~CrowdTransport() = default;
  virtual std::vector<SolutionRecord> top(const ScenarioKey& key, std::size_t n) = 0;
  virtual std::optional<SolutionRecord> solution(const std::string& uid) = 0;
  virtual MergeOutcome submit(const SubmitReport& report) = 0;
};

/// Calls a CrowdServer in-process.
class LocalTransport : public CrowdTransport {
 public:
  explicit LocalTransport(CrowdServer& server) : server_(server) {}
  std::vector<SolutionRecord> top(const ScenarioKey& key, std::size_t n) override;
  std::optional<SolutionRecord> solution(const std::string& uid) override;
  MergeOutcome submit(const SubmitReport& report) override;

 private:
  CrowdServer& server_;
};

struct CrowdTuneOptions {
  std::string workload;
  std::string dataset;
  std::string command_key;
  ScenarioKey key;
  std::size_t top_n = 10;
  int extra_random = 0;
  int repetitions = 3;
  SamplingPolicy sampling;
  std::string baseline_flags = "-O3";
  std::string participant;
};

struct CrowdTuneResult {
  SubmitReport report;
  std::string entry_uid;
  bool submitted = false;
  std::optional<std::filesystem::path> queued_file;
  std::vector<std::string> discarded;  // untrustable comparisons (solution uid or "random:<i>")
};

class CrowdClient {
 public:
  CrowdClient(const WorkloadRegistry& registry, ExperimentStore& store, const Pipeline& pipeline,
              CrowdTransport& transport, std::filesystem::path queue_dir, StatsConfig stats = {});

  /// Replays shared top solutions plus fresh random ones, submits the
  /// resulting reactions and records everything locally. On transport
  /// failure the report is queued under the queue directory.
  CrowdTuneResult crowdtune(const CrowdTuneOptions& options, const FlagSpace& space, const CompilerEnv& env);

  /// Resubmits queued reports; returns how many were delivered.
  int flush_queue();

 private:
  const WorkloadRegistry& registry_;
  ExperimentStore& store_;
  const Pipeline& pipeline_;
  CrowdTransport& transport_;
  std::filesystem::path queue_dir_;
  StatsConfig stats_;
};

}  // namespace flagforge
