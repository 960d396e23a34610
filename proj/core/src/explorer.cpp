#include "flagforge/explorer.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "flagforge/error.hpp"
#include "flagforge/lock.hpp"

namespace flagforge {
namespace {

std::string_view policy_name(RecordPolicy p) {
  switch (p) {
    case RecordPolicy::kAll: return "all";
    case RecordPolicy::kFrontierOnly: return "frontier_only";
    case RecordPolicy::kFailuresOnly: return "failures_only";
  }
  return "all";
}

RecordPolicy parse_policy(const std::string& text) {
  if (text == "all") return RecordPolicy::kAll;
  if (text == "frontier_only") return RecordPolicy::kFrontierOnly;
  if (text == "failures_only") return RecordPolicy::kFailuresOnly;
  throw ContractError("unknown record policy '" + text + "'");
}

bool known_characteristic(const std::string& name) {
  return name == kExecutionTime || name == kBinarySize || name == kCompileTime;
}

}  // namespace

Json to_json(const Scenario& s) {
  return Json{{"scenario_id", s.scenario_id},
              {"objectives", s.objectives},
              {"iterations", s.iterations},
              {"repetitions", s.repetitions},
              {"sampling", {{"include_probability", s.sampling.include_probability},
                            {"parametric", s.sampling.enable_parametric},
                            {"cpu", s.sampling.enable_cpu},
                            {"base", s.sampling.enable_base},
                            {"seed", s.sampling.seed}}},
              {"mode", s.mode == SamplingMode::kRandom ? "random" : "exhaustive"},
              {"record_policy", policy_name(s.record_policy)},
              {"baseline", s.baseline_flags},
              {"command_key", s.command_key},
              {"alias", s.alias},
              {"baseline_check_interval", s.baseline_check_interval}};
}

Scenario scenario_from_json(const Json& j) {
  try {
    Scenario s;
    s.scenario_id = j.value("scenario_id", s.scenario_id);
    s.objectives = j.value("objectives", s.objectives);
    s.iterations = j.value("iterations", s.iterations);
    s.repetitions = j.value("repetitions", s.repetitions);
    if (j.contains("sampling")) {
      const auto& p = j.at("sampling");
      s.sampling.include_probability = p.value("include_probability", s.sampling.include_probability);
      s.sampling.enable_parametric = p.value("parametric", false);
      s.sampling.enable_cpu = p.value("cpu", false);
      s.sampling.enable_base = p.value("base", false);
      s.sampling.seed = p.value("seed", std::uint64_t{0});
    }
    auto mode = j.value("mode", std::string("random"));
    if (mode == "exhaustive") s.mode = SamplingMode::kExhaustive;
    else if (mode != "random") throw ContractError("unknown sampling mode '" + mode + "'");
    s.record_policy = parse_policy(j.value("record_policy", std::string("all")));
    s.baseline_flags = j.value("baseline", s.baseline_flags);
    s.command_key = j.value("command_key", std::string());
    s.alias = j.value("alias", std::string());
    s.baseline_check_interval = j.value("baseline_check_interval", s.baseline_check_interval);
    validate_scenario(s);
    return s;
  } catch (const Json::exception& e) {
    throw ContractError(std::string("malformed scenario: ") + e.what());
  }
}

void validate_scenario(const Scenario& s) {
  if (s.iterations < 0) throw ContractError("iterations must be >= 0");
  if (s.repetitions < 1) throw ContractError("repetitions must be >= 1");
  if (s.objectives.empty() && s.record_policy != RecordPolicy::kFailuresOnly) {
    throw ContractError("scenario needs at least one objective");
  }
  for (const auto& o : s.objectives) {
    if (!known_characteristic(o)) throw ContractError("unknown objective '" + o + "'");
  }
  if (!(s.sampling.include_probability >= 0 && s.sampling.include_probability <= 1)) {
    throw ContractError("include probability must lie in [0, 1]");
  }
  if (s.baseline_check_interval < 0) throw ContractError("baseline check interval must be >= 0");
}

std::vector<FlagAssignment> enumerate_boolean_combinations(const FlagSpace& space, const FlagAssignment& base) {
  std::vector<const FlagDescriptor*> booleans;
  for (const auto& d : space.descriptors()) {
    if (d.is_boolean()) booleans.push_back(&d);
  }
  if (booleans.size() >= 64 || (std::uint64_t{1} << booleans.size()) > kMaxExhaustiveCombinations) {
    throw ContractError("exhaustive mode supports at most 2^20 combinations");
  }
  std::uint64_t total = std::uint64_t{1} << booleans.size();
  std::vector<FlagAssignment> out;
  out.reserve(total);
  for (std::uint64_t mask = 0; mask < total; ++mask) {
    FlagAssignment a = base;
    for (std::size_t j = 0; j < booleans.size(); ++j) {
      if (mask & (std::uint64_t{1} << j)) a.values[booleans[j]->name] = true;
      else a.values.erase(booleans[j]->name);
    }
    out.push_back(std::move(a));
  }
  return out;
}

Json to_json(const ReactionTable& t) {
  Json cells = Json::array();
  for (const auto& row : t.cells) {
    Json r = Json::array();
    for (const auto& c : row) r.push_back({{"speedup", c.speedup}, {"trustable", c.trustable}});
    cells.push_back(r);
  }
  return Json{{"datasets", t.datasets}, {"solutions", t.solutions}, {"cells", cells}};
}

Explorer::Explorer(const WorkloadRegistry& registry, ExperimentStore& store, const Pipeline& pipeline, StatsConfig stats)
    : registry_(registry), store_(store), pipeline_(pipeline), stats_(stats) {}

PipelineResult Explorer::run(const Scenario& scenario, const std::string& workload, const std::string& dataset,
                             const FlagAssignment& assignment, const FlagSpace& space, const CompilerEnv& env,
                             std::uint64_t noise_seed) const {
  PipelineRequest request;
  request.workload = workload;
  request.dataset = dataset;
  request.command_key = scenario.command_key;
  request.assignment = assignment;
  request.env = env;
  request.repetitions = scenario.repetitions;
  request.noise_seed = noise_seed;
  return pipeline_.execute(request, space);
}

std::string Explorer::autotune(const Scenario& scenario, const std::string& workload, const std::string& dataset,
                               const FlagSpace& space, const CompilerEnv& env) {
  validate_scenario(scenario);
  registry_.load_workload(workload);
  if (!dataset.empty()) registry_.load_dataset(dataset);
  auto baseline = parse(scenario.baseline_flags, space);

  std::optional<FileLock> measurement;
  if (lock_file_) measurement.emplace(*lock_file_);

  ExperimentEntry entry;
  entry.alias = scenario.alias;
  entry.scenario_id = scenario.scenario_id;
  entry.workload = workload;
  entry.dataset = dataset;
  entry.compiler = env;
  entry.platform = PlatformInfo::detect();
  auto uid = store_.create_entry(entry, space);

  FrontierArchive archive;
  bool drifted = false;
  auto record = [&](PipelineResult result, const FlagAssignment& assignment, std::string tag, std::uint64_t seed) {
    auto point = make_point(result, assignment, space,
                            ReplayInfo{workload, scenario.command_key, dataset, seed, scenario.repetitions}, stats_);
    point.tag = std::move(tag);
    point.trustable = !drifted;
    switch (scenario.record_policy) {
      case RecordPolicy::kAll:
        store_.record_point(uid, std::move(point));
        break;
      case RecordPolicy::kFailuresOnly:
        if (point.failure) store_.record_point(uid, std::move(point));
        break;
      case RecordPolicy::kFrontierOnly: {
        auto objectives = objective_vector(point, scenario.objectives);
        if (!objectives) break;
        point.point_uid = store_.new_uid();
        std::vector<std::string> evicted;
        if (!archive.insert({point.point_uid, *objectives}, &evicted)) break;
        store_.record_point(uid, std::move(point));
        for (const auto& old : evicted) store_.remove_point(uid, old);
        break;
      }
    }
  };

  const std::uint64_t seed = scenario.sampling.seed;
  auto noise_seed = [&](std::uint64_t i) { return splitmix64(seed ^ (0xa5a5a5a5ULL + 2 * i)); };

  auto base_result = run(scenario, workload, dataset, baseline, space, env, noise_seed(0));
  std::optional<double> base_expected;
  if (!base_result.failure && !base_result.runs.empty()) base_expected = summarize(base_result.run_times(), stats_).expected;
  record(std::move(base_result), baseline, "baseline", noise_seed(0));

  std::vector<FlagAssignment> exhaustive;
  std::uint64_t count = static_cast<std::uint64_t>(scenario.iterations);
  if (scenario.mode == SamplingMode::kExhaustive) {
    exhaustive = enumerate_boolean_combinations(space, FlagAssignment{baseline.base_level, {}, baseline.env_values});
    if (scenario.iterations == 0 || count > exhaustive.size()) count = exhaustive.size();
  }

  for (std::uint64_t i = 1; i <= count; ++i) {
    if (base_expected && scenario.baseline_check_interval > 0 && i > 1 &&
        (i - 1) % static_cast<std::uint64_t>(scenario.baseline_check_interval) == 0) {
      auto check = run(scenario, workload, dataset, baseline, space, env, noise_seed(i) ^ 0x5bd1e995ULL);
      if (!check.failure && !check.runs.empty()) {
        double now = summarize(check.run_times(), stats_).expected;
        double drift = std::abs(now - *base_expected) / *base_expected;
        auto meta = store_.load_entry(uid);
        meta.baseline_checks.push_back({static_cast<int>(i - 1), now, drift});
        if (drift > stats_.trust_threshold) {
          drifted = true;
          meta.drift_detected = true;
        }
        store_.save_entry(meta);
      }
    }
    FlagAssignment assignment;
    if (scenario.mode == SamplingMode::kExhaustive) {
      assignment = exhaustive[i - 1];
    } else {
      SamplingPolicy policy = scenario.sampling;
      policy.seed = splitmix64(seed + i);
      assignment = sample_random(space, policy);
      if (!policy.enable_base) assignment.base_level = baseline.base_level;
    }
    record(run(scenario, workload, dataset, assignment, space, env, noise_seed(i)), assignment,
           scenario.mode == SamplingMode::kExhaustive ? "exhaustive" : "random", noise_seed(i));
  }
  return uid;
}

std::string Explorer::fuzz(Scenario scenario, const std::string& workload, const std::string& dataset,
                           const FlagSpace& space, const CompilerEnv& env) {
  scenario.record_policy = RecordPolicy::kFailuresOnly;
  return autotune(scenario, workload, dataset, space, env);
}

ReactionTable Explorer::sweep_datasets(const Scenario& scenario, const std::string& workload,
                                       const std::vector<FlagAssignment>& solutions, const FlagSpace& space,
                                       const CompilerEnv& env) {
  if (scenario.repetitions < 1) throw ContractError("repetitions must be >= 1");
  auto datasets = registry_.resolve_datasets(workload);
  if (datasets.empty()) throw ContractError("no datasets resolvable for workload '" + workload + "'");
  auto baseline = parse(scenario.baseline_flags, space);

  std::optional<FileLock> measurement;
  if (lock_file_) measurement.emplace(*lock_file_);

  ReactionTable table;
  for (const auto& s : solutions) table.solutions.push_back(render(s, space));
  std::uint64_t seed = scenario.sampling.seed;
  for (const auto& d : datasets) {
    table.datasets.push_back(d.id);
    auto base = run(scenario, workload, d.id, baseline, space, env, splitmix64(seed++));
    if (base.failure || base.runs.empty()) throw ContractError("baseline fails on dataset '" + d.id + "'");
    auto base_stats = summarize(base.run_times(), stats_);
    std::vector<ReactionCell> row;
    for (const auto& s : solutions) {
      auto r = run(scenario, workload, d.id, s, space, env, splitmix64(seed++));
      if (r.failure || r.runs.empty()) {
        row.push_back({0.0, false});
        continue;
      }
      auto cand = summarize(r.run_times(), stats_);
      row.push_back({speedup_over_baseline(base_stats, cand), compare(base_stats, cand, stats_.trust_threshold).trustable});
    }
    table.cells.push_back(std::move(row));
  }
  return table;
}

}  // namespace flagforge
