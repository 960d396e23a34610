#include "flagforge/crowd.hpp"

#include <algorithm>
#include <cmath>

#include "flagforge/error.hpp"

namespace flagforge {
namespace {

void sort_table(ScenarioTable& table) {
  std::sort(table.solutions.begin(), table.solutions.end(), [](const SolutionRecord& a, const SolutionRecord& b) {
    if (a.best_species != b.best_species) return a.best_species > b.best_species;
    if (a.highest_improvement != b.highest_improvement) return a.highest_improvement > b.highest_improvement;
    return a.solution_uid < b.solution_uid;
  });
}

SolutionRecord* find_solution(ScenarioTable& table, const std::string& uid) {
  for (auto& s : table.solutions) {
    if (s.solution_uid == uid) return &s;
  }
  return nullptr;
}

void merge_reaction(Reaction& r, double ratio, const std::string& contributor) {
  r.ratio = r.contributors.empty() ? ratio : std::max(r.ratio, ratio);
  r.contributors.insert(contributor);
  r.samples = static_cast<std::int64_t>(r.contributors.size());
}

void validate_report(const SubmitReport& report) {
  if (report.key.scenario_id.empty() || report.key.compiler.empty() || report.key.platform.empty()) {
    throw ContractError("report has an incomplete scenario key");
  }
  if (report.workload.empty()) throw ContractError("report names no workload");
  for (const auto& [uid, ratio] : report.reactions) {
    if (!(ratio > 0) || !std::isfinite(ratio)) throw ContractError("reaction for " + uid + " is not a positive ratio");
  }
  if (report.candidate) {
    if (report.candidate->assignment_text.empty()) throw ContractError("candidate has no flags");
    if (!(report.candidate->improvement > 0) || !std::isfinite(report.candidate->improvement)) {
      throw ContractError("candidate improvement is not a positive ratio");
    }
  }
}

std::string table_file_name(const ScenarioKey& key) { return md5_hex(key.str()).substr(0, 16) + ".json"; }

}  // namespace

Json to_json(const ScenarioKey& key) {
  return Json{{"scenario", key.scenario_id}, {"compiler", key.compiler}, {"platform", key.platform}};
}

ScenarioKey scenario_key_from_json(const Json& j) {
  return ScenarioKey{j.at("scenario").get<std::string>(), j.at("compiler").get<std::string>(),
                     j.at("platform").get<std::string>()};
}

Json to_json(const SolutionRecord& s) {
  Json reactions = Json::object();
  for (const auto& [w, r] : s.reactions) {
    reactions[w] = {{"ratio", r.ratio}, {"samples", r.samples}, {"contributors", r.contributors}};
  }
  return Json{{"solution_uid", s.solution_uid},
              {"assignment_text", s.assignment_text},
              {"best_species", s.best_species},
              {"worst_species", s.worst_species},
              {"highest_improvement", s.highest_improvement},
              {"worst_degradation", s.worst_degradation},
              {"reactions", reactions}};
}

SolutionRecord solution_from_json(const Json& j) {
  SolutionRecord s;
  s.solution_uid = j.at("solution_uid").get<std::string>();
  s.assignment_text = j.at("assignment_text").get<std::string>();
  s.best_species = j.value("best_species", 0);
  s.worst_species = j.value("worst_species", 0);
  s.highest_improvement = j.value("highest_improvement", 1.0);
  s.worst_degradation = j.value("worst_degradation", 1.0);
  const Json reactions = j.value("reactions", Json::object());
  for (const auto& [w, r] : reactions.items()) {
    Reaction reaction;
    reaction.ratio = r.at("ratio").get<double>();
    reaction.contributors = r.value("contributors", std::set<std::string>{});
    reaction.samples = r.value("samples", static_cast<std::int64_t>(reaction.contributors.size()));
    s.reactions[w] = std::move(reaction);
  }
  return s;
}

Json to_json(const ScenarioTable& t) {
  Json solutions = Json::array();
  for (const auto& s : t.solutions) solutions.push_back(to_json(s));
  return Json{{"key", to_json(t.key)}, {"solutions", solutions}};
}

ScenarioTable table_from_json(const Json& j) {
  try {
    ScenarioTable t;
    t.key = scenario_key_from_json(j.at("key"));
    for (const auto& s : j.value("solutions", Json::array())) t.solutions.push_back(solution_from_json(s));
    return t;
  } catch (const Json::exception& e) {
    throw ContractError(std::string("malformed scenario table: ") + e.what());
  }
}

Json to_json(const SubmitReport& r) {
  Json j{{"participant", r.participant},
         {"key", to_json(r.key)},
         {"workload", r.workload},
         {"baseline_digest", r.baseline_digest},
         {"reactions", r.reactions}};
  if (r.candidate) {
    j["candidate"] = {{"assignment_text", r.candidate->assignment_text}, {"improvement", r.candidate->improvement}};
  }
  return j;
}

SubmitReport report_from_json(const Json& j) {
  try {
    SubmitReport r;
    r.participant = j.value("participant", std::string());
    r.key = scenario_key_from_json(j.at("key"));
    r.workload = j.at("workload").get<std::string>();
    r.baseline_digest = j.value("baseline_digest", std::string());
    r.reactions = j.value("reactions", std::map<std::string, double>{});
    if (j.contains("candidate") && !j.at("candidate").is_null()) {
      const auto& c = j.at("candidate");
      r.candidate = Candidate{c.at("assignment_text").get<std::string>(), c.at("improvement").get<double>()};
    }
    validate_report(r);
    return r;
  } catch (const Json::exception& e) {
    throw ContractError(std::string("malformed report: ") + e.what());
  }
}

std::string solution_uid_for(const ScenarioKey& key, const std::string& assignment_text) {
  return md5_hex(key.str() + "\n" + assignment_text).substr(0, 16);
}

bool candidate_admissible(const SubmitReport& report, double margin) {
  if (!report.candidate) return false;
  double bar = 1.0;
  for (const auto& [uid, ratio] : report.reactions) bar = std::max(bar, ratio);
  return report.candidate->improvement > bar * (1.0 + margin);
}

void recompute_counters(ScenarioTable& table, double margin) {
  std::set<std::string> workloads;
  for (auto& s : table.solutions) {
    s.best_species = 0;
    s.worst_species = 0;
    s.highest_improvement = 1.0;
    s.worst_degradation = 1.0;
    bool first = true;
    for (const auto& [w, r] : s.reactions) {
      workloads.insert(w);
      s.highest_improvement = first ? r.ratio : std::max(s.highest_improvement, r.ratio);
      s.worst_degradation = first ? r.ratio : std::min(s.worst_degradation, r.ratio);
      first = false;
    }
  }
  for (const auto& w : workloads) {
    SolutionRecord* best = nullptr;
    SolutionRecord* worst = nullptr;
    for (auto& s : table.solutions) {
      auto it = s.reactions.find(w);
      if (it == s.reactions.end()) continue;
      double ratio = it->second.ratio;
      auto better = [&](SolutionRecord* cur, bool higher) {
        if (!cur) return true;
        double other = cur->reactions.at(w).ratio;
        if (ratio != other) return higher ? ratio > other : ratio < other;
        return s.solution_uid < cur->solution_uid;
      };
      if (better(best, true)) best = &s;
      if (better(worst, false)) worst = &s;
    }
    if (best && best->reactions.at(w).ratio > 1.0 + margin) ++best->best_species;
    if (worst && worst->reactions.at(w).ratio < 1.0 - margin) ++worst->worst_species;
  }
  sort_table(table);
}

void classify_online(ScenarioTable& table, double margin) {
  recompute_counters(table, margin);
  std::erase_if(table.solutions, [&](const SolutionRecord& s) {
    return s.best_species == 0 && s.worst_species == 0 && s.highest_improvement < 1.0 + margin;
  });
  recompute_counters(table, margin);
}

MergeOutcome server_merge(ScenarioTable& table, const SubmitReport& report, double margin) {
  validate_report(report);
  if (report.key != table.key) throw ContractError("report key does not match table " + table.key.str());
  auto contributor = md5_hex(report.participant).substr(0, 8);
  MergeOutcome outcome;
  for (const auto& [uid, ratio] : report.reactions) {
    auto* s = find_solution(table, uid);
    if (!s) {
      outcome.ignored.push_back(uid);
      continue;
    }
    merge_reaction(s->reactions[report.workload], ratio, contributor);
  }
  if (candidate_admissible(report, margin)) {
    auto uid = solution_uid_for(table.key, report.candidate->assignment_text);
    auto* s = find_solution(table, uid);
    if (!s) {
      table.solutions.push_back(SolutionRecord{uid, report.candidate->assignment_text, 0, 0, 1.0, 1.0, {}});
      s = &table.solutions.back();
    }
    merge_reaction(s->reactions[report.workload], report.candidate->improvement, contributor);
    outcome.admitted_uid = uid;
  }
  recompute_counters(table, margin);
  return outcome;
}

std::vector<SolutionRecord> top_solutions(const ScenarioTable& table, std::size_t n) {
  auto count = std::min(n, table.solutions.size());
  return {table.solutions.begin(), table.solutions.begin() + static_cast<std::ptrdiff_t>(count)};
}

CrowdServer::CrowdServer(std::optional<std::filesystem::path> store_dir, bool auto_create)
    : store_dir_(std::move(store_dir)), auto_create_(auto_create) {
  if (!store_dir_) return;
  std::filesystem::create_directories(*store_dir_);
  for (const auto& e : std::filesystem::directory_iterator(*store_dir_)) {
    if (e.path().extension() != ".json") continue;
    auto table = table_from_json(read_json(e.path()));
    tables_[table.key] = std::move(table);
  }
}

void CrowdServer::persist(const ScenarioTable& table) const {
  if (store_dir_) write_json_atomic(*store_dir_ / table_file_name(table.key), to_json(table));
}

MergeOutcome CrowdServer::submit(const SubmitReport& report) {
  validate_report(report);
  std::lock_guard guard(mutex_);
  auto it = tables_.find(report.key);
  if (it == tables_.end()) {
    if (!auto_create_) throw ContractError("unknown scenario key " + report.key.str());
    it = tables_.emplace(report.key, ScenarioTable{report.key, {}}).first;
  }
  auto outcome = server_merge(it->second, report);
  persist(it->second);
  return outcome;
}

std::vector<SolutionRecord> CrowdServer::top(const ScenarioKey& key, std::size_t n) const {
  std::lock_guard guard(mutex_);
  auto it = tables_.find(key);
  if (it == tables_.end()) return {};
  return top_solutions(it->second, n);
}

std::optional<std::pair<ScenarioKey, SolutionRecord>> CrowdServer::solution(const std::string& uid) const {
  std::lock_guard guard(mutex_);
  for (const auto& [key, table] : tables_) {
    for (const auto& s : table.solutions) {
      if (s.solution_uid == uid) return std::make_pair(key, s);
    }
  }
  return std::nullopt;
}

std::optional<ScenarioTable> CrowdServer::table(const ScenarioKey& key) const {
  std::lock_guard guard(mutex_);
  auto it = tables_.find(key);
  if (it == tables_.end()) return std::nullopt;
  return it->second;
}

std::string CrowdServer::seed_solution(const ScenarioKey& key, const std::string& assignment_text) {
  std::lock_guard guard(mutex_);
  auto& table = tables_.try_emplace(key, ScenarioTable{key, {}}).first->second;
  auto uid = solution_uid_for(key, assignment_text);
  if (!find_solution(table, uid)) {
    table.solutions.push_back(SolutionRecord{uid, assignment_text, 0, 0, 1.0, 1.0, {}});
    recompute_counters(table);
  }
  persist(table);
  return uid;
}

void CrowdServer::classify(const ScenarioKey& key) {
  std::lock_guard guard(mutex_);
  auto it = tables_.find(key);
  if (it == tables_.end()) return;
  classify_online(it->second);
  persist(it->second);
}

std::vector<SolutionRecord> LocalTransport::top(const ScenarioKey& key, std::size_t n) { return server_.top(key, n); }

std::optional<SolutionRecord> LocalTransport::solution(const std::string& uid) {
  auto found = server_.solution(uid);
  if (!found) return std::nullopt;
  return found->second;
}

MergeOutcome LocalTransport::submit(const SubmitReport& report) { return server_.submit(report); }

CrowdClient::CrowdClient(const WorkloadRegistry& registry, ExperimentStore& store, const Pipeline& pipeline,
                         CrowdTransport& transport, std::filesystem::path queue_dir, StatsConfig stats)
    : registry_(registry),
      store_(store),
      pipeline_(pipeline),
      transport_(transport),
      queue_dir_(std::move(queue_dir)),
      stats_(stats) {}

CrowdTuneResult CrowdClient::crowdtune(const CrowdTuneOptions& options, const FlagSpace& space, const CompilerEnv& env) {
  if (options.repetitions < 1) throw ContractError("repetitions must be >= 1");
  if (options.extra_random < 0) throw ContractError("extra random count must be >= 0");
  registry_.load_workload(options.workload);
  auto baseline = parse(options.baseline_flags, space);

  // the shared list is cached so a later offline run can still replay it
  auto cache = queue_dir_ / ("top-" + md5_hex(options.key.str()).substr(0, 16) + ".json");
  std::vector<SolutionRecord> shared;
  try {
    shared = transport_.top(options.key, options.top_n);
    Json list = Json::array();
    for (const auto& s : shared) list.push_back(to_json(s));
    write_json_atomic(cache, list);
  } catch (const EnvironmentError&) {
    if (!std::filesystem::exists(cache)) throw;
    for (const auto& s : read_json(cache)) shared.push_back(solution_from_json(s));
  }

  ExperimentEntry entry;
  entry.scenario_id = options.key.scenario_id;
  entry.workload = options.workload;
  entry.dataset = options.dataset;
  entry.compiler = env;
  entry.platform = PlatformInfo::detect();
  CrowdTuneResult result;
  result.entry_uid = store_.create_entry(entry, space);

  std::uint64_t seed = options.sampling.seed;
  auto measure = [&](const FlagAssignment& a, const std::string& tag) {
    PipelineRequest request;
    request.workload = options.workload;
    request.dataset = options.dataset;
    request.command_key = options.command_key;
    request.assignment = a;
    request.env = env;
    request.repetitions = options.repetitions;
    request.noise_seed = splitmix64(seed++);
    auto point = make_point(pipeline_.execute(request, space), a, space,
                            ReplayInfo{options.workload, options.command_key, options.dataset, request.noise_seed,
                                       options.repetitions},
                            stats_);
    point.tag = tag;
    store_.record_point(result.entry_uid, point);
    return point;
  };

  auto base = measure(baseline, "baseline");
  if (base.failure) throw ContractError("baseline fails for workload '" + options.workload + "'");
  const auto& base_time = base.characteristics.at(kExecutionTime);

  auto& report = result.report;
  report.participant = options.participant.empty() ? UidGenerator::from_environment().next() : options.participant;
  report.key = options.key;
  report.workload = options.workload;
  report.baseline_digest = md5_hex(to_json(base_time).dump());

  for (const auto& s : shared) {
    FlagAssignment a;
    try {
      a = parse(s.assignment_text, space);
    } catch (const ContractError&) {
      result.discarded.push_back(s.solution_uid);
      continue;
    }
    auto p = measure(a, "solution:" + s.solution_uid);
    if (p.failure) {
      result.discarded.push_back(s.solution_uid);
      continue;
    }
    const auto& t = p.characteristics.at(kExecutionTime);
    if (!compare(base_time, t, stats_.trust_threshold).trustable) {
      result.discarded.push_back(s.solution_uid);
      continue;
    }
    report.reactions[s.solution_uid] = speedup_over_baseline(base_time, t);
  }

  std::optional<Candidate> best;
  for (int i = 0; i < options.extra_random; ++i) {
    SamplingPolicy policy = options.sampling;
    policy.seed = splitmix64(options.sampling.seed + 0x1000 + static_cast<std::uint64_t>(i));
    auto a = sample_random(space, policy);
    if (!policy.enable_base) a.base_level = baseline.base_level;
    auto p = measure(a, "random");
    if (p.failure) continue;
    const auto& t = p.characteristics.at(kExecutionTime);
    if (!compare(base_time, t, stats_.trust_threshold).trustable) {
      result.discarded.push_back("random:" + std::to_string(i));
      continue;
    }
    double speedup = speedup_over_baseline(base_time, t);
    if (!best || speedup > best->improvement) best = Candidate{p.rendered, speedup};
  }
  if (best) {
    report.candidate = best;
    if (!candidate_admissible(report)) report.candidate.reset();
  }

  try {
    transport_.submit(report);
    result.submitted = true;
  } catch (const EnvironmentError&) {
    auto file = queue_dir_ / ("report-" + result.entry_uid + ".json");
    write_json_atomic(file, to_json(report));
    result.queued_file = file;
  }
  return result;
}

int CrowdClient::flush_queue() {
  if (!std::filesystem::is_directory(queue_dir_)) return 0;
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(queue_dir_)) {
    auto name = e.path().filename().string();
    if (name.starts_with("report-") && e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  int delivered = 0;
  for (const auto& f : files) {
    try {
      transport_.submit(report_from_json(read_json(f)));
    } catch (const EnvironmentError&) {
      break;
    }
    std::filesystem::remove(f);
    ++delivered;
  }
  return delivered;
}

}  // namespace flagforge
