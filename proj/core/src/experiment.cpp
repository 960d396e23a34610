#include "flagforge/experiment.hpp"

#include <sys/utsname.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "flagforge/error.hpp"
#include "flagforge/lock.hpp"
#include "flagforge/pareto.hpp"

namespace flagforge {
namespace {

Json to_json(const ReplayInfo& r) {
  return Json{{"workload", r.workload}, {"command_key", r.command_key}, {"dataset", r.dataset},
              {"seed", r.seed},         {"repetitions", r.repetitions}};
}

ReplayInfo replay_from_json(const Json& j) {
  ReplayInfo r;
  r.workload = j.value("workload", std::string());
  r.command_key = j.value("command_key", std::string());
  r.dataset = j.value("dataset", std::string());
  r.seed = j.value("seed", std::uint64_t{0});
  r.repetitions = j.value("repetitions", 1);
  return r;
}

std::string csv_field(const std::string& text) {
  if (text.find_first_of(",\"\n") == std::string::npos) return text;
  std::string out = "\"";
  for (char c : text) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

const std::vector<std::string> kExportColumns = {"uid", "tag", "time", "time_pm", "size", "compile_time",
                                                 "md5", "failure", "flags", "frontier"};
const std::vector<std::string> kDefaultColumns = {"uid", "time", "time_pm", "size", "flags", "frontier"};


}  // namespace

PlatformInfo PlatformInfo::detect() {
  PlatformInfo info;
  struct utsname u {};
  if (::uname(&u) == 0) info.os = std::string(u.sysname) + "-" + u.machine;
  std::ifstream cpuinfo("/proc/cpuinfo");
  for (std::string line; std::getline(cpuinfo, line);) {
    if (line.starts_with("model name")) {
      auto colon = line.find(':');
      if (colon != std::string::npos) {
        info.cpu_model = line.substr(line.find_first_not_of(' ', colon + 1));
        break;
      }
    }
  }
  if (info.cpu_model.empty()) info.cpu_model = "unknown";
  std::array<char, 256> host{};
  ::gethostname(host.data(), host.size() - 1);
  info.hostname_hash = md5_hex(host.data()).substr(0, 16);
  return info;
}

double ExperimentPoint::objective(const std::string& characteristic) const {
  auto it = characteristics.find(characteristic);
  if (it == characteristics.end()) throw ContractError("point " + point_uid + " has no " + characteristic);
  return it->second.expected;
}

Json to_json(const ExperimentPoint& p) {
  Json chars = Json::object();
  for (const auto& [name, s] : p.characteristics) chars[name] = to_json(s);
  Json j{{"point_uid", p.point_uid},
         {"tag", p.tag},
         {"assignment", assignment_to_json(p.assignment)},
         {"rendered", p.rendered},
         {"characteristics", chars},
         {"raw_samples", p.raw_samples},
         {"replay_info", to_json(p.replay_info)},
         {"trustable", p.trustable}};
  if (!p.binary_md5.empty()) j["binary_md5"] = p.binary_md5;
  if (p.failure) j["failure"] = std::string(to_string(*p.failure));
  return j;
}

ExperimentPoint point_from_json(const Json& j) {
  try {
    ExperimentPoint p;
    p.point_uid = j.at("point_uid").get<std::string>();
    p.tag = j.value("tag", std::string());
    p.assignment = assignment_from_json(j.at("assignment"));
    p.rendered = j.value("rendered", std::string());
    const Json characteristics = j.value("characteristics", Json::object());
    for (const auto& [name, s] : characteristics.items()) {
      p.characteristics[name] = stats_from_json(s);
    }
    p.raw_samples = j.value("raw_samples", std::map<std::string, std::vector<double>>{});
    p.binary_md5 = j.value("binary_md5", std::string());
    if (j.contains("failure")) p.failure = parse_failure_kind(j.at("failure").get<std::string>());
    p.replay_info = replay_from_json(j.value("replay_info", Json::object()));
    p.trustable = j.value("trustable", true);
    return p;
  } catch (const Json::exception& e) {
    throw ContractError(std::string("malformed point: ") + e.what());
  }
}

Json to_json(const ExperimentEntry& e) {
  Json checks = Json::array();
  for (const auto& c : e.baseline_checks) {
    checks.push_back({{"iteration", c.iteration}, {"expected", c.expected}, {"drift", c.drift}});
  }
  return Json{{"entry_uid", e.entry_uid},
              {"alias", e.alias},
              {"scenario_id", e.scenario_id},
              {"workload", e.workload},
              {"dataset", e.dataset},
              {"compiler", to_json(e.compiler)},
              {"platform", {{"os", e.platform.os}, {"cpu_model", e.platform.cpu_model},
                            {"hostname_hash", e.platform.hostname_hash}}},
              {"created_at", e.created_at},
              {"points", e.points},
              {"baseline_checks", checks},
              {"drift_detected", e.drift_detected}};
}

ExperimentEntry entry_from_json(const Json& j) {
  try {
    ExperimentEntry e;
    e.entry_uid = j.at("entry_uid").get<std::string>();
    e.alias = j.value("alias", std::string());
    e.scenario_id = j.value("scenario_id", std::string());
    e.workload = j.value("workload", std::string());
    e.dataset = j.value("dataset", std::string());
    if (j.contains("compiler")) e.compiler = compiler_env_from_json(j.at("compiler"));
    if (j.contains("platform")) {
      const auto& p = j.at("platform");
      e.platform = {p.value("os", std::string()), p.value("cpu_model", std::string()),
                    p.value("hostname_hash", std::string())};
    }
    e.created_at = j.value("created_at", std::int64_t{0});
    e.points = j.value("points", std::vector<std::string>{});
    for (const auto& c : j.value("baseline_checks", Json::array())) {
      e.baseline_checks.push_back({c.at("iteration").get<int>(), c.at("expected").get<double>(), c.at("drift").get<double>()});
    }
    e.drift_detected = j.value("drift_detected", false);
    return e;
  } catch (const Json::exception& ex) {
    throw ContractError(std::string("malformed entry: ") + ex.what());
  }
}

ExperimentPoint make_point(const PipelineResult& result, const FlagAssignment& assignment, const FlagSpace& space,
                           ReplayInfo replay, const StatsConfig& stats) {
  ExperimentPoint p;
  p.assignment = assignment;
  p.rendered = render(assignment, space);
  p.replay_info = std::move(replay);
  p.failure = result.failure;
  if (result.compile_ok) p.binary_md5 = result.binary_md5;
  auto times = result.run_times();
  if (!times.empty()) p.raw_samples[kExecutionTime] = times;
  if (result.compile_ok) {
    p.raw_samples[kBinarySize] = {static_cast<double>(result.binary_size)};
    p.raw_samples[kCompileTime] = {result.compile_time};
  }
  if (!result.failure && result.compile_ok) {
    for (const auto& [name, samples] : p.raw_samples) p.characteristics[name] = summarize(samples, stats);
  }
  return p;
}

std::optional<std::vector<double>> objective_vector(const ExperimentPoint& p, const std::vector<std::string>& objectives) {
  if (p.failure) return std::nullopt;
  std::vector<double> v;
  for (const auto& o : objectives) {
    auto it = p.characteristics.find(o);
    if (it == p.characteristics.end()) return std::nullopt;
    v.push_back(it->second.expected);
  }
  return v;
}

std::vector<FrontierPoint> frontier_candidates(const std::vector<ExperimentPoint>& points,
                                               const std::vector<std::string>& objectives) {
  std::vector<FrontierPoint> out;
  for (const auto& p : points) {
    if (auto v = objective_vector(p, objectives)) out.push_back({p.point_uid, std::move(*v)});
  }
  return out;
}

Json to_json(const ReplayReport& r) {
  Json rows = Json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"characteristic", row.characteristic},
                    {"original", row.original},
                    {"replayed", row.replayed},
                    {"relative_difference", row.relative_difference},
                    {"passed", row.passed}});
  }
  Json j{{"rows", rows}, {"md5_match", r.md5_match}, {"behavioral_difference", r.behavioral_difference},
         {"passed", r.passed}};
  j["original_failure"] = r.original_failure ? Json(std::string(to_string(*r.original_failure))) : Json();
  j["replayed_failure"] = r.replayed_failure ? Json(std::string(to_string(*r.replayed_failure))) : Json();
  return j;
}

ExperimentStore::ExperimentStore(std::filesystem::path repo_root, UidGenerator uids)
    : root_(std::move(repo_root)), uids_(uids) {}

std::filesystem::path ExperimentStore::entry_dir(const std::string& uid) const { return root_ / "experiment" / uid; }

std::string ExperimentStore::create_entry(ExperimentEntry entry, const FlagSpace& space) {
  if (entry.entry_uid.empty()) {
    // a reused seed replays the same uid sequence; skip what is taken
    do entry.entry_uid = uids_.next();
    while (std::filesystem::exists(entry_dir(entry.entry_uid)));
  }
  if (!is_uid(entry.entry_uid)) throw ContractError("invalid entry uid '" + entry.entry_uid + "'");
  if (!entry.alias.empty()) {
    if (is_uid(entry.alias)) throw ContractError("alias '" + entry.alias + "' looks like a uid");
    if (has_entry(entry.alias)) throw ContractError("alias '" + entry.alias + "' already in use");
  }
  auto dir = entry_dir(entry.entry_uid);
  if (std::filesystem::exists(dir / "meta.json")) throw ContractError("duplicate entry uid " + entry.entry_uid);
  if (entry.created_at == 0) entry.created_at = unix_now();
  entry.points.clear();
  std::filesystem::create_directories(dir / "points");
  write_json_atomic(dir / "flagspace.json", flagspace_to_json(space));
  write_json_atomic(dir / "meta.json", to_json(entry));
  return entry.entry_uid;
}

std::string ExperimentStore::resolve(const std::string& uid_or_alias) const {
  if (uid_or_alias.empty()) throw ContractError("empty experiment reference");
  if (is_uid(uid_or_alias) && std::filesystem::exists(entry_dir(uid_or_alias) / "meta.json")) return uid_or_alias;
  auto base = root_ / "experiment";
  if (std::filesystem::is_directory(base)) {
    std::vector<std::filesystem::path> dirs;
    for (const auto& d : std::filesystem::directory_iterator(base)) dirs.push_back(d.path());
    std::sort(dirs.begin(), dirs.end());
    for (const auto& d : dirs) {
      if (!std::filesystem::exists(d / "meta.json")) continue;
      auto meta = read_json(d / "meta.json");
      if (meta.value("alias", std::string()) == uid_or_alias) return d.filename().string();
    }
  }
  throw ContractError("unknown experiment '" + uid_or_alias + "'");
}

bool ExperimentStore::has_entry(const std::string& uid_or_alias) const {
  try {
    resolve(uid_or_alias);
    return true;
  } catch (const ContractError&) {
    return false;
  }
}

ExperimentEntry ExperimentStore::load_entry(const std::string& uid_or_alias) const {
  return entry_from_json(read_json(entry_dir(resolve(uid_or_alias)) / "meta.json"));
}

void ExperimentStore::save_entry(const ExperimentEntry& entry) {
  auto dir = entry_dir(resolve(entry.entry_uid));
  FileLock lock(dir / ".lock");
  write_json_atomic(dir / "meta.json", to_json(entry));
}

FlagSpace ExperimentStore::load_flagspace(const std::string& uid_or_alias) const {
  return parse_flagspace(read_json(entry_dir(resolve(uid_or_alias)) / "flagspace.json"));
}

std::vector<ExperimentEntry> ExperimentStore::list_entries() const {
  std::vector<ExperimentEntry> out;
  auto base = root_ / "experiment";
  if (!std::filesystem::is_directory(base)) return out;
  for (const auto& d : std::filesystem::directory_iterator(base)) {
    if (std::filesystem::exists(d.path() / "meta.json")) out.push_back(entry_from_json(read_json(d.path() / "meta.json")));
  }
  std::sort(out.begin(), out.end(), [](const ExperimentEntry& a, const ExperimentEntry& b) {
    if (a.created_at != b.created_at) return a.created_at < b.created_at;
    return a.entry_uid < b.entry_uid;
  });
  return out;
}

std::filesystem::path ExperimentStore::point_path(const std::string& entry, const std::string& point_uid) const {
  return entry_dir(resolve(entry)) / "points" / (point_uid + ".json");
}

std::string ExperimentStore::record_point(const std::string& entry, ExperimentPoint point) {
  auto uid = resolve(entry);
  auto dir = entry_dir(uid);
  FileLock lock(dir / ".lock");
  auto meta = entry_from_json(read_json(dir / "meta.json"));
  if (point.point_uid.empty()) {
    do point.point_uid = uids_.next();
    while (std::filesystem::exists(dir / "points" / (point.point_uid + ".json")));
  }
  if (!is_uid(point.point_uid)) throw ContractError("invalid point uid '" + point.point_uid + "'");
  auto file = dir / "points" / (point.point_uid + ".json");
  if (std::filesystem::exists(file) ||
      std::find(meta.points.begin(), meta.points.end(), point.point_uid) != meta.points.end()) {
    throw ContractError("duplicate point uid " + point.point_uid);
  }
  // point file first, so the index never references a missing file
  write_json_atomic(file, to_json(point));
  meta.points.push_back(point.point_uid);
  write_json_atomic(dir / "meta.json", to_json(meta));
  return point.point_uid;
}

ExperimentPoint ExperimentStore::load_point(const std::string& entry, const std::string& point_uid) const {
  auto file = point_path(entry, point_uid);
  if (!std::filesystem::exists(file)) throw ContractError("unknown point " + point_uid);
  return point_from_json(read_json(file));
}

std::vector<ExperimentPoint> ExperimentStore::load_points(const std::string& entry) const {
  auto e = load_entry(entry);
  std::vector<ExperimentPoint> out;
  out.reserve(e.points.size());
  for (const auto& uid : e.points) out.push_back(load_point(e.entry_uid, uid));
  return out;
}

void ExperimentStore::remove_point(const std::string& entry, const std::string& point_uid) {
  auto uid = resolve(entry);
  auto dir = entry_dir(uid);
  FileLock lock(dir / ".lock");
  auto meta = entry_from_json(read_json(dir / "meta.json"));
  auto it = std::find(meta.points.begin(), meta.points.end(), point_uid);
  if (it == meta.points.end()) throw ContractError("unknown point " + point_uid);
  meta.points.erase(it);
  write_json_atomic(dir / "meta.json", to_json(meta));
  std::filesystem::remove(dir / "points" / (point_uid + ".json"));
}

std::string ExperimentStore::export_table(const std::string& entry, const std::vector<std::string>& columns) const {
  const auto& cols = columns.empty() ? kDefaultColumns : columns;
  for (const auto& c : cols) {
    if (std::find(kExportColumns.begin(), kExportColumns.end(), c) == kExportColumns.end()) {
      throw ContractError("unknown column '" + c + "'");
    }
  }
  auto points = load_points(entry);
  std::set<std::string> frontier;
  for (const auto& f : pareto_filter(frontier_candidates(points, {kExecutionTime, kBinarySize}))) {
    frontier.insert(f.point_uid);
  }

  auto stat = [](const ExperimentPoint& p, const char* name) -> const CharacteristicStats* {
    auto it = p.characteristics.find(name);
    return it == p.characteristics.end() ? nullptr : &it->second;
  };
  std::ostringstream out;
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
  for (const auto& p : points) {
    for (std::size_t i = 0; i < cols.size(); ++i) {
      const auto& c = cols[i];
      std::string field;
      if (c == "uid") field = p.point_uid;
      else if (c == "tag") field = p.tag;
      else if (c == "time") field = stat(p, kExecutionTime) ? format_double(stat(p, kExecutionTime)->expected) : "";
      else if (c == "time_pm") field = stat(p, kExecutionTime) ? format_double(stat(p, kExecutionTime)->spread() / 2) : "";
      else if (c == "size") field = stat(p, kBinarySize) ? format_double(stat(p, kBinarySize)->expected) : "";
      else if (c == "compile_time") field = stat(p, kCompileTime) ? format_double(stat(p, kCompileTime)->expected) : "";
      else if (c == "md5") field = p.binary_md5;
      else if (c == "failure") field = p.failure ? std::string(to_string(*p.failure)) : "";
      else if (c == "flags") field = p.rendered;
      else if (c == "frontier") field = frontier.contains(p.point_uid) ? "1" : "0";
      out << (i ? "," : "") << csv_field(field);
    }
    out << '\n';
  }
  return out.str();
}

ReplayReport replay(const ExperimentStore& store, const Pipeline& pipeline, const std::string& entry,
                    const std::string& point_uid, double tolerance, const std::optional<CompilerEnv>& env_override,
                    const std::vector<std::string>& characteristics) {
  auto e = store.load_entry(entry);
  auto original = store.load_point(e.entry_uid, point_uid);
  auto space = store.load_flagspace(e.entry_uid);
  CompilerEnv env = env_override.value_or(e.compiler);
  if (!env.synthetic && !env.executable.empty() && !std::filesystem::exists(env.executable)) {
    throw EnvironmentError("compiler " + env.executable.string() + " is not available");
  }

  PipelineRequest request;
  request.workload = original.replay_info.workload;
  request.dataset = original.replay_info.dataset;
  request.command_key = original.replay_info.command_key;
  request.assignment = original.assignment;
  request.env = env;
  request.repetitions = std::max(1, original.replay_info.repetitions);
  // same noise stream: synthetic points replay bit-for-bit
  request.noise_seed = original.replay_info.seed;
  auto result = pipeline.execute(request, space);
  auto replayed = make_point(result, original.assignment, space, original.replay_info);

  ReplayReport report;
  report.original_failure = original.failure;
  report.replayed_failure = replayed.failure;
  report.behavioral_difference = original.failure != replayed.failure;
  report.md5_match = original.binary_md5 == replayed.binary_md5;
  for (const auto& c : characteristics) {
    auto a = original.characteristics.find(c);
    auto b = replayed.characteristics.find(c);
    if (a == original.characteristics.end() || b == replayed.characteristics.end()) continue;
    ReplayRow row;
    row.characteristic = c;
    row.original = a->second.expected;
    row.replayed = b->second.expected;
    row.relative_difference = row.original != 0 ? std::abs(row.replayed - row.original) / std::abs(row.original)
                                                : std::abs(row.replayed);
    row.passed = row.relative_difference <= tolerance;
    report.rows.push_back(row);
  }
  report.passed = !report.behavioral_difference &&
                  std::all_of(report.rows.begin(), report.rows.end(), [](const ReplayRow& r) { return r.passed; });
  return report;
}

}  // namespace flagforge
