#include "flagforge/workload.hpp"

#include <algorithm>
#include <set>

#include "flagforge/error.hpp"
#include "flagforge/lock.hpp"

namespace flagforge {
namespace {

const std::set<std::string> kBuildPlaceholders = {"compiler", "flags", "src", "binary", "workdir"};
const std::set<std::string> kRunPlaceholders = {"binary", "dataset_file", "src", "workdir"};

void check_placeholders(const std::string& tmpl, const std::set<std::string>& allowed, const std::string& what) {
  std::size_t pos = 0;
  while ((pos = tmpl.find('{', pos)) != std::string::npos) {
    auto close = tmpl.find('}', pos);
    if (close == std::string::npos) throw ContractError("unterminated placeholder in " + what);
    auto name = tmpl.substr(pos + 1, close - pos - 1);
    if (!allowed.contains(name)) throw ContractError("unresolvable placeholder {" + name + "} in " + what);
    pos = close + 1;
  }
}

std::string_view kind_name(WorkloadKind kind) { return kind == WorkloadKind::kReal ? "real" : "synthetic"; }

Json to_json(const OutputReference& ref) {
  Json j{{"mode", ref.mode == OutputReference::Mode::kDigest ? "digest" : "numeric"}};
  if (!ref.md5.empty()) j["md5"] = ref.md5;
  if (ref.file) j["file"] = ref.file->string();
  if (ref.mode == OutputReference::Mode::kNumeric) j["rel_tol"] = ref.relative_tolerance;
  return j;
}

OutputReference reference_from_json(const Json& j) {
  OutputReference ref;
  if (j.is_string()) {
    auto text = j.get<std::string>();
    if (text.starts_with("md5:")) ref.md5 = text.substr(4);
    else ref.file = text;
    return ref;
  }
  auto mode = j.value("mode", std::string("digest"));
  if (mode == "numeric") ref.mode = OutputReference::Mode::kNumeric;
  else if (mode != "digest") throw ContractError("unknown reference mode '" + mode + "'");
  ref.md5 = j.value("md5", std::string());
  if (j.contains("file")) ref.file = j.at("file").get<std::string>();
  ref.relative_tolerance = j.value("rel_tol", 1e-6);
  return ref;
}

Json to_json(const FlagEffect& e) {
  Json j{{"time_multiplier", e.time_multiplier}, {"size_delta", e.size_delta}};
  if (e.md5_salt) j["md5_salt"] = *e.md5_salt;
  if (e.failure) j["failure"] = std::string(to_string(*e.failure));
  if (e.fixed_in) j["fixed_in"] = *e.fixed_in;
  if (e.condition) {
    j["condition"] = {{"param", e.condition->param},
                      {"threshold", e.condition->threshold},
                      {"otherwise_multiplier", e.condition->otherwise_multiplier}};
  }
  return j;
}

FlagEffect effect_from_json(const Json& j) {
  FlagEffect e;
  e.time_multiplier = j.value("time_multiplier", 1.0);
  e.size_delta = j.value("size_delta", std::int64_t{0});
  if (j.contains("md5_salt")) e.md5_salt = j.at("md5_salt").get<std::string>();
  if (j.contains("failure")) e.failure = parse_failure_kind(j.at("failure").get<std::string>());
  if (j.contains("fixed_in")) e.fixed_in = j.at("fixed_in").get<std::string>();
  if (j.contains("condition")) {
    const auto& c = j.at("condition");
    e.condition = DatasetCondition{c.at("param").get<std::string>(), c.at("threshold").get<double>(),
                                   c.value("otherwise_multiplier", 1.0)};
  }
  return e;
}

}  // namespace

Json to_json(const SyntheticSpec& spec) {
  Json effects = Json::object();
  for (const auto& [key, e] : spec.flag_effects) effects[key] = to_json(e);
  Json noise;
  switch (spec.noise.kind) {
    case NoiseModel::Kind::kNone:
      noise = {{"kind", "none"}};
      break;
    case NoiseModel::Kind::kGaussian:
      noise = {{"kind", "gaussian"}, {"sigma", spec.noise.sigma}};
      break;
    case NoiseModel::Kind::kBimodal:
      noise = {{"kind", "bimodal"}, {"offset", spec.noise.offset}, {"probability", spec.noise.probability}};
      break;
  }
  return Json{{"base_time", spec.base_time}, {"base_size", spec.base_size}, {"noise", noise}, {"flag_effects", effects}};
}

SyntheticSpec synthetic_from_json(const Json& j) {
  SyntheticSpec spec;
  spec.base_time = j.value("base_time", 1.0);
  spec.base_size = j.value("base_size", std::int64_t{1});
  if (j.contains("noise")) {
    const auto& n = j.at("noise");
    auto kind = n.value("kind", std::string("none"));
    if (kind == "gaussian") {
      spec.noise.kind = NoiseModel::Kind::kGaussian;
      spec.noise.sigma = n.at("sigma").get<double>();
    } else if (kind == "bimodal") {
      spec.noise.kind = NoiseModel::Kind::kBimodal;
      spec.noise.offset = n.at("offset").get<double>();
      spec.noise.probability = n.at("probability").get<double>();
    } else if (kind != "none") {
      throw ContractError("unknown noise model '" + kind + "'");
    }
  }
  const Json effects = j.value("flag_effects", Json::object());
  for (const auto& [key, e] : effects.items()) {
    spec.flag_effects[key] = effect_from_json(e);
  }
  return spec;
}

Json to_json(const WorkloadMeta& m) {
  Json j{{"id", m.id}, {"title", m.title}, {"kind", kind_name(m.kind)}};
  if (!m.build_template.empty()) j["build_template"] = m.build_template;
  if (!m.run_commands.empty()) j["run_commands"] = m.run_commands;
  if (!m.reference_output.empty()) {
    Json refs = Json::object();
    for (const auto& [k, r] : m.reference_output) refs[k] = to_json(r);
    j["reference_output"] = refs;
  }
  j["dataset_tags"] = m.dataset_tags;
  if (m.feature_file) j["feature_file"] = m.feature_file->string();
  if (!m.tunable_params.empty()) {
    Json params = Json::array();
    for (const auto& p : m.tunable_params) {
      params.push_back({{"name", p.name}, {"min", p.min}, {"max", p.max}, {"env", p.env_var}});
    }
    j["tunable_params"] = params;
  }
  if (m.synthetic) j["synthetic"] = to_json(*m.synthetic);
  if (m.source_dir) j["source_dir"] = m.source_dir->string();
  if (m.deterministic_build) j["deterministic_build"] = true;
  return j;
}

WorkloadMeta workload_from_json(const Json& j) {
  try {
    WorkloadMeta m;
    m.id = j.at("id").get<std::string>();
    m.title = j.value("title", std::string());
    auto kind = j.value("kind", std::string("real"));
    if (kind == "synthetic") m.kind = WorkloadKind::kSynthetic;
    else if (kind != "real") throw ContractError("unknown workload kind '" + kind + "'");
    m.build_template = j.value("build_template", std::string());
    m.run_commands = j.value("run_commands", std::map<std::string, std::string>{});
    const Json refs = j.value("reference_output", Json::object());
    for (const auto& [k, r] : refs.items()) {
      m.reference_output[k] = reference_from_json(r);
    }
    m.dataset_tags = j.value("dataset_tags", std::vector<std::string>{});
    if (j.contains("feature_file")) m.feature_file = j.at("feature_file").get<std::string>();
    for (const auto& p : j.value("tunable_params", Json::array())) {
      m.tunable_params.push_back({p.at("name").get<std::string>(), p.at("min").get<std::int64_t>(),
                                  p.at("max").get<std::int64_t>(), p.at("env").get<std::string>()});
    }
    if (j.contains("synthetic")) m.synthetic = synthetic_from_json(j.at("synthetic"));
    if (j.contains("source_dir")) m.source_dir = j.at("source_dir").get<std::string>();
    m.deterministic_build = j.value("deterministic_build", false);
    return m;
  } catch (const Json::exception& e) {
    throw ContractError(std::string("malformed workload meta: ") + e.what());
  }
}

Json to_json(const DatasetMeta& d) {
  std::vector<std::string> files;
  for (const auto& f : d.files) files.push_back(f.string());
  return Json{{"id", d.id}, {"tags", d.tags}, {"files", files}, {"params", d.params}};
}

DatasetMeta dataset_from_json(const Json& j) {
  try {
    DatasetMeta d;
    d.id = j.at("id").get<std::string>();
    d.tags = j.value("tags", std::vector<std::string>{});
    for (const auto& f : j.value("files", std::vector<std::string>{})) d.files.emplace_back(f);
    d.params = j.value("params", std::map<std::string, double>{});
    return d;
  } catch (const Json::exception& e) {
    throw ContractError(std::string("malformed dataset meta: ") + e.what());
  }
}

void validate_workload(const WorkloadMeta& m) {
  if (m.id.empty() || m.id.find('/') != std::string::npos) throw ContractError("invalid workload id '" + m.id + "'");
  if (m.kind == WorkloadKind::kSynthetic) {
    if (!m.synthetic) throw ContractError("synthetic workload '" + m.id + "' has no synthetic spec");
    if (!m.build_template.empty() || !m.run_commands.empty()) {
      throw ContractError("synthetic workload '" + m.id + "' must not carry build or run templates");
    }
    const auto& s = *m.synthetic;
    if (!(s.base_time > 0)) throw ContractError("synthetic base_time must be positive");
    if (s.base_size <= 0) throw ContractError("synthetic base_size must be positive");
    for (const auto& [key, e] : s.flag_effects) {
      if (!(e.time_multiplier > 0)) throw ContractError("time_multiplier of '" + key + "' must be positive");
      if (e.condition && !(e.condition->otherwise_multiplier > 0)) {
        throw ContractError("otherwise_multiplier of '" + key + "' must be positive");
      }
    }
  } else {
    if (m.synthetic) throw ContractError("real workload '" + m.id + "' carries a synthetic spec");
    if (m.build_template.empty()) throw ContractError("real workload '" + m.id + "' has no build template");
    check_placeholders(m.build_template, kBuildPlaceholders, "build_template of " + m.id);
  }
  for (const auto& [key, cmd] : m.run_commands) check_placeholders(cmd, kRunPlaceholders, "run command '" + key + "'");
  for (const auto& p : m.tunable_params) {
    if (p.min > p.max) throw ContractError("tunable parameter '" + p.name + "' has min > max");
    if (p.env_var.empty()) throw ContractError("tunable parameter '" + p.name + "' has no variable name");
  }
}

WorkloadRegistry::WorkloadRegistry(std::filesystem::path repo_root) : root_(std::move(repo_root)) {}

std::filesystem::path WorkloadRegistry::entry_dir(const char* kind, const std::string& id) const {
  return root_ / kind / id;
}

std::string WorkloadRegistry::register_workload(const WorkloadMeta& meta) {
  validate_workload(meta);
  std::lock_guard guard(mutex_);
  FileLock lock(root_ / ".registry.lock");
  auto dir = entry_dir("workload", meta.id);
  if (std::filesystem::exists(dir / "meta.json")) throw ContractError("duplicate workload id '" + meta.id + "'");
  write_json_atomic(dir / "meta.json", to_json(meta));
  return meta.id;
}

std::string WorkloadRegistry::register_dataset(const DatasetMeta& meta) {
  if (meta.id.empty() || meta.id.find('/') != std::string::npos) throw ContractError("invalid dataset id '" + meta.id + "'");
  std::lock_guard guard(mutex_);
  FileLock lock(root_ / ".registry.lock");
  auto dir = entry_dir("dataset", meta.id);
  if (std::filesystem::exists(dir / "meta.json")) throw ContractError("duplicate dataset id '" + meta.id + "'");
  write_json_atomic(dir / "meta.json", to_json(meta));
  return meta.id;
}

bool WorkloadRegistry::has_workload(const std::string& id) const {
  return !id.empty() && std::filesystem::exists(entry_dir("workload", id) / "meta.json");
}

WorkloadMeta WorkloadRegistry::load_workload(const std::string& id) const {
  auto file = entry_dir("workload", id) / "meta.json";
  if (id.empty() || !std::filesystem::exists(file)) throw ContractError("unknown workload '" + id + "'");
  return workload_from_json(read_json(file));
}

DatasetMeta WorkloadRegistry::load_dataset(const std::string& id) const {
  auto file = entry_dir("dataset", id) / "meta.json";
  if (id.empty() || !std::filesystem::exists(file)) throw ContractError("unknown dataset '" + id + "'");
  return dataset_from_json(read_json(file));
}

namespace {
std::vector<std::string> list_dir(const std::filesystem::path& dir) {
  std::vector<std::string> ids;
  if (!std::filesystem::is_directory(dir)) return ids;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (std::filesystem::exists(e.path() / "meta.json")) ids.push_back(e.path().filename().string());
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}
}  // namespace

std::vector<std::string> WorkloadRegistry::list_workloads() const { return list_dir(root_ / "workload"); }
std::vector<std::string> WorkloadRegistry::list_datasets() const { return list_dir(root_ / "dataset"); }

std::vector<DatasetMeta> WorkloadRegistry::resolve_datasets(const std::string& workload,
                                                            const std::optional<std::string>& tag_filter) const {
  auto meta = load_workload(workload);
  std::vector<DatasetMeta> out;
  if (meta.dataset_tags.empty()) return out;
  std::set<std::string> wanted(meta.dataset_tags.begin(), meta.dataset_tags.end());
  for (const auto& id : list_datasets()) {
    auto d = load_dataset(id);
    bool intersects = std::any_of(d.tags.begin(), d.tags.end(), [&](const auto& t) { return wanted.contains(t); });
    bool filtered = !tag_filter || std::find(d.tags.begin(), d.tags.end(), *tag_filter) != d.tags.end();
    if (!intersects || !filtered) continue;
    for (const auto& f : d.files) {
      auto path = f.is_absolute() ? f : root_ / f;
      if (!std::filesystem::exists(path)) throw EnvironmentError("dataset '" + d.id + "' file missing: " + path.string());
    }
    out.push_back(std::move(d));
  }
  return out;
}

FeatureVector WorkloadRegistry::load_feature_vector(const std::string& workload) const {
  auto meta = load_workload(workload);
  if (!meta.feature_file) throw ContractError("workload '" + workload + "' has no feature file");
  auto path = meta.feature_file->is_absolute() ? *meta.feature_file : root_ / *meta.feature_file;
  return read_feature_file(path, workload);
}

}  // namespace flagforge
