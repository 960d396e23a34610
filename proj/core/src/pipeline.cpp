#include "flagforge/pipeline.hpp"

#include <stdlib.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <random>
#include <regex>
#include <set>
#include <sstream>

#include "flagforge/error.hpp"
#include "flagforge/subprocess.hpp"

namespace flagforge {
namespace {

const std::regex kCompilerName(R"(^(gcc|clang)(-[0-9]+(\.[0-9]+)*)?$)");
const std::regex kBaseLevel(R"(^-O([0-3sgz]|fast)?$)");

std::string substitute(std::string text, const std::map<std::string, std::string>& values) {
  for (const auto& [key, value] : values) {
    std::string needle = "{" + key + "}";
    std::size_t pos = 0;
    while ((pos = text.find(needle, pos)) != std::string::npos) {
      text.replace(pos, needle.size(), value);
      pos += value.size();
    }
  }
  return text;
}

std::optional<std::string> query_version(const std::filesystem::path& exe, const std::string& family) {
  auto quoted = shell_quote(exe.string());
  if (family == "gcc") {
    for (const char* flag : {" -dumpfullversion", " -dumpversion"}) {
      auto out = capture_output(quoted + flag + " 2>/dev/null");
      if (!out) continue;
      std::smatch m;
      if (std::regex_search(*out, m, std::regex(R"(^\s*([0-9]+(\.[0-9]+)*))"))) return m[1].str();
    }
    return std::nullopt;
  }
  auto out = capture_output(quoted + " --version");
  if (!out) return std::nullopt;
  std::smatch m;
  if (std::regex_search(*out, m, std::regex(R"(clang version ([0-9]+(\.[0-9]+)*))"))) return m[1].str();
  return std::nullopt;
}

std::filesystem::path resolve(const std::filesystem::path& root, const std::filesystem::path& p) {
  return p.is_absolute() ? p : root / p;
}

std::int64_t file_size_or_zero(const std::filesystem::path& p) {
  std::error_code ec;
  auto size = std::filesystem::file_size(p, ec);
  return ec ? 0 : static_cast<std::int64_t>(size);
}

std::vector<std::string> words(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

bool numeric_equal(std::string_view produced, std::string_view expected, double tol) {
  auto a = words(produced);
  auto b = words(expected);
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    char* end_a = nullptr;
    char* end_b = nullptr;
    double x = std::strtod(a[i].c_str(), &end_a);
    double y = std::strtod(b[i].c_str(), &end_b);
    bool both_numbers = *end_a == '\0' && *end_b == '\0' && !a[i].empty() && !b[i].empty();
    if (!both_numbers) {
      if (a[i] != b[i]) return false;
      continue;
    }
    if (x == y) continue;
    double scale = std::max(std::abs(x), std::abs(y));
    if (!(std::abs(x - y) <= tol * scale)) return false;
  }
  return true;
}

}  // namespace

CompilerEnv CompilerEnv::synthetic_env(std::string family, std::string version) {
  CompilerEnv env;
  env.id = "synthetic-" + family + "-" + version;
  env.family = std::move(family);
  env.version = std::move(version);
  env.synthetic = true;
  return env;
}

Json to_json(const CompilerEnv& env) {
  return Json{{"id", env.id},
              {"family", env.family},
              {"version", env.version},
              {"executable", env.executable.string()},
              {"detected_at", env.detected_at},
              {"synthetic", env.synthetic}};
}

CompilerEnv compiler_env_from_json(const Json& j) {
  CompilerEnv env;
  env.id = j.at("id").get<std::string>();
  env.family = j.at("family").get<std::string>();
  env.version = j.at("version").get<std::string>();
  env.executable = j.value("executable", std::string());
  env.detected_at = j.value("detected_at", std::int64_t{0});
  env.synthetic = j.value("synthetic", false);
  return env;
}

std::vector<std::filesystem::path> default_probe_paths() {
  std::vector<std::filesystem::path> out;
  const char* path = std::getenv("PATH");
  if (!path) return out;
  std::string_view rest(path);
  while (!rest.empty()) {
    auto colon = rest.find(':');
    auto part = rest.substr(0, colon);
    if (!part.empty()) out.emplace_back(part);
    if (colon == std::string_view::npos) break;
    rest.remove_prefix(colon + 1);
  }
  return out;
}

std::vector<CompilerEnv> detect_compilers(const std::vector<std::filesystem::path>& probe_paths) {
  std::vector<std::filesystem::path> candidates;
  for (const auto& probe : probe_paths) {
    std::error_code ec;
    if (std::filesystem::is_directory(probe, ec)) {
      for (const auto& e : std::filesystem::directory_iterator(probe, ec)) {
        if (std::regex_match(e.path().filename().string(), kCompilerName)) candidates.push_back(e.path());
      }
    } else if (std::filesystem::exists(probe, ec)) {
      candidates.push_back(probe);
    }
  }
  std::sort(candidates.begin(), candidates.end());

  std::set<std::pair<std::string, std::string>> seen;  // resolved path, version
  std::vector<CompilerEnv> envs;
  for (const auto& exe : candidates) {
    std::smatch m;
    auto name = exe.filename().string();
    if (!std::regex_match(name, m, kCompilerName)) continue;
    std::string family = m[1].str();
    std::error_code ec;
    auto resolved = std::filesystem::canonical(exe, ec);
    if (ec) continue;
    auto version = query_version(exe, family);
    if (!version) continue;
    if (!seen.emplace(resolved.string(), *version).second) continue;
    CompilerEnv env;
    env.family = family;
    env.version = *version;
    env.id = family + "-" + *version;
    env.executable = exe;
    env.detected_at = unix_now();
    envs.push_back(std::move(env));
  }
  std::stable_sort(envs.begin(), envs.end(), [](const CompilerEnv& a, const CompilerEnv& b) {
    if (a.family != b.family) return a.family < b.family;
    return Version::parse(a.version) < Version::parse(b.version);
  });
  return envs;
}

std::vector<double> PipelineResult::run_times() const {
  std::vector<double> out;
  for (const auto& r : runs) out.push_back(r.wall_time);
  return out;
}

Json to_json(const PipelineResult& r) {
  Json runs = Json::array();
  for (const auto& run : r.runs) {
    Json j{{"wall_time", run.wall_time}, {"exit_status", run.exit_status}};
    if (run.output_ok) j["output_ok"] = *run.output_ok;
    if (run.failure) j["failure"] = std::string(to_string(*run.failure));
    runs.push_back(j);
  }
  Json j{{"compile_ok", r.compile_ok}, {"compile_time", r.compile_time}, {"binary_size", r.binary_size},
         {"object_size", r.object_size}, {"runs", runs}};
  if (r.compile_ok) j["binary_md5"] = r.binary_md5;
  if (r.failure) j["failure"] = std::string(to_string(*r.failure));
  return j;
}

ValidationResult validate_output(std::string_view produced, const std::optional<OutputReference>& reference) {
  if (!reference) return ValidationResult::kSkipped;
  if (reference->mode == OutputReference::Mode::kDigest) {
    std::string expected;
    if (!reference->md5.empty()) {
      expected = reference->md5;
    } else if (reference->file) {
      if (!std::filesystem::exists(*reference->file)) return ValidationResult::kSkipped;
      expected = md5_file_hex(*reference->file);
    } else {
      return ValidationResult::kSkipped;
    }
    return md5_hex(produced) == expected ? ValidationResult::kMatch : ValidationResult::kMismatch;
  }
  if (!reference->file || !std::filesystem::exists(*reference->file)) return ValidationResult::kSkipped;
  return numeric_equal(produced, read_file(*reference->file), reference->relative_tolerance)
             ? ValidationResult::kMatch
             : ValidationResult::kMismatch;
}

PipelineResult evaluate_synthetic(const SyntheticSpec& spec, const std::string& workload_id,
                                  const std::vector<std::string>& tokens, const DatasetMeta* dataset,
                                  const CompilerEnv& env, int repetitions, bool compile_only,
                                  std::uint64_t noise_seed) {
  if (repetitions < 1) throw ContractError("repetitions must be at least 1");
  double multiplier = 1.0;
  std::int64_t size = spec.base_size;
  std::vector<std::string> digest_parts;
  std::optional<FailureKind> compile_failure;
  std::optional<FailureKind> run_failure;
  auto version = Version::parse(env.version.empty() ? "0" : env.version);

  for (const auto& token : tokens) {
    if (std::regex_match(token, kBaseLevel)) digest_parts.push_back("base:" + token);
    auto it = spec.flag_effects.find(token);
    if (it == spec.flag_effects.end()) {
      auto eq = token.find('=');
      if (eq != std::string::npos) it = spec.flag_effects.find(token.substr(0, eq));
    }
    if (it == spec.flag_effects.end()) continue;
    const auto& e = it->second;
    double m = e.time_multiplier;
    if (e.condition) {
      bool applies = false;
      if (dataset) {
        auto p = dataset->params.find(e.condition->param);
        applies = p != dataset->params.end() && p->second > e.condition->threshold;
      }
      if (!applies) m = e.condition->otherwise_multiplier;
    }
    multiplier *= m;
    size += e.size_delta;
    digest_parts.push_back(e.md5_salt.value_or(it->first));
    if (e.failure && (!e.fixed_in || version < Version::parse(*e.fixed_in))) {
      auto& slot = is_compile_failure(*e.failure) ? compile_failure : run_failure;
      if (!slot) slot = e.failure;
    }
  }
  std::sort(digest_parts.begin(), digest_parts.end());

  PipelineResult result;
  result.compile_time = 0.1 * (1.0 + 0.01 * static_cast<double>(tokens.size()));
  if (compile_failure) {
    result.failure = compile_failure;
    return result;
  }
  result.compile_ok = true;
  result.binary_size = std::max<std::int64_t>(1, size);
  result.object_size = result.binary_size;
  std::string digest_input = workload_id;
  for (const auto& part : digest_parts) digest_input += "\n" + part;
  result.binary_md5 = md5_hex(digest_input);
  if (compile_only) return result;

  std::mt19937_64 rng(noise_seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  double nominal = spec.base_time * multiplier;
  std::int64_t clock = 0;
  for (int i = 0; i < repetitions; ++i) {
    double t = nominal;
    switch (spec.noise.kind) {
      case NoiseModel::Kind::kNone:
        break;
      case NoiseModel::Kind::kGaussian:
        t = nominal * std::max(0.01, 1.0 + spec.noise.sigma * gauss(rng));
        break;
      case NoiseModel::Kind::kBimodal:
        if (uniform(rng) < spec.noise.probability) t = nominal * (1.0 + spec.noise.offset);
        break;
    }
    RunOutcome run;
    run.wall_time = t;
    run.started_ns = clock + 1;
    run.finished_ns = run.started_ns + std::max<std::int64_t>(1, static_cast<std::int64_t>(t * 1e9));
    clock = run.finished_ns;
    if (run_failure == FailureKind::kRuntimeCrash) {
      run.exit_status = 139;
      run.failure = run_failure;
    } else if (run_failure == FailureKind::kTimeout) {
      run.exit_status = 137;
      run.failure = run_failure;
    } else if (run_failure == FailureKind::kWrongOutput) {
      run.output_ok = false;
      run.failure = run_failure;
    } else {
      run.output_ok = true;
    }
    result.runs.push_back(run);
  }
  result.failure = run_failure;
  return result;
}

Pipeline::Pipeline(const WorkloadRegistry& registry, std::filesystem::path scratch_root)
    : registry_(registry), scratch_root_(std::move(scratch_root)) {}

PipelineResult Pipeline::execute(const PipelineRequest& request, const FlagSpace& space) const {
  if (request.repetitions < 1) throw ContractError("repetitions must be at least 1");
  if (!(request.timeout.count() > 0)) throw ContractError("timeout must be positive");
  auto workload = registry_.load_workload(request.workload);
  std::optional<DatasetMeta> dataset;
  if (!request.dataset.empty()) dataset = registry_.load_dataset(request.dataset);
  space.validate(request.assignment);

  if (workload.kind == WorkloadKind::kSynthetic) {
    return evaluate_synthetic(*workload.synthetic, workload.id, render_tokens(request.assignment, space),
                              dataset ? &*dataset : nullptr, request.env, request.repetitions,
                              request.compile_only, request.noise_seed);
  }
  if (request.env.synthetic || request.env.executable.empty()) {
    throw ContractError("workload '" + workload.id + "' needs a real compiler");
  }
  return execute_real(request, workload, dataset ? &*dataset : nullptr, render(request.assignment, space),
                      render_env(request.assignment, space));
}

PipelineResult Pipeline::execute_real(const PipelineRequest& request, const WorkloadMeta& workload,
                                      const DatasetMeta* dataset, const std::string& flags,
                                      const std::map<std::string, std::string>& env_vars) const {
  const auto& root = registry_.root();
  std::string command_key = request.command_key;
  if (!request.compile_only) {
    if (command_key.empty() && workload.run_commands.size() == 1) command_key = workload.run_commands.begin()->first;
    if (!workload.run_commands.contains(command_key)) {
      throw ContractError("workload '" + workload.id + "' has no run command '" + command_key + "'");
    }
  }

  std::filesystem::create_directories(scratch_root_);
  std::string pattern = (scratch_root_ / "build-XXXXXX").string();
  if (!::mkdtemp(pattern.data())) throw EnvironmentError("cannot create scratch directory under " + scratch_root_.string());
  std::filesystem::path workdir = pattern;
  workdir = std::filesystem::absolute(workdir);
  struct Cleanup {
    std::filesystem::path dir;
    bool keep;
    ~Cleanup() {
      std::error_code ec;
      if (!keep) std::filesystem::remove_all(dir, ec);
    }
  } cleanup{workdir, keep_};

  auto src = workload.source_dir ? std::filesystem::absolute(resolve(root, *workload.source_dir)) : workdir;
  auto binary = workdir / "prog";
  std::map<std::string, std::string> placeholders = {
      {"compiler", shell_quote(request.env.executable.string())},
      {"flags", flags},
      {"src", shell_quote(src.string())},
      {"binary", shell_quote(binary.string())},
      {"workdir", shell_quote(workdir.string())},
  };

  PipelineResult result;
  ProcessOptions build_opts;
  build_opts.workdir = workdir;
  build_opts.stdout_file = workdir / "build.log";
  build_opts.stderr_file = workdir / "build.err";
  build_opts.timeout = request.timeout;
  auto build = run_shell(substitute(workload.build_template, placeholders), build_opts);
  result.compile_time = build.wall_seconds;
  if (build.timed_out || build.signaled || build.exit_code != 0 || !std::filesystem::exists(binary)) {
    auto log = read_file(workdir / "build.err");
    bool crashed = build.timed_out || build.signaled || log.find("internal compiler error") != std::string::npos ||
                   log.find("Segmentation fault") != std::string::npos;
    result.failure = crashed ? FailureKind::kCompilerCrash : FailureKind::kCompileError;
    return result;
  }
  result.compile_ok = true;
  result.binary_size = file_size_or_zero(binary);
  result.binary_md5 = md5_file_hex(binary);
  std::int64_t objects = 0;
  for (const auto& e : std::filesystem::directory_iterator(workdir)) {
    if (e.path().extension() == ".o") objects += file_size_or_zero(e.path());
  }
  result.object_size = objects > 0 ? objects : result.binary_size;
  if (request.compile_only) return result;

  std::string dataset_file;
  if (dataset && !dataset->files.empty()) dataset_file = std::filesystem::absolute(resolve(root, dataset->files.front())).string();
  std::optional<OutputReference> reference;
  auto ref_key = dataset ? command_key + "@" + dataset->id : command_key;
  if (auto it = workload.reference_output.find(ref_key); it != workload.reference_output.end()) {
    reference = it->second;
  } else if (auto it2 = workload.reference_output.find(command_key); it2 != workload.reference_output.end()) {
    reference = it2->second;
  }
  if (reference && reference->file) reference->file = resolve(root, *reference->file);

  placeholders["dataset_file"] = shell_quote(dataset_file);
  auto run_cmd = substitute(workload.run_commands.at(command_key), placeholders);
  ProcessOptions run_opts;
  run_opts.workdir = workdir;
  run_opts.env = env_vars;
  run_opts.env["FLAGFORGE_DATASET"] = dataset_file;
  run_opts.stdout_file = workdir / "run.out";
  run_opts.stderr_file = workdir / "run.err";
  run_opts.timeout = request.timeout;
  auto region_file = workdir / "flagforge-time.txt";

  for (int i = 0; i < request.repetitions; ++i) {
    std::error_code ec;
    std::filesystem::remove(region_file, ec);
    auto p = run_shell(run_cmd, run_opts);
    RunOutcome run;
    run.wall_time = p.wall_seconds;
    run.started_ns = p.started_ns;
    run.finished_ns = p.finished_ns;
    if (p.timed_out) {
      run.exit_status = 128 + 9;
      run.failure = FailureKind::kTimeout;
    } else if (p.signaled) {
      run.exit_status = 128 + p.signal;
      run.failure = FailureKind::kRuntimeCrash;
    } else if (p.exit_code != 0) {
      run.exit_status = p.exit_code;
      run.failure = FailureKind::kRuntimeCrash;
    } else {
      // a workload may report the time of its kernel region itself
      if (std::filesystem::exists(region_file)) {
        auto text = read_file(region_file);
        char* end = nullptr;
        double region = std::strtod(text.c_str(), &end);
        if (end != text.c_str() && region > 0) run.wall_time = region;
      }
      auto verdict = validate_output(read_file(workdir / "run.out"), reference);
      if (verdict != ValidationResult::kSkipped) run.output_ok = verdict == ValidationResult::kMatch;
      if (verdict == ValidationResult::kMismatch) run.failure = FailureKind::kWrongOutput;
    }
    if (run.failure && !result.failure) result.failure = run.failure;
    result.runs.push_back(run);
  }
  return result;
}

}  // namespace flagforge
