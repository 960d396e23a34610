#include "cli.hpp"

#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "flagforge/config.hpp"
#include "flagforge/crowd.hpp"
#include "flagforge/crowd_http.hpp"
#include "flagforge/error.hpp"
#include "flagforge/experiment.hpp"
#include "flagforge/explorer.hpp"
#include "flagforge/learn.hpp"
#include "flagforge/lock.hpp"
#include "flagforge/pipeline.hpp"
#include "flagforge/reducer.hpp"
#include "flagforge/stats.hpp"
#include "flagforge/workload.hpp"

namespace flagforge::cli {
namespace {

namespace fs = std::filesystem;

struct Globals {
  std::string repo;
  bool json = false;
  std::string compiler;
  std::optional<std::uint64_t> seed;
  std::optional<double> threshold;
};

UidGenerator make_uids(const GlobalConfig& cfg) {
  return cfg.seed ? UidGenerator(splitmix64(*cfg.seed ^ 0x9e3779b97f4a7c15ULL)) : UidGenerator::from_environment();
}

GlobalConfig load_config(const Globals& g) {
  auto cfg = GlobalConfig::load(g.repo.empty() ? std::nullopt : std::optional<fs::path>(g.repo));
  if (g.seed) cfg.seed = g.seed;
  if (g.threshold) cfg.trust_threshold = *g.threshold;
  cfg.validate();
  std::error_code ec;
  fs::create_directories(cfg.repo_root, ec);
  if (ec || !fs::is_directory(cfg.repo_root)) {
    throw EnvironmentError("repository " + cfg.repo_root.string() + " is not writable");
  }
  return cfg;
}

// Everything a subcommand touches. Pipeline keeps a reference to the
// registry, so a Session never moves.
struct Session {
  GlobalConfig cfg;
  StatsConfig stats;
  WorkloadRegistry registry;
  ExperimentStore store;
  Pipeline pipeline;

  explicit Session(const Globals& g)
      : cfg(load_config(g)),
        stats{cfg.trust_threshold},
        registry(cfg.repo_root),
        store(cfg.repo_root, make_uids(cfg)),
        pipeline(registry, cfg.repo_root / "scratch") {}
  Session(const Session&) = delete;

  fs::path measurement_lock() const { return cfg.repo_root / ".measure.lock"; }
  std::uint64_t seed() const {
    if (cfg.seed) return *cfg.seed;
    return (std::uint64_t{std::random_device{}()} << 32) ^ std::random_device{}();
  }
};

void emit(std::ostream& out, const Json& j) { out << j.dump(2) << '\n'; }

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) parts.push_back(item);
  }
  return parts;
}

// "gcc-7.1.0", "gcc 7.1.0", "clang-14" or a bare version ("7.1.0").
CompilerEnv synthetic_compiler(const std::string& text) {
  if (text.empty()) return CompilerEnv::synthetic_env();
  auto sep = text.find_first_of("- ");
  if (sep == std::string::npos) {
    if (std::isdigit(static_cast<unsigned char>(text[0]))) return CompilerEnv::synthetic_env("gcc", text);
    return CompilerEnv::synthetic_env(text);
  }
  return CompilerEnv::synthetic_env(text.substr(0, sep), text.substr(sep + 1));
}

bool matches(const CompilerEnv& e, const std::string& want) {
  if (e.id == want || e.family == want || e.executable == want || e.executable.filename() == want) return true;
  return e.id.starts_with(want) && e.id.size() > want.size() && e.id[want.size()] == '.';
}

CompilerEnv choose_compiler(const Session& s, const WorkloadMeta& w, const std::string& override, std::ostream& err) {
  if (w.kind == WorkloadKind::kSynthetic) return synthetic_compiler(override);
  auto envs = detect_compilers(s.cfg.probe_paths.empty() ? default_probe_paths() : s.cfg.probe_paths);
  if (envs.empty()) throw EnvironmentError("no gcc or clang compiler found");
  std::string want = override;
  if (want.empty() && s.cfg.compiler_policy == CompilerPolicy::kExplicit) want = s.cfg.compiler;
  if (!want.empty()) {
    std::vector<CompilerEnv> hits;
    std::copy_if(envs.begin(), envs.end(), std::back_inserter(hits), [&](const auto& e) { return matches(e, want); });
    if (hits.empty()) throw EnvironmentError("compiler '" + want + "' not found");
    return hits.back();
  }
  if (s.cfg.compiler_policy == CompilerPolicy::kPrompt && envs.size() > 1 && ::isatty(STDIN_FILENO)) {
    for (std::size_t i = 0; i < envs.size(); ++i) err << "  [" << i << "] " << envs[i].id << "  " << envs[i].executable.string() << '\n';
    err << "select compiler: " << std::flush;
    std::size_t pick = 0;
    if (std::cin >> pick && pick < envs.size()) return envs[pick];
    throw ContractError("invalid compiler selection");
  }
  // newest gcc, else newest of whatever was found
  for (auto it = envs.rbegin(); it != envs.rend(); ++it) {
    if (it->family == "gcc") return *it;
  }
  return envs.back();
}

FlagSpace space_for(const Session& s, const CompilerEnv& env, const WorkloadMeta& w) {
  auto dirs = s.cfg.flagspace_dirs;
  for (auto& d : default_flagspace_dirs()) dirs.push_back(d);
  auto space = load_flagspace(env.family, env.version, dirs);
  if (w.tunable_params.empty()) return space;
  auto descriptors = space.descriptors();
  for (const auto& p : w.tunable_params) {
    descriptors.push_back(FlagDescriptor{p.name, EnvParamForm{p.env_var, p.min, p.max}, {}, {}});
  }
  return FlagSpace(space.compiler_id(), space.versions(), space.base_levels(), std::move(descriptors));
}

Json frontier_json(const std::vector<FrontierPoint>& frontier) {
  Json arr = Json::array();
  for (const auto& p : frontier) arr.push_back({{"point", p.point_uid}, {"objectives", p.objectives}});
  return arr;
}

std::string failure_text(const std::optional<FailureKind>& f) { return f ? std::string(to_string(*f)) : "-"; }

// Paths inside a meta file are relative to the file itself.
fs::path absolute_from(const fs::path& base, const fs::path& p) { return p.is_absolute() ? p : fs::absolute(base / p).lexically_normal(); }

using Action = std::function<int()>;

struct Ctx {
  CLI::App& app;
  Globals& g;
  std::ostream& out;
  std::ostream& err;
  Action& action;
};

// ---------------------------------------------------------------- detect / run

void add_detect(Ctx& c) {
  auto* sub = c.app.add_subcommand("detect", "List installed gcc/clang compilers");
  sub->callback([&c] {
    c.action = [&c] {
      Session s(c.g);
      auto envs = detect_compilers(s.cfg.probe_paths.empty() ? default_probe_paths() : s.cfg.probe_paths);
      if (c.g.json) {
        Json arr = Json::array();
        for (const auto& e : envs) arr.push_back(to_json(e));
        emit(c.out, arr);
      } else {
        for (const auto& e : envs) c.out << e.id << '\t' << e.executable.string() << '\n';
        if (envs.empty()) c.err << "no compilers found\n";
      }
      return 0;
    };
  });
}

struct RunOpts {
  std::string workload, cmd, dataset, flags, record;
  int repetitions = 1;
  double timeout = 60;
  bool compile_only = false;
};

void add_run(Ctx& c) {
  auto o = std::make_shared<RunOpts>();
  auto* sub = c.app.add_subcommand("run", "Build and run a workload with one flag combination");
  sub->add_option("--workload", o->workload)->required();
  sub->add_option("--cmd", o->cmd, "Run command key");
  sub->add_option("--dataset", o->dataset);
  sub->add_option("--flags", o->flags, "Flag text, e.g. \"-O3 -fno-ivopts\"");
  sub->add_option("--repetitions", o->repetitions)->check(CLI::PositiveNumber);
  sub->add_option("--timeout", o->timeout, "Seconds per build or run");
  sub->add_flag("--compile-only", o->compile_only);
  sub->add_option("--record", o->record, "Append the result to this experiment entry (created when absent)");
  sub->callback([&c, o] {
    c.action = [&c, o] {
      Session s(c.g);
      auto w = s.registry.load_workload(o->workload);
      auto env = choose_compiler(s, w, c.g.compiler, c.err);
      auto space = space_for(s, env, w);
      PipelineRequest req;
      req.workload = o->workload;
      req.dataset = o->dataset;
      req.command_key = o->cmd;
      req.assignment = parse(o->flags, space);
      req.env = env;
      req.repetitions = o->repetitions;
      req.timeout = std::chrono::duration<double>(o->timeout);
      req.compile_only = o->compile_only;
      req.noise_seed = s.seed();
      PipelineResult r;
      {
        FileLock lock(s.measurement_lock());
        r = s.pipeline.execute(req, space);
      }
      auto point = make_point(r, req.assignment, space,
                              ReplayInfo{o->workload, o->cmd, o->dataset, req.noise_seed, o->repetitions}, s.stats);
      if (!o->record.empty()) {
        std::string entry;
        if (s.store.has_entry(o->record)) {
          entry = s.store.resolve(o->record);
        } else {
          ExperimentEntry e;
          e.alias = o->record;
          e.scenario_id = "run";
          e.workload = o->workload;
          e.dataset = o->dataset;
          e.compiler = env;
          e.platform = PlatformInfo::detect();
          entry = s.store.create_entry(e, space);
        }
        point.tag = "run";
        point.point_uid = s.store.record_point(entry, point);
      }
      if (c.g.json) {
        Json j = to_json(r);
        j["compiler"] = env.id;
        j["rendered"] = point.rendered;
        if (!point.point_uid.empty()) j["point"] = point.point_uid;
        Json ch = Json::object();
        for (const auto& [k, v] : point.characteristics) ch[k] = to_json(v);
        j["characteristics"] = ch;
        emit(c.out, j);
      } else {
        c.out << "compiler " << env.id << "\nflags    " << point.rendered << '\n';
        if (r.compile_ok) {
          c.out << "compile  ok " << format_double(r.compile_time) << " s, binary " << r.binary_size << " B, md5 "
                << r.binary_md5 << '\n';
        }
        for (std::size_t i = 0; i < r.runs.size(); ++i) {
          const auto& run = r.runs[i];
          c.out << "run " << i + 1 << "    " << format_double(run.wall_time) << " s, exit " << run.exit_status
                << (run.output_ok ? (*run.output_ok ? ", output ok" : ", output differs") : "") << '\n';
        }
        if (auto it = point.characteristics.find(kExecutionTime); it != point.characteristics.end()) {
          c.out << "time     min " << format_double(it->second.min) << " expected " << format_double(it->second.expected)
                << (it->second.noisy ? " (noisy)" : "") << '\n';
        }
        c.out << "failure  " << failure_text(r.failure) << '\n';
        if (!point.point_uid.empty()) c.out << "point    " << point.point_uid << '\n';
      }
      return 0;
    };
  });
}

// ---------------------------------------------------------------- autotune / fuzz

struct TuneOpts {
  std::string workload, dataset, cmd, scenario, record, record_policy, baseline;
  int iterations = -1, repetitions = -1, check_interval = -1;
  double probability = -1;
  bool parametric = false, cpu = false, base = false, exhaustive = false;
};

void add_tune_options(CLI::App* sub, TuneOpts& o) {
  sub->add_option("--workload", o.workload)->required();
  sub->add_option("--dataset", o.dataset);
  sub->add_option("--cmd", o.cmd, "Run command key");
  sub->add_option("--scenario", o.scenario, "Scenario JSON file or scenario id");
  sub->add_option("--iterations", o.iterations);
  sub->add_option("--repetitions", o.repetitions);
  sub->add_flag("--parametric-flags", o.parametric, "Also sample parametric flags");
  sub->add_flag("--cpu-flags", o.cpu, "Also sample CPU-specific flags");
  sub->add_flag("--base-flags", o.base, "Also sample the base optimization level");
  sub->add_option("--probability", o.probability, "Per-flag inclusion probability");
  sub->add_option("--record", o.record, "Alias of the experiment entry");
  sub->add_option("--baseline", o.baseline, "Baseline flags (default -O3)");
  sub->add_option("--baseline-check-interval", o.check_interval);
}

Scenario build_scenario(const TuneOpts& o, const Session& s) {
  Scenario sc;
  bool from_file = false;
  if (!o.scenario.empty()) {
    if (fs::is_regular_file(o.scenario)) {
      sc = scenario_from_json(read_json(o.scenario));
      from_file = true;
    } else {
      sc.scenario_id = o.scenario;
    }
  }
  if (o.iterations >= 0) sc.iterations = o.iterations;
  else if (!from_file) sc.iterations = 10;
  if (o.repetitions >= 0) sc.repetitions = o.repetitions;
  if (o.check_interval >= 0) sc.baseline_check_interval = o.check_interval;
  if (o.probability >= 0) sc.sampling.include_probability = o.probability;
  if (o.parametric) sc.sampling.enable_parametric = true;
  if (o.cpu) sc.sampling.enable_cpu = true;
  if (o.base) sc.sampling.enable_base = true;
  if (o.exhaustive) sc.mode = SamplingMode::kExhaustive;
  if (!o.baseline.empty()) sc.baseline_flags = o.baseline;
  if (!o.cmd.empty()) sc.command_key = o.cmd;
  if (!o.record.empty()) sc.alias = o.record;
  if (!o.record_policy.empty()) {
    if (o.record_policy == "all") sc.record_policy = RecordPolicy::kAll;
    else if (o.record_policy == "frontier_only") sc.record_policy = RecordPolicy::kFrontierOnly;
    else if (o.record_policy == "failures_only") sc.record_policy = RecordPolicy::kFailuresOnly;
    else throw ContractError("unknown record policy '" + o.record_policy + "'");
  }
  if (!from_file || s.cfg.seed) sc.sampling.seed = s.seed();
  validate_scenario(sc);
  return sc;
}

void add_autotune(Ctx& c, bool fuzz) {
  auto o = std::make_shared<TuneOpts>();
  auto* sub = fuzz ? c.app.add_subcommand("fuzz", "Random flag combinations, recording only failures")
                   : c.app.add_subcommand("autotune", "Random or exhaustive flag exploration");
  add_tune_options(sub, *o);
  if (!fuzz) {
    sub->add_flag("--exhaustive", o->exhaustive, "Enumerate every boolean combination");
    sub->add_option("--record-policy", o->record_policy, "all | frontier_only | failures_only");
  }
  sub->callback([&c, o, fuzz] {
    c.action = [&c, o, fuzz] {
      Session s(c.g);
      auto w = s.registry.load_workload(o->workload);
      auto env = choose_compiler(s, w, c.g.compiler, c.err);
      auto space = space_for(s, env, w);
      auto sc = build_scenario(*o, s);
      Explorer explorer(s.registry, s.store, s.pipeline, s.stats);
      explorer.set_measurement_lock(s.measurement_lock());
      auto uid = fuzz ? explorer.fuzz(sc, o->workload, o->dataset, space, env)
                      : explorer.autotune(sc, o->workload, o->dataset, space, env);
      auto entry = s.store.load_entry(uid);
      auto points = s.store.load_points(uid);
      auto frontier = pareto_filter(frontier_candidates(points, sc.objectives));
      Json failures = Json::array();
      for (const auto& p : points) {
        if (p.failure) failures.push_back({{"point", p.point_uid}, {"failure", to_string(*p.failure)}, {"flags", p.rendered}});
      }
      if (c.g.json) {
        emit(c.out, {{"entry", uid},
                     {"alias", entry.alias},
                     {"compiler", env.id},
                     {"points", points.size()},
                     {"frontier", frontier_json(frontier)},
                     {"failures", failures},
                     {"drift_detected", entry.drift_detected}});
      } else {
        c.out << "entry " << uid << (entry.alias.empty() ? "" : " (" + entry.alias + ")") << ", compiler " << env.id
              << ", " << points.size() << " points\n";
        if (!fuzz) {
          c.out << "frontier:\n";
          for (const auto& f : frontier) {
            c.out << "  " << f.point_uid;
            for (double v : f.objectives) c.out << "  " << format_double(v);
            c.out << '\n';
          }
        }
        for (const auto& f : failures) {
          c.out << "failure " << f["point"].get<std::string>() << "  " << f["failure"].get<std::string>() << "  "
                << f["flags"].get<std::string>() << '\n';
        }
        if (entry.drift_detected) c.err << "warning: baseline drift detected; later points are marked untrustable\n";
      }
      return 0;
    };
  });
}

// ---------------------------------------------------------------- reduce / replay

struct ReduceOpts {
  std::string entry, point, keep, prune;
  double tolerance = -1;
  int repetitions = -1;
  bool md5 = false, invert = false, deterministic = false, contribution = false;
};

void add_reduce(Ctx& c) {
  auto o = std::make_shared<ReduceOpts>();
  auto* sub = c.app.add_subcommand("reduce", "Prune flags that do not contribute to a point's result");
  sub->add_option("--entry", o->entry)->required();
  sub->add_option("--point", o->point)->required();
  sub->add_flag("--md5-shortcut", o->md5, "Skip runs when the binary is unchanged");
  sub->add_flag("--invert", o->invert, "Also turn absent flags off explicitly where harmless");
  sub->add_option("--keep", o->keep, "Flag never removed");
  sub->add_option("--prune", o->prune, "Prune conditions JSON file");
  sub->add_option("--tolerance", o->tolerance);
  sub->add_option("--repetitions", o->repetitions);
  sub->add_flag("--deterministic", o->deterministic, "Try flags in flag-space order");
  sub->add_flag("--contribution", o->contribution, "Report per-flag contribution instead of reducing");
  sub->callback([&c, o] {
    c.action = [&c, o] {
      Session s(c.g);
      PruneConfig config = o->prune.empty() ? PruneConfig{} : prune_config_from_json(read_json(o->prune));
      if (o->md5) config.use_md5_shortcut = true;
      if (o->invert) config.invert = true;
      if (!o->keep.empty() && o->keep != "base") config.keep_key = o->keep;
      if (o->tolerance >= 0) config.tolerance = o->tolerance;
      if (o->repetitions > 0) config.repetitions = o->repetitions;
      if (o->deterministic) config.deterministic_order = true;
      if (s.cfg.seed) config.seed = *s.cfg.seed;
      auto entry = s.store.resolve(o->entry);
      auto original = s.store.load_point(entry, o->point);
      Reducer reducer(s.store, s.pipeline, s.stats);
      FileLock lock(s.measurement_lock());

      if (o->contribution) {
        auto report = reducer.contribution(entry, o->point, config);
        if (c.g.json) {
          emit(c.out, to_json(report));
        } else {
          for (const auto& r : report.rows) {
            c.out << r.flag << "  time " << format_double(r.delta_time) << "  size " << format_double(r.delta_size)
                  << "  " << to_string(r.verdict) << '\n';
          }
        }
        return 0;
      }

      std::string mode = original.failure ? "minimize_failure" : "reduce";
      ReduceResult result = original.failure ? reducer.minimize_failure(entry, o->point, config)
                                             : reducer.reduce(entry, o->point, config);
      std::optional<ReduceResult> inverted;
      if (config.invert && !original.failure) inverted = reducer.invert(entry, result.point_uid, config);
      const auto& final = inverted ? *inverted : result;
      auto point = s.store.load_point(entry, final.point_uid);
      if (c.g.json) {
        Json j{{"mode", mode},
               {"entry", entry},
               {"original", original.rendered},
               {"point", final.point_uid},
               {"flags", point.rendered},
               {"evaluations", result.evaluations + (inverted ? inverted->evaluations : 0)},
               {"md5_shortcuts", result.md5_shortcuts}};
        if (inverted) j["reduced_point"] = result.point_uid;
        if (original.failure) j["failure"] = to_string(*original.failure);
        emit(c.out, j);
      } else {
        c.out << mode << ": " << original.rendered << "\n  -> " << point.rendered << "\npoint " << final.point_uid << ", "
              << result.evaluations << " evaluations";
        if (config.use_md5_shortcut) c.out << ", " << result.md5_shortcuts << " md5 shortcuts";
        c.out << '\n';
      }
      return 0;
    };
  });
}

struct ReplayOpts {
  std::string entry, point;
  double tolerance = kDefaultTrustThreshold;
};

CLI::App* add_replay_to(Ctx& c, CLI::App& parent) {
  auto o = std::make_shared<ReplayOpts>();
  auto* sub = parent.add_subcommand("replay", "Re-execute a stored point and compare characteristics");
  sub->add_option("--entry", o->entry)->required();
  sub->add_option("--point", o->point)->required();
  sub->add_option("--tolerance", o->tolerance);
  sub->callback([&c, o] {
    c.action = [&c, o] {
      Session s(c.g);
      auto entry = s.store.load_entry(o->entry);
      std::optional<CompilerEnv> env;
      if (!c.g.compiler.empty()) {
        WorkloadMeta w = s.registry.load_workload(entry.workload);
        env = choose_compiler(s, w, c.g.compiler, c.err);
      }
      FileLock lock(s.measurement_lock());
      auto report = replay(s.store, s.pipeline, entry.entry_uid, o->point, o->tolerance, env);
      if (c.g.json) {
        emit(c.out, to_json(report));
      } else {
        for (const auto& r : report.rows) {
          c.out << r.characteristic << "  " << format_double(r.original) << " -> " << format_double(r.replayed)
                << "  diff " << format_double(r.relative_difference) << (r.passed ? "  ok" : "  FAIL") << '\n';
        }
        c.out << "md5 " << (report.md5_match ? "match" : "differs") << ", failure " << failure_text(report.original_failure)
              << " -> " << failure_text(report.replayed_failure) << '\n';
        c.out << (report.passed ? "replay passed" : "replay FAILED") << '\n';
      }
      return 0;
    };
  });
  return sub;
}

// ---------------------------------------------------------------- experiment

void add_experiment(Ctx& c) {
  auto* exp = c.app.add_subcommand("experiment", "Inspect the experiment store");
  exp->require_subcommand(1);

  exp->add_subcommand("list", "List experiment entries")->callback([&c] {
    c.action = [&c] {
      Session s(c.g);
      auto entries = s.store.list_entries();
      if (c.g.json) {
        Json arr = Json::array();
        for (const auto& e : entries) arr.push_back(to_json(e));
        emit(c.out, arr);
      } else {
        for (const auto& e : entries) {
          c.out << e.entry_uid << "  " << (e.alias.empty() ? "-" : e.alias) << "  " << e.workload << "  "
                << e.scenario_id << "  " << e.points.size() << " points\n";
        }
      }
      return 0;
    };
  });

  auto show_entry = std::make_shared<std::string>();
  auto* show = exp->add_subcommand("show", "Show an entry and its points");
  show->add_option("entry", *show_entry)->required();
  show->callback([&c, show_entry] {
    c.action = [&c, show_entry] {
      Session s(c.g);
      auto e = s.store.load_entry(*show_entry);
      auto points = s.store.load_points(e.entry_uid);
      if (c.g.json) {
        Json pts = Json::array();
        for (const auto& p : points) pts.push_back(to_json(p));
        emit(c.out, {{"entry", to_json(e)}, {"points", pts}});
      } else {
        c.out << "entry     " << e.entry_uid << "\nalias     " << e.alias << "\nworkload  " << e.workload
              << "\ndataset   " << e.dataset << "\nscenario  " << e.scenario_id << "\ncompiler  " << e.compiler.id
              << "\nplatform  " << e.platform.platform_class() << "\npoints    " << points.size() << '\n';
        if (e.drift_detected) c.out << "drift     detected\n";
        for (const auto& p : points) {
          c.out << "  " << p.point_uid << "  " << p.tag << "  ";
          if (p.failure) c.out << to_string(*p.failure);
          else if (p.characteristics.contains(kExecutionTime)) c.out << format_double(p.objective(kExecutionTime));
          c.out << "  " << p.rendered << '\n';
        }
      }
      return 0;
    };
  });

  struct ExportOpts {
    std::string entry, columns, output;
  };
  auto eo = std::make_shared<ExportOpts>();
  auto* exp_cmd = exp->add_subcommand("export", "Export an entry as CSV");
  exp_cmd->add_option("entry", eo->entry)->required();
  exp_cmd->add_option("--columns", eo->columns, "Comma-separated column list");
  exp_cmd->add_option("--output", eo->output, "Write to a file instead of standard output");
  exp_cmd->callback([&c, eo] {
    c.action = [&c, eo] {
      Session s(c.g);
      auto csv = s.store.export_table(eo->entry, split_list(eo->columns));
      if (!eo->output.empty()) {
        write_file_atomic(eo->output, csv);
        if (c.g.json) emit(c.out, {{"written", eo->output}});
      } else if (c.g.json) {
        emit(c.out, {{"csv", csv}});
      } else {
        c.out << csv;
      }
      return 0;
    };
  });

  add_replay_to(c, *exp);
}

// (time, size, tag, frontier) rows for external plotting.
void add_plot_data(Ctx& c) {
  auto entry = std::make_shared<std::string>();
  auto* sub = c.app.add_subcommand("plot-data", "Emit time/size/tag/frontier rows of an entry");
  sub->add_option("entry", *entry)->required();
  sub->callback([&c, entry] {
    c.action = [&c, entry] {
      Session s(c.g);
      auto uid = s.store.resolve(*entry);
      auto points = s.store.load_points(uid);
      auto frontier = pareto_filter(frontier_candidates(points, {kExecutionTime, kBinarySize}));
      std::set<std::string> on_frontier;
      for (const auto& f : frontier) on_frontier.insert(f.point_uid);
      if (c.g.json) {
        Json arr = Json::array();
        for (const auto& p : points) {
          auto v = objective_vector(p, {kExecutionTime, kBinarySize});
          if (!v) continue;
          arr.push_back({{"point", p.point_uid}, {"time", (*v)[0]}, {"size", (*v)[1]}, {"tag", p.tag},
                         {"frontier", on_frontier.contains(p.point_uid)}});
        }
        emit(c.out, arr);
      } else {
        c.out << s.store.export_table(uid, {"time", "size", "tag", "frontier"});
      }
      return 0;
    };
  });
}

// ---------------------------------------------------------------- workload / dataset

void add_registry(Ctx& c) {
  auto* wl = c.app.add_subcommand("workload", "Manage registered workloads");
  wl->require_subcommand(1);

  struct AddOpts {
    std::string meta, id;
  };
  auto wa = std::make_shared<AddOpts>();
  auto* add = wl->add_subcommand("add", "Register a workload from its meta.json");
  add->add_option("meta", wa->meta)->required();
  add->add_option("--id", wa->id, "Override the id in the meta file");
  add->callback([&c, wa] {
    c.action = [&c, wa] {
      Session s(c.g);
      fs::path file = wa->meta;
      if (fs::is_directory(file)) file /= "meta.json";
      auto meta = workload_from_json(read_json(file));
      auto base = fs::absolute(file).parent_path();
      if (!wa->id.empty()) meta.id = wa->id;
      meta.source_dir = absolute_from(base, meta.source_dir.value_or("."));
      if (meta.feature_file) meta.feature_file = absolute_from(base, *meta.feature_file);
      for (auto& [k, ref] : meta.reference_output) {
        if (ref.file) ref.file = absolute_from(base, *ref.file);
      }
      auto id = s.registry.register_workload(meta);
      // bundled datasets next to the workload come along
      std::vector<std::string> datasets;
      if (fs::is_directory(base / "datasets")) {
        std::vector<fs::path> metas;
        for (const auto& f : fs::directory_iterator(base / "datasets")) {
          if (f.path().extension() == ".json") metas.push_back(f.path());
        }
        std::sort(metas.begin(), metas.end());
        for (const auto& m : metas) {
          auto d = dataset_from_json(read_json(m));
          for (auto& f : d.files) f = absolute_from(m.parent_path(), f);
          auto known = s.registry.list_datasets();
          if (std::find(known.begin(), known.end(), d.id) != known.end()) continue;
          datasets.push_back(s.registry.register_dataset(d));
        }
      }
      if (c.g.json) emit(c.out, {{"workload", id}, {"datasets", datasets}});
      else {
        c.out << id << '\n';
        for (const auto& d : datasets) c.out << "dataset " << d << '\n';
      }
      return 0;
    };
  });

  wl->add_subcommand("list", "List workloads")->callback([&c] {
    c.action = [&c] {
      Session s(c.g);
      auto ids = s.registry.list_workloads();
      if (c.g.json) {
        Json arr = Json::array();
        for (const auto& id : ids) {
          auto m = s.registry.load_workload(id);
          arr.push_back({{"id", id}, {"title", m.title}, {"kind", m.kind == WorkloadKind::kSynthetic ? "synthetic" : "real"}});
        }
        emit(c.out, arr);
      } else {
        for (const auto& id : ids) c.out << id << '\n';
      }
      return 0;
    };
  });

  auto show_id = std::make_shared<std::string>();
  auto* show = wl->add_subcommand("show", "Show a workload's meta data");
  show->add_option("workload", *show_id)->required();
  show->callback([&c, show_id] {
    c.action = [&c, show_id] {
      Session s(c.g);
      auto m = s.registry.load_workload(*show_id);
      if (c.g.json) {
        emit(c.out, to_json(m));
      } else {
        c.out << "id        " << m.id << "\ntitle     " << m.title << "\nkind      "
              << (m.kind == WorkloadKind::kSynthetic ? "synthetic" : "real") << '\n';
        for (const auto& [k, cmd] : m.run_commands) c.out << "cmd       " << k << ": " << cmd << '\n';
        for (const auto& d : s.registry.resolve_datasets(m.id)) c.out << "dataset   " << d.id << '\n';
      }
      return 0;
    };
  });

  auto* ds = c.app.add_subcommand("dataset", "Manage registered datasets");
  ds->require_subcommand(1);
  auto dmeta = std::make_shared<std::string>();
  auto* dadd = ds->add_subcommand("add", "Register a dataset from its meta file");
  dadd->add_option("meta", *dmeta)->required();
  dadd->callback([&c, dmeta] {
    c.action = [&c, dmeta] {
      Session s(c.g);
      auto d = dataset_from_json(read_json(*dmeta));
      auto base = fs::absolute(*dmeta).parent_path();
      for (auto& f : d.files) f = absolute_from(base, f);
      auto id = s.registry.register_dataset(d);
      if (c.g.json) emit(c.out, {{"dataset", id}});
      else c.out << id << '\n';
      return 0;
    };
  });
  ds->add_subcommand("list", "List datasets")->callback([&c] {
    c.action = [&c] {
      Session s(c.g);
      auto ids = s.registry.list_datasets();
      if (c.g.json) {
        Json arr = Json::array();
        for (const auto& id : ids) arr.push_back(to_json(s.registry.load_dataset(id)));
        emit(c.out, arr);
      } else {
        for (const auto& id : ids) c.out << id << '\n';
      }
      return 0;
    };
  });
}

// ---------------------------------------------------------------- crowd

std::string server_url(const Session& s, const std::string& flag) {
  std::string url = flag.empty() ? s.cfg.server_url : flag;
  if (url.empty()) throw ContractError("no crowd server given (--server, FLAGFORGE_SERVER or config.json)");
  return url;
}

ScenarioKey key_for(const std::string& scenario, const CompilerEnv& env, const std::string& platform) {
  return ScenarioKey{scenario, env.family + " " + env.version,
                     platform.empty() ? PlatformInfo::detect().platform_class() : platform};
}

std::size_t queued_reports(const fs::path& dir) {
  if (!fs::is_directory(dir)) return 0;
  std::size_t n = 0;
  for (const auto& f : fs::directory_iterator(dir)) {
    if (f.path().filename().string().starts_with("report-")) ++n;
  }
  return n;
}

void add_crowd(Ctx& c) {
  auto* crowd = c.app.add_subcommand("crowd", "Crowd-tuning server and client");
  crowd->require_subcommand(1);

  struct ServeOpts {
    std::string host = "127.0.0.1", store;
    int port = 8080;
    bool no_auto_create = false;
  };
  auto so = std::make_shared<ServeOpts>();
  auto* serve = crowd->add_subcommand("serve", "Run the aggregation server");
  serve->add_option("--host", so->host);
  serve->add_option("--port", so->port);
  serve->add_option("--store", so->store, "Directory holding scenario tables");
  serve->add_flag("--no-auto-create", so->no_auto_create, "Reject reports for unknown scenario keys");
  serve->callback([&c, so] {
    c.action = [&c, so] {
      CrowdServer server(so->store.empty() ? std::nullopt : std::optional<fs::path>(so->store), !so->no_auto_create);
      CrowdHttpService service(server);
      c.err << "serving on " << so->host << ":" << so->port << '\n';
      service.listen(so->host, so->port);
      return 0;
    };
  });

  struct SeedOpts {
    std::string store, scenario = "time", platform, flags;
  };
  auto seo = std::make_shared<SeedOpts>();
  auto* seed = crowd->add_subcommand("seed", "Add a shared solution to a server store directory");
  seed->add_option("--store", seo->store)->required();
  seed->add_option("--scenario", seo->scenario);
  seed->add_option("--platform", seo->platform, "Platform class (default: this machine)");
  seed->add_option("--flags", seo->flags)->required();
  seed->callback([&c, seo] {
    c.action = [&c, seo] {
      CrowdServer server(fs::path(seo->store));
      // the key names a compiler version; nothing is executed here
      auto env = synthetic_compiler(c.g.compiler);
      auto uid = server.seed_solution(key_for(seo->scenario, env, seo->platform), seo->flags);
      if (c.g.json) emit(c.out, {{"solution_uid", uid}});
      else c.out << uid << '\n';
      return 0;
    };
  });

  struct TuneOpts2 {
    std::string workload, dataset, cmd, server, scenario = "time", participant, platform, baseline;
    int iterations = 0, repetitions = 3, top = 10;
  };
  auto to = std::make_shared<TuneOpts2>();
  auto* tune = crowd->add_subcommand("tune", "Replay shared solutions plus random ones and report back");
  tune->add_option("--workload", to->workload)->required();
  tune->add_option("--dataset", to->dataset);
  tune->add_option("--cmd", to->cmd);
  tune->add_option("--iterations", to->iterations, "Fresh random combinations to try");
  tune->add_option("--repetitions", to->repetitions);
  tune->add_option("--top", to->top, "Shared solutions to replay");
  tune->add_option("--server", to->server);
  tune->add_option("--scenario", to->scenario);
  tune->add_option("--participant", to->participant);
  tune->add_option("--platform", to->platform, "Platform class (default: this machine)");
  tune->add_option("--baseline", to->baseline);
  tune->callback([&c, to] {
    c.action = [&c, to] {
      Session s(c.g);
      auto w = s.registry.load_workload(to->workload);
      auto env = choose_compiler(s, w, c.g.compiler, c.err);
      auto space = space_for(s, env, w);
      HttpTransport transport(server_url(s, to->server));
      CrowdClient client(s.registry, s.store, s.pipeline, transport, s.cfg.repo_root / "crowd-queue", s.stats);
      CrowdTuneOptions opts;
      opts.workload = to->workload;
      opts.dataset = to->dataset;
      opts.command_key = to->cmd;
      opts.key = key_for(to->scenario, env, to->platform);
      opts.top_n = static_cast<std::size_t>(std::max(0, to->top));
      opts.extra_random = to->iterations;
      opts.repetitions = to->repetitions;
      opts.sampling.seed = s.seed();
      if (!to->baseline.empty()) opts.baseline_flags = to->baseline;
      opts.participant = to->participant.empty() ? PlatformInfo::detect().hostname_hash : to->participant;
      CrowdTuneResult r;
      {
        FileLock lock(s.measurement_lock());
        r = client.crowdtune(opts, space, env);
      }
      if (c.g.json) {
        emit(c.out, {{"entry", r.entry_uid},
                     {"submitted", r.submitted},
                     {"queued_file", r.queued_file ? r.queued_file->string() : ""},
                     {"discarded", r.discarded},
                     {"report", to_json(r.report)}});
      } else {
        c.out << "entry " << r.entry_uid << '\n';
        for (const auto& [uid, ratio] : r.report.reactions) c.out << "solution " << uid << "  " << format_double(ratio) << '\n';
        if (r.report.candidate) {
          c.out << "candidate " << format_double(r.report.candidate->improvement) << "  " << r.report.candidate->assignment_text
                << '\n';
        }
        for (const auto& d : r.discarded) c.out << "discarded " << d << " (untrustable)\n";
        c.out << (r.submitted ? "report submitted" : "report queued") << '\n';
      }
      if (!r.submitted) {
        c.err << "server unreachable; report queued at " << (r.queued_file ? r.queued_file->string() : "?") << '\n';
        return 2;
      }
      return 0;
    };
  });

  auto fserver = std::make_shared<std::string>();
  auto* flush = crowd->add_subcommand("flush", "Resubmit queued reports");
  flush->add_option("--server", *fserver);
  flush->callback([&c, fserver] {
    c.action = [&c, fserver] {
      Session s(c.g);
      HttpTransport transport(server_url(s, *fserver));
      auto queue = s.cfg.repo_root / "crowd-queue";
      CrowdClient client(s.registry, s.store, s.pipeline, transport, queue, s.stats);
      int delivered = client.flush_queue();
      auto remaining = queued_reports(queue);
      if (c.g.json) emit(c.out, {{"delivered", delivered}, {"remaining", remaining}});
      else c.out << delivered << " delivered, " << remaining << " still queued\n";
      return remaining == 0 ? 0 : 2;
    };
  });
}

struct BenchOpts {
  std::string workload, solution, server, dataset, cmd, baseline = "-O3", record;
  int repetitions = 3;
};

void add_benchmark(Ctx& c) {
  auto o = std::make_shared<BenchOpts>();
  auto* sub = c.app.add_subcommand("benchmark", "Measure one shared solution against the baseline");
  sub->add_option("--workload", o->workload)->required();
  sub->add_option("--solution-uid", o->solution)->required();
  sub->add_option("--server", o->server);
  sub->add_option("--dataset", o->dataset);
  sub->add_option("--cmd", o->cmd);
  sub->add_option("--baseline", o->baseline);
  sub->add_option("--repetitions", o->repetitions)->check(CLI::PositiveNumber);
  sub->add_option("--record", o->record, "Alias of the experiment entry");
  sub->callback([&c, o] {
    c.action = [&c, o] {
      Session s(c.g);
      HttpTransport transport(server_url(s, o->server));
      auto solution = transport.solution(o->solution);
      if (!solution) throw ContractError("unknown solution " + o->solution);
      auto w = s.registry.load_workload(o->workload);
      auto env = choose_compiler(s, w, c.g.compiler, c.err);
      auto space = space_for(s, env, w);
      auto candidate = parse(solution->assignment_text, space);
      auto baseline = parse(o->baseline, space);

      ExperimentEntry e;
      e.alias = o->record;
      e.scenario_id = "benchmark";
      e.workload = o->workload;
      e.dataset = o->dataset;
      e.compiler = env;
      e.platform = PlatformInfo::detect();
      auto entry = s.store.create_entry(e, space);
      std::uint64_t seed = s.seed();
      auto measure = [&](const FlagAssignment& a, const std::string& tag) {
        PipelineRequest req;
        req.workload = o->workload;
        req.dataset = o->dataset;
        req.command_key = o->cmd;
        req.assignment = a;
        req.env = env;
        req.repetitions = o->repetitions;
        req.noise_seed = splitmix64(seed++);
        auto p = make_point(s.pipeline.execute(req, space), a, space,
                            ReplayInfo{o->workload, o->cmd, o->dataset, req.noise_seed, o->repetitions}, s.stats);
        p.tag = tag;
        p.point_uid = s.store.record_point(entry, p);
        return p;
      };
      ExperimentPoint base, sol;
      {
        FileLock lock(s.measurement_lock());
        base = measure(baseline, "baseline");
        sol = measure(candidate, "solution:" + o->solution);
      }
      Json j{{"entry", entry}, {"solution_uid", o->solution}, {"flags", sol.rendered}, {"failure", failure_text(sol.failure)}};
      auto bt = base.characteristics.find(kExecutionTime);
      auto st = sol.characteristics.find(kExecutionTime);
      if (bt != base.characteristics.end() && st != sol.characteristics.end()) {
        auto cmp = compare(bt->second, st->second, s.stats.trust_threshold);
        j["speedup"] = speedup_over_baseline(bt->second, st->second);
        j["trustable"] = cmp.trustable;
      }
      if (base.characteristics.contains(kBinarySize) && sol.characteristics.contains(kBinarySize)) {
        j["size_ratio"] = base.objective(kBinarySize) / sol.objective(kBinarySize);
      }
      if (c.g.json) {
        emit(c.out, j);
      } else {
        c.out << "entry " << entry << "\nsolution " << o->solution << "  " << sol.rendered << '\n';
        if (j.contains("speedup")) {
          c.out << "speedup " << format_double(j["speedup"].get<double>())
                << (j["trustable"].get<bool>() ? "" : " (untrustable)") << '\n';
        }
        if (j.contains("size_ratio")) c.out << "size ratio " << format_double(j["size_ratio"].get<double>()) << '\n';
        if (sol.failure) c.out << "failure " << to_string(*sol.failure) << '\n';
      }
      return 0;
    };
  });
}

// ---------------------------------------------------------------- model

ModelKind parse_kind(const std::string& text) {
  if (text == "nearest_neighbor" || text == "nn") return ModelKind::kNearestNeighbor;
  if (text == "decision_tree" || text == "tree") return ModelKind::kDecisionTree;
  throw ContractError("unknown model kind '" + text + "'");
}

std::vector<FeatureId> parse_features(const std::string& text) {
  std::vector<FeatureId> ids;
  for (const auto& f : split_list(text)) ids.push_back(FeatureId::parse(f));
  return ids;
}

Json feature_names(const std::vector<FeatureId>& ids) {
  Json arr = Json::array();
  for (const auto& f : ids) arr.push_back(f.name());
  return arr;
}

FeatureVector workload_features(const Session& s, const std::string& workload) {
  auto v = s.registry.load_feature_vector(workload);
  return v.has(FeatureId(FeatureId::kInstructionCount)) ? normalize_features(std::move(v)) : v;
}

struct ModelOpts {
  std::string dataset, kind = "decision_tree", features, out, model, workload, feature_file, entries, table, depths,
      mode = "remove";
  int max_depth = 0;
  double margin = kClassificationMargin;
};

ModelSpec spec_from(const ModelOpts& o, const Session& s) {
  ModelSpec spec;
  spec.kind = parse_kind(o.kind);
  spec.max_depth = o.max_depth;
  spec.feature_set = parse_features(o.features);
  spec.seed = s.cfg.seed.value_or(0);
  return spec;
}

void add_model(Ctx& c) {
  auto* model = c.app.add_subcommand("model", "Label workloads and train flag-prediction models");
  model->require_subcommand(1);

  auto lo = std::make_shared<ModelOpts>();
  auto* label = model->add_subcommand("label", "Label workloads by their best solution");
  label->add_option("--entries", lo->entries, "Comma-separated experiment entries");
  label->add_option("--table", lo->table, "Scenario table JSON (e.g. a crowd server store file)");
  label->add_option("--margin", lo->margin);
  label->add_option("--out", lo->out, "Write the labeled dataset here");
  label->callback([&c, lo] {
    c.action = [&c, lo] {
      Session s(c.g);
      if (lo->entries.empty() == lo->table.empty()) throw ContractError("give exactly one of --entries or --table");
      auto matrix = lo->table.empty() ? build_reaction_matrix(s.store, split_list(lo->entries), s.cfg.trust_threshold)
                                      : build_reaction_matrix(table_from_json(read_json(lo->table)));
      for (const auto& w : matrix.warnings) c.err << "warning: " << w << '\n';
      auto labeling = label_workloads(matrix, lo->margin);
      std::map<std::string, FeatureVector> features;
      for (const auto& [w, l] : labeling.labels) {
        try {
          features[w] = workload_features(s, w);
        } catch (const std::exception& e) {
          c.err << "warning: no features for " << w << ": " << e.what() << '\n';
        }
      }
      auto dataset = make_dataset(labeling, features);
      if (!lo->out.empty()) write_json_atomic(lo->out, to_json(dataset));
      if (c.g.json) {
        emit(c.out, {{"labels", labeling.labels}, {"groups", labeling.groups}, {"items", dataset.items.size()}});
      } else {
        for (const auto& [l, ws] : labeling.groups) {
          c.out << l << ":";
          for (const auto& w : ws) c.out << ' ' << w;
          c.out << '\n';
        }
      }
      return 0;
    };
  });

  auto tr = std::make_shared<ModelOpts>();
  auto* train_cmd = model->add_subcommand("train", "Train a model on a labeled dataset");
  train_cmd->add_option("--dataset", tr->dataset)->required();
  train_cmd->add_option("--kind", tr->kind, "nearest_neighbor | decision_tree");
  train_cmd->add_option("--max-depth", tr->max_depth, "0 = unlimited");
  train_cmd->add_option("--features", tr->features, "Comma-separated feature ids");
  train_cmd->add_option("--out", tr->out, "Write the model here");
  train_cmd->callback([&c, tr] {
    c.action = [&c, tr] {
      Session s(c.g);
      auto dataset = labeled_dataset_from_json(read_json(tr->dataset));
      auto result = train_with_warnings(spec_from(*tr, s), dataset);
      for (const auto& w : result.warnings) c.err << "warning: " << w << '\n';
      if (!tr->out.empty()) write_json_atomic(tr->out, to_json(result.model));
      double acc = accuracy(result.model, dataset);
      const auto* tree = std::get_if<DecisionTreeModel>(&result.model);
      if (c.g.json) {
        Json j{{"accuracy", acc}, {"model", to_json(result.model)}};
        if (tree) {
          j["depth"] = tree->depth();
          j["rules"] = tree->rules();
        }
        emit(c.out, j);
      } else {
        c.out << "in-sample accuracy " << format_double(acc) << '\n';
        if (tree) c.out << "depth " << tree->depth() << '\n' << tree->rules();
      }
      return 0;
    };
  });

  auto cv = std::make_shared<ModelOpts>();
  auto* cv_cmd = model->add_subcommand("cv", "Leave-one-out cross-validation");
  cv_cmd->add_option("--dataset", cv->dataset)->required();
  cv_cmd->add_option("--kind", cv->kind);
  cv_cmd->add_option("--max-depth", cv->max_depth);
  cv_cmd->add_option("--features", cv->features);
  cv_cmd->callback([&c, cv] {
    c.action = [&c, cv] {
      Session s(c.g);
      auto dataset = labeled_dataset_from_json(read_json(cv->dataset));
      double acc = loo_cv(spec_from(*cv, s), dataset);
      if (c.g.json) emit(c.out, {{"cv_accuracy", acc}, {"items", dataset.items.size()}});
      else c.out << "loo accuracy " << format_double(acc) << " over " << dataset.items.size() << " items\n";
      return 0;
    };
  });

  auto pr = std::make_shared<ModelOpts>();
  auto* predict_cmd = model->add_subcommand("predict", "Predict the best solution for a workload");
  predict_cmd->add_option("--model", pr->model)->required();
  predict_cmd->add_option("--workload", pr->workload, "Registered workload with a feature file");
  predict_cmd->add_option("--features", pr->feature_file, "Feature JSON file");
  predict_cmd->callback([&c, pr] {
    c.action = [&c, pr] {
      Session s(c.g);
      if (pr->workload.empty() == pr->feature_file.empty()) throw ContractError("give exactly one of --workload or --features");
      auto m = model_from_json(read_json(pr->model));
      FeatureVector v;
      if (!pr->workload.empty()) {
        v = workload_features(s, pr->workload);
      } else {
        v = read_feature_file(pr->feature_file, fs::path(pr->feature_file).stem().string());
        if (v.has(FeatureId(FeatureId::kInstructionCount))) v = normalize_features(std::move(v));
      }
      auto label = predict(m, v);
      if (c.g.json) emit(c.out, {{"workload", v.workload}, {"label", label}});
      else c.out << label << '\n';
      return 0;
    };
  });

  auto ad = std::make_shared<ModelOpts>();
  auto* depth_cmd = model->add_subcommand("autotune-depth", "Pick the tree depth with the best CV accuracy");
  depth_cmd->add_option("--dataset", ad->dataset)->required();
  depth_cmd->add_option("--depths", ad->depths, "Comma-separated depths (default 1..8)");
  depth_cmd->add_option("--features", ad->features);
  depth_cmd->callback([&c, ad] {
    c.action = [&c, ad] {
      auto dataset = labeled_dataset_from_json(read_json(ad->dataset));
      std::vector<int> depths;
      for (const auto& d : split_list(ad->depths)) depths.push_back(std::stoi(d));
      if (depths.empty()) depths = {1, 2, 3, 4, 5, 6, 7, 8};
      auto tuning = autotune_depth(dataset, depths, parse_features(ad->features));
      if (c.g.json) {
        Json curve = Json::array();
        for (const auto& p : tuning.curve) {
          curve.push_back({{"depth", p.depth}, {"cv_accuracy", p.cv_accuracy}, {"in_sample_accuracy", p.in_sample_accuracy}});
        }
        emit(c.out, {{"best_depth", tuning.best_depth}, {"curve", curve}});
      } else {
        for (const auto& p : tuning.curve) {
          c.out << "depth " << p.depth << "  cv " << format_double(p.cv_accuracy) << "  in-sample "
                << format_double(p.in_sample_accuracy) << '\n';
        }
        c.out << "best depth " << tuning.best_depth << '\n';
      }
      return 0;
    };
  });

  auto rf = std::make_shared<ModelOpts>();
  auto* rf_cmd = model->add_subcommand("reduce-features", "Greedy feature subset search");
  rf_cmd->add_option("--dataset", rf->dataset)->required();
  rf_cmd->add_option("--kind", rf->kind);
  rf_cmd->add_option("--max-depth", rf->max_depth);
  rf_cmd->add_option("--features", rf->features, "Starting feature set");
  rf_cmd->add_option("--mode", rf->mode, "remove | add");
  rf_cmd->callback([&c, rf] {
    c.action = [&c, rf] {
      Session s(c.g);
      auto dataset = labeled_dataset_from_json(read_json(rf->dataset));
      FeatureSearch mode;
      if (rf->mode == "remove") mode = FeatureSearch::kGreedyRemove;
      else if (rf->mode == "add") mode = FeatureSearch::kGreedyAdd;
      else throw ContractError("unknown search mode '" + rf->mode + "'");
      auto red = reduce_features(spec_from(*rf, s), dataset, mode);
      if (c.g.json) {
        emit(c.out, {{"features", feature_names(red.features)}, {"accuracy", red.accuracy}});
      } else {
        for (const auto& f : red.features) c.out << f.name() << ' ';
        c.out << "\naccuracy " << format_double(red.accuracy) << '\n';
      }
      return 0;
    };
  });
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"flagforge: compiler flag autotuning, reduction and crowd tuning", "flagforge"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  Action action;
  app.add_option("--repo", g.repo, "Repository root (default $FLAGFORGE_REPO or ./flagforge-repo)");
  app.add_flag("--json", g.json, "Machine-readable output");
  app.add_option("--compiler", g.compiler, "Compiler id, family or path; synthetic workloads take e.g. gcc-7.1.0");
  app.add_option("--seed", g.seed, "Random seed");
  app.add_option("--trust-threshold", g.threshold, "Relative spread that makes a measurement noisy");

  Ctx c{app, g, out, err, action};
  add_detect(c);
  add_run(c);
  add_autotune(c, false);
  add_autotune(c, true);
  add_reduce(c);
  add_replay_to(c, app);
  add_experiment(c);
  add_plot_data(c);
  add_registry(c);
  add_crowd(c);
  add_benchmark(c);
  add_model(c);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }
  if (!action) {
    err << app.help();
    return 1;
  }
  try {
    return action();
  } catch (const EnvironmentError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const ContractError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const Json::exception& e) {
    err << "error: malformed JSON input: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace flagforge::cli
