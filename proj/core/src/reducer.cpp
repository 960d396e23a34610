#include "flagforge/reducer.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "flagforge/error.hpp"

namespace flagforge {

struct Reducer::Context {
  ExperimentEntry entry;
  ExperimentPoint point;
  FlagSpace space;
  PruneConfig config;
  int repetitions = 1;
};

namespace {

Condition parse_condition(const std::string& text) {
  if (text == "not_worse") return Condition::kNotWorse;
  if (text == "within_tolerance") return Condition::kWithinTolerance;
  throw ContractError("unknown prune condition '" + text + "'");
}

// Optional choices of an assignment, in flag-space order, env parameters last.
std::vector<std::string> removable(const FlagAssignment& a, const FlagSpace& space, const PruneConfig& config) {
  std::vector<std::string> names;
  for (const auto& d : space.descriptors()) {
    if (a.values.contains(d.name) || a.env_values.contains(d.name)) names.push_back(d.name);
  }
  for (const auto& [name, v] : a.values) {
    if (!space.find(name)) names.push_back(name);
  }
  if (config.keep_key) std::erase(names, *config.keep_key);
  return names;
}

// Every configured condition holds for `p` against the best values seen.
bool conditions_hold(const ExperimentPoint& p, const PruneConfig& config, const std::map<std::string, double>& best) {
  if (p.failure) return false;
  for (const auto& [name, cond] : config.conditions) {
    auto it = p.characteristics.find(name);
    if (it == p.characteristics.end()) return false;
    double v = it->second.expected;
    double b = best.at(name);
    bool ok = cond == Condition::kNotWorse ? v <= b * (1 + config.tolerance)
                                           : std::abs(v - b) <= config.tolerance * std::abs(b);
    if (!ok) return false;
  }
  return true;
}

}  // namespace

PruneConfig prune_config_from_json(const Json& j) {
  try {
    PruneConfig c;
    c.tolerance = j.value("tolerance", c.tolerance);
    c.use_md5_shortcut = j.value("md5", c.use_md5_shortcut);
    c.invert = j.value("invert", c.invert);
    if (j.contains("keep") && !j.at("keep").is_null()) c.keep_key = j.at("keep").get<std::string>();
    c.seed = j.value("seed", c.seed);
    c.deterministic_order = j.value("deterministic_order", c.deterministic_order);
    c.repetitions = j.value("repetitions", c.repetitions);
    if (j.contains("conditions")) {
      c.conditions.clear();
      for (const auto& [name, cond] : j.at("conditions").items()) c.conditions[name] = parse_condition(cond.get<std::string>());
    }
    if (!(c.tolerance >= 0)) throw ContractError("tolerance must be >= 0");
    if (c.repetitions < 0) throw ContractError("repetitions must be >= 0");
    return c;
  } catch (const Json::exception& e) {
    throw ContractError(std::string("malformed prune config: ") + e.what());
  }
}

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::kImproves: return "improves";
    case Verdict::kDegrades: return "degrades";
    case Verdict::kNeutral: return "neutral";
  }
  return "neutral";
}

Json to_json(const ContributionReport& report) {
  Json rows = Json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"flag", r.flag}, {"delta_time", r.delta_time}, {"delta_size", r.delta_size},
                    {"verdict", to_string(r.verdict)}});
  }
  return Json{{"rows", rows}};
}

Reducer::Reducer(ExperimentStore& store, const Pipeline& pipeline, StatsConfig stats)
    : store_(store), pipeline_(pipeline), stats_(stats) {}

Reducer::Context Reducer::load(const std::string& entry, const std::string& point_uid, const PruneConfig& config) const {
  if (!(config.tolerance >= 0)) throw ContractError("tolerance must be >= 0");
  Context ctx;
  ctx.entry = store_.load_entry(entry);
  ctx.point = store_.load_point(ctx.entry.entry_uid, point_uid);
  ctx.space = store_.load_flagspace(ctx.entry.entry_uid);
  ctx.config = config;
  ctx.repetitions = config.repetitions > 0 ? config.repetitions : std::max(1, ctx.point.replay_info.repetitions);
  return ctx;
}

PipelineResult Reducer::execute(const Context& ctx, const FlagAssignment& assignment, bool compile_only) const {
  PipelineRequest request;
  request.workload = ctx.point.replay_info.workload;
  request.dataset = ctx.point.replay_info.dataset;
  request.command_key = ctx.point.replay_info.command_key;
  request.assignment = assignment;
  request.env = ctx.entry.compiler;
  request.repetitions = ctx.repetitions;
  request.compile_only = compile_only;
  request.noise_seed = ctx.point.replay_info.seed;
  return pipeline_.execute(request, ctx.space);
}

ExperimentPoint Reducer::measure(const Context& ctx, const FlagAssignment& assignment) const {
  auto info = ctx.point.replay_info;
  info.repetitions = ctx.repetitions;
  return make_point(execute(ctx, assignment, false), assignment, ctx.space, info, stats_);
}

ReduceResult Reducer::reduce(const std::string& entry, const std::string& point_uid, const PruneConfig& config) {
  if (config.invert) return invert(entry, point_uid, config);
  auto ctx = load(entry, point_uid, config);
  if (ctx.point.failure || ctx.point.characteristics.empty()) {
    throw ContractError("point " + point_uid + " has no characteristics to preserve");
  }
  std::map<std::string, double> best;
  for (const auto& [name, cond] : config.conditions) best[name] = ctx.point.objective(name);


  ReduceResult result;
  FlagAssignment current = ctx.point.assignment;
  std::string current_md5 = ctx.point.binary_md5;
  std::optional<ExperimentPoint> current_point = ctx.point;
  std::mt19937_64 rng(config.seed);
  bool changed = true;
  while (changed) {
    changed = false;
    auto order = removable(current, ctx.space, config);
    if (!config.deterministic_order) std::shuffle(order.begin(), order.end(), rng);
    for (const auto& flag : order) {
      auto candidate = current.without(flag);
      if (config.use_md5_shortcut) {
        auto compiled = execute(ctx, candidate, true);
        ++result.evaluations;
        if (compiled.compile_ok && !compiled.binary_md5.empty() && compiled.binary_md5 == current_md5) {
          ++result.md5_shortcuts;
          current = std::move(candidate);
          current_point.reset();
          changed = true;
          continue;
        }
        if (!compiled.compile_ok) continue;
      }
      auto p = measure(ctx, candidate);
      ++result.evaluations;
      if (!conditions_hold(p, config, best)) continue;
      for (auto& [name, b] : best) b = std::min(b, p.objective(name));
      current = std::move(candidate);
      current_md5 = p.binary_md5;
      current_point = std::move(p);
      changed = true;
    }
  }

  ExperimentPoint reduced;
  if (current_point) {
    reduced = *current_point;
  } else {
    reduced = measure(ctx, current);
    ++result.evaluations;
  }
  reduced.point_uid.clear();
  reduced.tag = "reduced";
  result.point_uid = store_.record_point(ctx.entry.entry_uid, std::move(reduced));
  result.assignment = std::move(current);
  return result;
}

ReduceResult Reducer::invert(const std::string& entry, const std::string& point_uid, const PruneConfig& config) {
  auto ctx = load(entry, point_uid, config);
  if (ctx.point.failure || ctx.point.characteristics.empty()) {
    throw ContractError("point " + point_uid + " has no characteristics to preserve");
  }
  std::map<std::string, double> best;
  for (const auto& [name, cond] : config.conditions) best[name] = ctx.point.objective(name);

  ReduceResult result;
  FlagAssignment current = ctx.point.assignment;
  std::string current_md5 = ctx.point.binary_md5;
  std::vector<std::string> order;
  for (const auto& d : ctx.space.descriptors()) {
    if (!d.is_boolean() || current.values.contains(d.name)) continue;
    if (config.keep_key && *config.keep_key == d.name) continue;
    order.push_back(d.name);
  }
  if (!config.deterministic_order) {
    std::mt19937_64 rng(config.seed);
    std::shuffle(order.begin(), order.end(), rng);
  }
  for (const auto& flag : order) {
    auto candidate = current;
    candidate.values[flag] = false;
    if (config.use_md5_shortcut) {
      auto compiled = execute(ctx, candidate, true);
      ++result.evaluations;
      if (compiled.compile_ok && compiled.binary_md5 == current_md5) {
        ++result.md5_shortcuts;
        current = std::move(candidate);
        continue;
      }
    }
    auto p = measure(ctx, candidate);
    ++result.evaluations;
    if (conditions_hold(p, config, best)) {
      for (auto& [name, b] : best) b = std::min(b, p.objective(name));
      current = std::move(candidate);
      current_md5 = p.binary_md5;
    } else {
      // turning it off matters, so the solution names it explicitly on
      current.values[flag] = true;
    }
  }

  auto inverted = measure(ctx, current);
  ++result.evaluations;
  inverted.tag = "inverted";
  result.point_uid = store_.record_point(ctx.entry.entry_uid, std::move(inverted));
  result.assignment = std::move(current);
  return result;
}

ContributionReport Reducer::contribution(const std::string& entry, const std::string& point_uid,
                                         const PruneConfig& config) {
  auto ctx = load(entry, point_uid, config);
  if (ctx.point.failure || ctx.point.characteristics.empty()) {
    throw ContractError("point " + point_uid + " has no characteristics");
  }
  double time = ctx.point.objective(kExecutionTime);
  double size = ctx.point.objective(kBinarySize);
  ContributionReport report;
  for (const auto& flag : removable(ctx.point.assignment, ctx.space, PruneConfig{})) {
    auto p = measure(ctx, ctx.point.assignment.without(flag));
    ContributionRow row;
    row.flag = flag;
    if (p.failure) {
      // the flag is what keeps the pipeline working
      row.verdict = Verdict::kImproves;
      report.rows.push_back(row);
      continue;
    }
    row.delta_time = (p.objective(kExecutionTime) - time) / time;
    row.delta_size = (p.objective(kBinarySize) - size) / size;
    if (std::abs(row.delta_time) > config.tolerance) {
      row.verdict = row.delta_time > 0 ? Verdict::kImproves : Verdict::kDegrades;
    } else if (std::abs(row.delta_size) > config.tolerance) {
      row.verdict = row.delta_size > 0 ? Verdict::kImproves : Verdict::kDegrades;
    }
    report.rows.push_back(row);
  }
  return report;
}

ReduceResult Reducer::minimize_failure(const std::string& entry, const std::string& point_uid,
                                       const PruneConfig& config) {
  auto ctx = load(entry, point_uid, config);
  if (!ctx.point.failure) throw ContractError("point " + point_uid + " carries no failure");
  const FailureKind target = *ctx.point.failure;
  const bool compile_only = is_compile_failure(target);

  ReduceResult result;
  auto first = execute(ctx, ctx.point.assignment, compile_only);
  ++result.evaluations;
  if (first.failure != target) {
    throw ContractError("failure " + std::string(to_string(target)) + " of point " + point_uid + " does not reproduce");
  }
  FlagAssignment current = ctx.point.assignment;
  PipelineResult last = first;
  std::mt19937_64 rng(config.seed);
  bool changed = true;
  while (changed) {
    changed = false;
    auto order = removable(current, ctx.space, config);
    if (!config.deterministic_order) std::shuffle(order.begin(), order.end(), rng);
    for (const auto& flag : order) {
      auto candidate = current.without(flag);
      auto r = execute(ctx, candidate, compile_only);
      ++result.evaluations;
      if (r.failure != target) continue;
      current = std::move(candidate);
      last = std::move(r);
      changed = true;
    }
  }

  auto info = ctx.point.replay_info;
  info.repetitions = ctx.repetitions;
  auto point = make_point(last, current, ctx.space, info, stats_);
  point.tag = "minimized";
  result.point_uid = store_.record_point(ctx.entry.entry_uid, std::move(point));
  result.assignment = std::move(current);
  return result;
}

}  // namespace flagforge
