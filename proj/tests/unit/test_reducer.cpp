#include <gtest/gtest.h>

#include "flagforge/error.hpp"
#include "flagforge/reducer.hpp"
#include "test_support.hpp"

using namespace flagforge;

namespace {

PruneConfig ordered() {
  PruneConfig c;
  c.deterministic_order = true;
  return c;
}

}  // namespace

TEST(Reduce, DropsNeutralFlags) {
  // X=f0, Y=f1, Z=f2, W=f3: only X and Z change anything
  SyntheticSpec spec;
  spec.base_time = 10;
  spec.base_size = 1000;
  spec.flag_effects["-ff0"].time_multiplier = 0.5;
  spec.flag_effects["-ff2"].time_multiplier = 0.7;
  spec.flag_effects["-ff2"].size_delta = -50;
  fftest::Sandbox box;
  box.registry.register_workload(fftest::synthetic_workload("syn", spec));
  auto space = fftest::boolean_space(4);
  auto [entry, uid] = fftest::record_measured(box, "syn", space, parse("-O3 -ff0 -ff1 -ff2 -ff3", space));
  auto original = box.store.load_point(entry, uid);

  Reducer reducer(box.store, box.pipeline);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto config = PruneConfig{};
    config.seed = seed;
    auto r = reducer.reduce(entry, uid, config);
    EXPECT_EQ(render(r.assignment, space), "-O3 -ff0 -ff2") << seed;
    auto reduced = box.store.load_point(entry, r.point_uid);
    EXPECT_EQ(reduced.tag, "reduced");
    EXPECT_DOUBLE_EQ(reduced.objective(kExecutionTime), original.objective(kExecutionTime));
    EXPECT_DOUBLE_EQ(reduced.objective(kBinarySize), original.objective(kBinarySize));
  }
}

TEST(Reduce, BaselineIsAFixedPoint) {
  SyntheticSpec spec;
  spec.flag_effects["-O3"].time_multiplier = 0.5;
  fftest::Sandbox box;
  box.registry.register_workload(fftest::synthetic_workload("syn", spec));
  auto space = fftest::boolean_space(2);
  auto [entry, uid] = fftest::record_measured(box, "syn", space, parse("-O3", space));
  Reducer reducer(box.store, box.pipeline);
  auto r = reducer.reduce(entry, uid, ordered());
  EXPECT_EQ(r.assignment, parse("-O3", space));
  EXPECT_EQ(r.evaluations, 0);
}

TEST(Reduce, Md5ShortcutSkipsMeasurements) {
  SyntheticSpec spec;
  spec.flag_effects["-ff0"].time_multiplier = 0.5;
  fftest::Sandbox box;
  box.registry.register_workload(fftest::synthetic_workload("syn", spec));
  auto space = fftest::boolean_space(4);
  auto [entry, uid] = fftest::record_measured(box, "syn", space, parse("-O3 -ff0 -ff1 -ff2 -ff3", space));
  Reducer reducer(box.store, box.pipeline);
  auto config = ordered();
  config.use_md5_shortcut = true;
  auto r = reducer.reduce(entry, uid, config);
  EXPECT_EQ(render(r.assignment, space), "-O3 -ff0");
  EXPECT_EQ(r.md5_shortcuts, 3);
}

TEST(Reduce, ToleranceAcceptsSmallLoss) {
  SyntheticSpec spec;
  spec.base_time = 10;
  spec.flag_effects["-ff0"].time_multiplier = 0.99;
  fftest::Sandbox box;
  box.registry.register_workload(fftest::synthetic_workload("syn", spec));
  auto space = fftest::boolean_space(1);
  auto [entry, uid] = fftest::record_measured(box, "syn", space, parse("-O3 -ff0", space));
  Reducer reducer(box.store, box.pipeline);
  EXPECT_EQ(render(reducer.reduce(entry, uid, ordered()).assignment, space), "-O3");
  auto strict = ordered();
  strict.tolerance = 0.0;
  EXPECT_EQ(render(reducer.reduce(entry, uid, strict).assignment, space), "-O3 -ff0");
}

TEST(Reduce, KeepKeyIsNeverRemoved) {
  SyntheticSpec spec;
  fftest::Sandbox box;
  box.registry.register_workload(fftest::synthetic_workload("syn", spec));
  auto space = fftest::boolean_space(3);
  auto [entry, uid] = fftest::record_measured(box, "syn", space, parse("-O3 -ff0 -ff1", space));
  Reducer reducer(box.store, box.pipeline);
  auto config = ordered();
  config.keep_key = "f1";
  EXPECT_EQ(render(reducer.reduce(entry, uid, config).assignment, space), "-O3 -ff1");
}

TEST(Reduce, FailedPointRejected) {
  SyntheticSpec spec;
  spec.flag_effects["-ff0"].failure = FailureKind::kCompilerCrash;
  fftest::Sandbox box;
  box.registry.register_workload(fftest::synthetic_workload("syn", spec));
  auto space = fftest::boolean_space(1);
  auto [entry, uid] = fftest::record_measured(box, "syn", space, parse("-O3 -ff0", space));
  Reducer reducer(box.store, box.pipeline);
  EXPECT_THROW(reducer.reduce(entry, uid, ordered()), ContractError);
  EXPECT_THROW(reducer.contribution(entry, uid), ContractError);
}

TEST(Invert, OffFormsThatHelpAreKept) {
  SyntheticSpec spec;
  spec.base_time = 10;
  spec.flag_effects["-ff0"].time_multiplier = 0.5;
  spec.flag_effects["-fno-f1"].time_multiplier = 0.9;
  spec.flag_effects["-fno-f2"].time_multiplier = 1.2;
  fftest::Sandbox box;
  box.registry.register_workload(fftest::synthetic_workload("syn", spec));
  auto space = fftest::boolean_space(4);
  auto [entry, uid] = fftest::record_measured(box, "syn", space, parse("-O3 -ff0", space));
  Reducer reducer(box.store, box.pipeline);
  auto config = ordered();
  config.invert = true;
  auto r = reducer.reduce(entry, uid, config);
  EXPECT_EQ(render(r.assignment, space), "-O3 -ff0 -fno-f1 -ff2 -fno-f3");
  auto p = box.store.load_point(entry, r.point_uid);
  EXPECT_EQ(p.tag, "inverted");
  EXPECT_DOUBLE_EQ(p.objective(kExecutionTime), 4.5);
}

TEST(Contribution, RemovingBeneficialFlagShowsLoss) {
  SyntheticSpec spec;
  spec.base_time = 10;
  spec.flag_effects["-ff0"].time_multiplier = 0.8;
  spec.flag_effects["-ff1"].size_delta = 500;
  spec.base_size = 1000;
  fftest::Sandbox box;
  box.registry.register_workload(fftest::synthetic_workload("syn", spec));
  auto space = fftest::boolean_space(3);
  auto [entry, uid] = fftest::record_measured(box, "syn", space, parse("-O3 -ff0 -ff1 -ff2", space));
  Reducer reducer(box.store, box.pipeline);
  auto report = reducer.contribution(entry, uid);
  ASSERT_EQ(report.rows.size(), 3u);
  EXPECT_EQ(report.rows[0].flag, "f0");
  EXPECT_EQ(report.rows[0].verdict, Verdict::kImproves);
  EXPECT_NEAR(report.rows[0].delta_time, 0.25, 1e-12);
  EXPECT_EQ(report.rows[1].verdict, Verdict::kDegrades);
  EXPECT_NEAR(report.rows[1].delta_size, -500.0 / 1500.0, 1e-12);
  EXPECT_EQ(report.rows[2].verdict, Verdict::kNeutral);
  EXPECT_EQ(to_json(report).at("rows").size(), 3u);
}

TEST(Minimize, IsolatesTheCrashingFlag) {
  SyntheticSpec spec;
  spec.flag_effects["-ff3"].failure = FailureKind::kCompilerCrash;
  fftest::Sandbox box;
  box.registry.register_workload(fftest::synthetic_workload("syn", spec));
  auto space = fftest::boolean_space(6);
  auto [entry, uid] = fftest::record_measured(box, "syn", space, parse("-O3 -ff0 -fno-f1 -ff3 -ff4 -fno-f5", space));
  Reducer reducer(box.store, box.pipeline);
  auto r = reducer.minimize_failure(entry, uid, PruneConfig{});
  EXPECT_EQ(render(r.assignment, space), "-O3 -ff3");
  auto p = box.store.load_point(entry, r.point_uid);
  EXPECT_EQ(p.tag, "minimized");
  EXPECT_EQ(p.failure, FailureKind::kCompilerCrash);
}

TEST(Minimize, RunFailureKeepsItsTrigger) {
  SyntheticSpec spec;
  spec.flag_effects["-ff1"].failure = FailureKind::kWrongOutput;
  fftest::Sandbox box;
  box.registry.register_workload(fftest::synthetic_workload("syn", spec));
  auto space = fftest::boolean_space(6);
  auto [entry, uid] = fftest::record_measured(box, "syn", space, parse("-O3 -ff0 -ff1 -ff2", space), 2);
  Reducer reducer(box.store, box.pipeline);
  auto r = reducer.minimize_failure(entry, uid, PruneConfig{});
  EXPECT_EQ(render(r.assignment, space), "-O3 -ff1");
  EXPECT_EQ(box.store.load_point(entry, r.point_uid).failure, FailureKind::kWrongOutput);
}

TEST(Minimize, RejectsHealthyAndIrreproduciblePoints) {
  SyntheticSpec spec;
  spec.flag_effects["-ff0"].failure = FailureKind::kCompilerCrash;
  spec.flag_effects["-ff0"].fixed_in = "7.1";
  fftest::Sandbox box;
  box.registry.register_workload(fftest::synthetic_workload("syn", spec));
  auto space = fftest::boolean_space(2);
  auto [ok_entry, ok_uid] = fftest::record_measured(box, "syn", space, parse("-O3 -ff1", space));
  Reducer reducer(box.store, box.pipeline);
  EXPECT_THROW(reducer.minimize_failure(ok_entry, ok_uid, PruneConfig{}), ContractError);

  auto [entry, uid] = fftest::record_measured(box, "syn", space, parse("-O3 -ff0", space));
  auto meta = box.store.load_entry(entry);
  meta.compiler = CompilerEnv::synthetic_env("gcc", "7.1.0");
  box.store.save_entry(meta);
  EXPECT_THROW(reducer.minimize_failure(entry, uid, PruneConfig{}), ContractError);
}

TEST(PruneConfig, FromJson) {
  auto c = prune_config_from_json(Json::parse(
      R"({"tolerance": 0.01, "md5": true, "invert": false, "keep": "lto",
          "conditions": {"execution_time": "within_tolerance"}})"));
  EXPECT_DOUBLE_EQ(c.tolerance, 0.01);
  EXPECT_TRUE(c.use_md5_shortcut);
  EXPECT_EQ(c.keep_key, "lto");
  ASSERT_EQ(c.conditions.size(), 1u);
  EXPECT_EQ(c.conditions.at(kExecutionTime), Condition::kWithinTolerance);
  EXPECT_EQ(prune_config_from_json(Json::object()).conditions.size(), 2u);
  EXPECT_THROW(prune_config_from_json(Json{{"tolerance", -1}}), ContractError);
  EXPECT_THROW(prune_config_from_json(Json{{"conditions", {{"execution_time", "better"}}}}), ContractError);
  EXPECT_THROW(prune_config_from_json(Json{{"md5", "yes"}}), ContractError);
}
