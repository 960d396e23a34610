#include <sstream>

#include <gtest/gtest.h>

#include "flagforge/error.hpp"
#include "flagforge/experiment.hpp"
#include "test_support.hpp"

using namespace flagforge;

namespace {

SyntheticSpec spec_with_noise(NoiseModel noise = {}) {
  SyntheticSpec s;
  s.base_time = 10.0;
  s.base_size = 5000;
  s.noise = noise;
  s.flag_effects["-O3"].time_multiplier = 0.4;
  s.flag_effects["-ff0"].time_multiplier = 0.8;
  s.flag_effects["-ff0"].size_delta = 300;
  return s;
}

ExperimentPoint manual_point(double time, double size, const std::string& rendered, const FlagSpace& space) {
  ExperimentPoint p;
  p.tag = "manual";
  p.assignment = parse(rendered, space);
  p.rendered = rendered;
  p.characteristics[kExecutionTime] = summarize(std::vector<double>{time});
  p.characteristics[kBinarySize] = summarize(std::vector<double>{size});
  p.raw_samples[kExecutionTime] = {time};
  return p;
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST(Store, EntryAndPointRoundTrip) {
  fftest::Sandbox box;
  box.registry.register_workload(fftest::synthetic_workload("syn", spec_with_noise()));
  auto space = fftest::boolean_space(4);
  auto [entry, uid] = fftest::record_measured(box, "syn", space, parse("-O3 -ff0 -fno-f2", space), 3, 7);
  EXPECT_TRUE(is_uid(entry));
  EXPECT_TRUE(is_uid(uid));

  auto e = box.store.load_entry(entry);
  EXPECT_EQ(e.workload, "syn");
  EXPECT_EQ(e.points, std::vector<std::string>{uid});
  EXPECT_EQ(e.compiler, box.env);

  auto p = box.store.load_point(entry, uid);
  EXPECT_EQ(p.rendered, "-O3 -ff0 -fno-f2");
  EXPECT_EQ(p.replay_info.seed, 7u);
  EXPECT_EQ(p.replay_info.repetitions, 3);
  EXPECT_DOUBLE_EQ(p.objective(kExecutionTime), 10.0 * 0.4 * 0.8);
  EXPECT_DOUBLE_EQ(p.objective(kBinarySize), 5300);
  EXPECT_EQ(p.raw_samples.at(kExecutionTime).size(), 3u);
  EXPECT_EQ(point_from_json(to_json(p)), p);
  EXPECT_EQ(entry_from_json(to_json(e)), e);

  auto stored_space = box.store.load_flagspace(entry);
  EXPECT_EQ(render(p.assignment, stored_space), p.rendered);
}

TEST(Store, AliasResolutionAndUnknownEntry) {
  fftest::Sandbox box;
  auto space = fftest::boolean_space(1);
  ExperimentEntry e;
  e.alias = "susan-tune";
  e.workload = "w";
  auto uid = box.store.create_entry(e, space);
  EXPECT_EQ(box.store.resolve("susan-tune"), uid);
  EXPECT_EQ(box.store.resolve(uid), uid);
  EXPECT_TRUE(box.store.has_entry("susan-tune"));
  EXPECT_FALSE(box.store.has_entry("nope"));
  EXPECT_THROW(box.store.load_entry("0000000000000000"), ContractError);
  EXPECT_THROW(box.store.load_point(uid, "0000000000000000"), ContractError);
  ExperimentEntry dup;
  dup.alias = "susan-tune";
  EXPECT_THROW(box.store.create_entry(dup, space), ContractError);
}

TEST(Store, ListingOrderedByCreation) {
  fftest::Sandbox box;
  auto space = fftest::boolean_space(1);
  std::vector<std::string> created;
  for (int i = 0; i < 5; ++i) {
    ExperimentEntry e;
    e.workload = "w" + std::to_string(i);
    created.push_back(box.store.create_entry(e, space));
  }
  auto listed = box.store.list_entries();
  ASSERT_EQ(listed.size(), 5u);
  for (std::size_t i = 1; i < listed.size(); ++i) {
    EXPECT_TRUE(std::pair(listed[i - 1].created_at, listed[i - 1].entry_uid) <
                std::pair(listed[i].created_at, listed[i].entry_uid));
  }
}

TEST(Store, SurvivesReopenAndRemovesPoints) {
  fftest::Sandbox box;
  auto space = fftest::boolean_space(2);
  ExperimentEntry e;
  e.workload = "w";
  auto entry = box.store.create_entry(e, space);
  auto a = box.store.record_point(entry, manual_point(1.0, 10, "-O3", space));
  auto b = box.store.record_point(entry, manual_point(2.0, 5, "-O3 -ff0", space));

  ExperimentStore reopened(box.dir.path(), UidGenerator(99));
  auto points = reopened.load_points(entry);
  ASSERT_EQ(points.size(), 2u);
  EXPECT_EQ(points[0].point_uid, a);
  EXPECT_EQ(points[1].point_uid, b);
  reopened.remove_point(entry, a);
  EXPECT_EQ(reopened.load_entry(entry).points, std::vector<std::string>{b});
  EXPECT_FALSE(fftest::fs::exists(reopened.point_path(entry, a)));
}

TEST(Store, ReusedSeedSkipsTakenUids) {
  fftest::Sandbox box;
  auto space = fftest::boolean_space(1);
  ExperimentStore first(box.dir.path(), UidGenerator(5));
  ExperimentStore second(box.dir.path(), UidGenerator(5));
  ExperimentEntry e;
  auto a = first.create_entry(e, space);
  auto b = second.create_entry(e, space);
  EXPECT_NE(a, b);
}

TEST(Export, CsvColumnsAndFrontier) {
  fftest::Sandbox box;
  auto space = load_flagspace("gcc", "4.9.2", default_flagspace_dirs());
  ExperimentEntry e;
  e.workload = "susan";
  auto entry = box.store.create_entry(e, space);
  EXPECT_EQ(box.store.export_table(entry, {"time", "size", "flags"}), "time,size,flags\n");

  box.store.record_point(entry, manual_point(4.3, 36360, "-O3", space));
  box.store.record_point(entry, manual_point(11.7, 60560, "", space));
  auto table = box.store.export_table(entry, {"time", "size", "flags"});
  auto rows = lines(table);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0], "time,size,flags");
  EXPECT_EQ(rows[1], "4.3,36360,-O3");
  EXPECT_EQ(rows[2], "11.7,60560,");

  auto with_frontier = lines(box.store.export_table(entry, {"flags", "frontier"}));
  EXPECT_EQ(with_frontier[1], "-O3,1");
  EXPECT_EQ(with_frontier[2], ",0");
  EXPECT_EQ(lines(box.store.export_table(entry))[0], "uid,time,time_pm,size,flags,frontier");
  EXPECT_THROW(box.store.export_table(entry, {"time", "speed"}), ContractError);
}

TEST(Export, FlagsWithCommasAreQuoted) {
  fftest::Sandbox box;
  FlagSpace space("gcc", {}, {"", "-O3"},
                  {FlagDescriptor{"sanitize", ChoiceForm{{"address,undefined", "thread"}, "-fsanitize=VALUE"}, {}, {}}});
  ExperimentEntry e;
  auto entry = box.store.create_entry(e, space);
  box.store.record_point(entry, manual_point(1.0, 1, "-O3 -fsanitize=address,undefined", space));
  EXPECT_EQ(lines(box.store.export_table(entry, {"flags"}))[1], "\"-O3 -fsanitize=address,undefined\"");
}

TEST(Replay, DeterministicPointReplaysExactly) {
  fftest::Sandbox box;
  box.registry.register_workload(fftest::synthetic_workload("syn", spec_with_noise()));
  auto space = fftest::boolean_space(3);
  auto [entry, uid] = fftest::record_measured(box, "syn", space, parse("-O3 -ff0", space), 3);
  auto report = replay(box.store, box.pipeline, entry, uid);
  EXPECT_TRUE(report.passed);
  EXPECT_TRUE(report.md5_match);
  ASSERT_EQ(report.rows.size(), 2u);
  for (const auto& row : report.rows) EXPECT_EQ(row.relative_difference, 0.0) << row.characteristic;
}

TEST(Replay, GaussianNoisePointPassesWithinTolerance) {
  fftest::Sandbox box;
  box.registry.register_workload(
      fftest::synthetic_workload("noisy", spec_with_noise(NoiseModel{NoiseModel::Kind::kGaussian, 0.01, 0, 0})));
  auto space = fftest::boolean_space(3);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto [entry, uid] = fftest::record_measured(box, "noisy", space, parse("-O3", space), 10, seed);
    auto report = replay(box.store, box.pipeline, entry, uid, 0.05);
    EXPECT_TRUE(report.passed) << seed;
  }
}

TEST(Replay, PerturbedPointFails) {
  fftest::Sandbox box;
  box.registry.register_workload(fftest::synthetic_workload("syn", spec_with_noise()));
  auto space = fftest::boolean_space(3);
  auto [entry, uid] = fftest::record_measured(box, "syn", space, parse("-O3", space), 1);
  auto path = box.store.point_path(entry, uid);
  auto doc = read_json(path);
  auto point = point_from_json(doc);
  auto& t = point.characteristics.at(kExecutionTime);
  t.min *= 1.1;
  t.max *= 1.1;
  t.mean *= 1.1;
  t.expected *= 1.1;
  write_json_atomic(path, to_json(point));

  auto report = replay(box.store, box.pipeline, entry, uid, 0.05);
  EXPECT_FALSE(report.passed);
  EXPECT_FALSE(report.behavioral_difference);
  bool time_failed = false;
  for (const auto& row : report.rows) {
    if (row.characteristic == kExecutionTime) {
      time_failed = !row.passed;
      EXPECT_NEAR(row.relative_difference, 0.1 / 1.1, 1e-9);
    }
  }
  EXPECT_TRUE(time_failed);
  EXPECT_TRUE(replay(box.store, box.pipeline, entry, uid, 0.1).passed);
}

TEST(Replay, CompilerVersionChangeIsBehavioralDifference) {
  fftest::Sandbox box;
  auto s = spec_with_noise();
  s.flag_effects["-ff1"].failure = FailureKind::kCompilerCrash;
  s.flag_effects["-ff1"].fixed_in = "7.1";
  box.registry.register_workload(fftest::synthetic_workload("bug", s));
  auto space = fftest::boolean_space(3);
  auto [entry, uid] = fftest::record_measured(box, "bug", space, parse("-O3 -ff1", space));
  auto original = box.store.load_point(entry, uid);
  EXPECT_EQ(original.failure, FailureKind::kCompilerCrash);
  EXPECT_TRUE(original.characteristics.empty() || !original.characteristics.contains(kExecutionTime));

  EXPECT_TRUE(replay(box.store, box.pipeline, entry, uid).passed);
  auto report = replay(box.store, box.pipeline, entry, uid, 0.05, CompilerEnv::synthetic_env("gcc", "7.1.0"));
  EXPECT_TRUE(report.behavioral_difference);
  EXPECT_FALSE(report.passed);
  EXPECT_EQ(report.original_failure, FailureKind::kCompilerCrash);
  EXPECT_FALSE(report.replayed_failure);
}

TEST(Replay, MissingCompilerIsEnvironmentError) {
  fftest::Sandbox box;
  box.registry.register_workload(fftest::synthetic_workload("syn", spec_with_noise()));
  auto space = fftest::boolean_space(1);
  auto [entry, uid] = fftest::record_measured(box, "syn", space, parse("-O3", space));
  CompilerEnv gone;
  gone.id = "gcc-99";
  gone.family = "gcc";
  gone.version = "99";
  gone.executable = box.dir / "no-such-gcc";
  EXPECT_THROW(replay(box.store, box.pipeline, entry, uid, 0.05, gone), EnvironmentError);
}

TEST(MakePoint, FailedPointHasNoObjectives) {
  PipelineResult failed;
  failed.failure = FailureKind::kCompileError;
  auto space = fftest::boolean_space(1);
  auto p = make_point(failed, parse("-O3", space), space, {});
  EXPECT_EQ(p.failure, FailureKind::kCompileError);
  EXPECT_FALSE(objective_vector(p, {kExecutionTime, kBinarySize}));
  EXPECT_TRUE(frontier_candidates({p}, {kExecutionTime, kBinarySize}).empty());
}
