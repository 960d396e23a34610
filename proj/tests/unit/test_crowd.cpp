#include <algorithm>
#include <random>
#include <set>
#include <thread>
#include <tuple>

#include <gtest/gtest.h>

#include "flagforge/crowd.hpp"
#include "flagforge/error.hpp"
#include "test_support.hpp"

using namespace flagforge;

namespace {

const ScenarioKey kKey{"time-size", "gcc 4.9.2", "cortex-a53|linux"};

SubmitReport report(const std::string& participant, const std::string& workload,
                    std::map<std::string, double> reactions, std::optional<Candidate> candidate = std::nullopt) {
  SubmitReport r;
  r.participant = participant;
  r.key = kKey;
  r.workload = workload;
  r.reactions = std::move(reactions);
  r.candidate = std::move(candidate);
  return r;
}

ScenarioTable seeded(const std::vector<std::string>& texts) {
  ScenarioTable t{kKey, {}};
  for (const auto& text : texts) t.solutions.push_back({solution_uid_for(kKey, text), text, 0, 0, 1.0, 1.0, {}});
  recompute_counters(t);
  return t;
}

const SolutionRecord& by_text(const ScenarioTable& t, const std::string& text) {
  for (const auto& s : t.solutions) {
    if (s.assignment_text == text) return s;
  }
  throw std::runtime_error("no solution " + text);
}

class FailingTransport : public CrowdTransport {
 public:
  std::vector<SolutionRecord> top(const ScenarioKey&, std::size_t) override { throw EnvironmentError("offline"); }
  std::optional<SolutionRecord> solution(const std::string&) override { throw EnvironmentError("offline"); }
  MergeOutcome submit(const SubmitReport&) override { throw EnvironmentError("offline"); }
};

}  // namespace

TEST(Merge, CandidateIntoEmptyTable) {
  ScenarioTable t{kKey, {}};
  auto out = server_merge(t, report("alice", "w", {}, Candidate{"-O3 -flto", 1.3}));
  ASSERT_TRUE(out.admitted_uid);
  ASSERT_EQ(t.solutions.size(), 1u);
  const auto& s = t.solutions[0];
  EXPECT_EQ(s.solution_uid, *out.admitted_uid);
  EXPECT_EQ(s.solution_uid, solution_uid_for(kKey, "-O3 -flto"));
  EXPECT_TRUE(is_uid(s.solution_uid));
  EXPECT_EQ(s.best_species, 1);
  EXPECT_EQ(s.worst_species, 0);
  EXPECT_DOUBLE_EQ(s.reactions.at("w").ratio, 1.3);
  EXPECT_EQ(s.reactions.at("w").samples, 1);
}

TEST(Merge, CandidateMustBeatEverySharedReaction) {
  auto t = seeded({"-O3 -flto"});
  auto uid = t.solutions[0].solution_uid;
  auto r = report("bob", "w", {{uid, 1.3}}, Candidate{"-O3 -fno-ivopts", 1.32});
  EXPECT_FALSE(candidate_admissible(r));
  EXPECT_FALSE(server_merge(t, r).admitted_uid);
  EXPECT_EQ(t.solutions.size(), 1u);
  r.candidate->improvement = 1.5;
  EXPECT_TRUE(server_merge(t, r).admitted_uid);
  EXPECT_EQ(t.solutions.size(), 2u);
  EXPECT_FALSE(candidate_admissible(report("c", "w", {}, Candidate{"-O2", 1.04})));
}

TEST(Merge, SameReportTwiceIsIdempotent) {
  auto t = seeded({"-O3 -flto", "-O3 -fno-ivopts"});
  auto a = t.solutions[0].solution_uid, b = t.solutions[1].solution_uid;
  auto r = report("alice", "w1", {{a, 1.2}, {b, 0.9}}, Candidate{"-O2 -flto", 1.5});
  server_merge(t, r);
  auto once = to_json(t).dump();
  server_merge(t, r);
  EXPECT_EQ(to_json(t).dump(), once);
}

TEST(Merge, MaxMergeAndContributorCount) {
  auto t = seeded({"-O3 -flto"});
  auto uid = t.solutions[0].solution_uid;
  server_merge(t, report("alice", "w", {{uid, 1.1}}));
  server_merge(t, report("bob", "w", {{uid, 1.4}}));
  server_merge(t, report("carol", "w", {{uid, 1.2}}));
  const auto& r = t.solutions[0].reactions.at("w");
  EXPECT_DOUBLE_EQ(r.ratio, 1.4);
  EXPECT_EQ(r.samples, 3);
  server_merge(t, report("bob", "w", {{uid, 1.0}}));
  EXPECT_EQ(t.solutions[0].reactions.at("w").samples, 3);
}

TEST(Merge, UnknownSolutionsIgnoredAndKeyChecked) {
  auto t = seeded({"-O3"});
  auto out = server_merge(t, report("a", "w", {{"ffffffffffffffff", 2.0}}));
  EXPECT_EQ(out.ignored, std::vector<std::string>{"ffffffffffffffff"});
  EXPECT_TRUE(t.solutions[0].reactions.empty());
  auto other = report("a", "w", {});
  other.key.compiler = "gcc 7.1.0";
  EXPECT_THROW(server_merge(t, other), ContractError);
  EXPECT_THROW(server_merge(t, report("a", "w", {{t.solutions[0].solution_uid, 0.0}})), ContractError);
  EXPECT_THROW(server_merge(t, report("a", "", {})), ContractError);
}

TEST(Merge, SnapshotRowFromNineWorkloads) {
  const std::string lto = "-O3 -flto", other = "-O3 -fno-inline-small-functions -fno-ivopts -fno-tree-partial-pre";
  auto t = seeded({lto, other});
  auto a = solution_uid_for(kKey, lto), b = solution_uid_for(kKey, other);
  for (int i = 0; i < 6; ++i) server_merge(t, report("p" + std::to_string(i), "good" + std::to_string(i), {{a, 1.3}, {b, 1.1}}));
  for (int i = 0; i < 3; ++i) server_merge(t, report("q" + std::to_string(i), "bad" + std::to_string(i), {{a, 0.8}, {b, 1.0}}));
  const auto& s = by_text(t, lto);
  EXPECT_EQ(s.best_species, 6);
  EXPECT_EQ(s.worst_species, 3);
  EXPECT_DOUBLE_EQ(s.highest_improvement, 1.3);
  EXPECT_DOUBLE_EQ(s.worst_degradation, 0.8);
  EXPECT_EQ(by_text(t, other).best_species, 0);
  EXPECT_EQ(t.solutions.front().assignment_text, lto);
}

TEST(Merge, TiesGoToLowestUid) {
  auto t = seeded({"-O3 -flto", "-O2 -flto"});
  auto a = t.solutions[0].solution_uid, b = t.solutions[1].solution_uid;
  server_merge(t, report("p", "w", {{a, 1.2}, {b, 1.2}}));
  auto low = std::min(a, b);
  for (const auto& s : t.solutions) EXPECT_EQ(s.best_species, s.solution_uid == low ? 1 : 0);
}

TEST(Top, FirstNByBestThenImprovement) {
  std::vector<std::string> texts;
  for (int i = 0; i < 23; ++i) texts.push_back("-O3 --param max-unroll-times=" + std::to_string(i));
  auto t = seeded(texts);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> ratio(0.7, 1.6);
  for (int w = 0; w < 15; ++w) {
    std::map<std::string, double> reactions;
    for (const auto& s : t.solutions) reactions[s.solution_uid] = ratio(rng);
    server_merge(t, report("p", "w" + std::to_string(w), reactions));
  }
  auto expected = t.solutions;
  std::sort(expected.begin(), expected.end(), [](const SolutionRecord& a, const SolutionRecord& b) {
    return std::tuple(-a.best_species, -a.highest_improvement, a.solution_uid) <
           std::tuple(-b.best_species, -b.highest_improvement, b.solution_uid);
  });
  expected.resize(10);
  EXPECT_EQ(top_solutions(t, 10), expected);
  EXPECT_EQ(top_solutions(t, 100).size(), 23u);
}

TEST(MergeProperty, OrderInsensitiveAndConserving) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> ratio(0.6, 1.5);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::string> texts = {"-O3 -flto", "-O2", "-Os -fno-ivopts", "-O3 -funroll-loops"};
    auto base = seeded(texts);
    std::vector<SubmitReport> reports;
    for (int i = 0; i < 30; ++i) {
      std::map<std::string, double> reactions;
      for (const auto& s : base.solutions) {
        if (rng() % 3) reactions[s.solution_uid] = ratio(rng);
      }
      std::optional<Candidate> cand;
      if (rng() % 4 == 0) cand = Candidate{"-O1 -fcand" + std::to_string(rng() % 3), 1.0 + ratio(rng)};
      reports.push_back(report("p" + std::to_string(rng() % 5), "w" + std::to_string(rng() % 7), reactions, cand));
    }
    std::string reference;
    for (int order = 0; order < 5; ++order) {
      auto t = base;
      std::shuffle(reports.begin(), reports.end(), rng);
      for (const auto& r : reports) server_merge(t, r);
      auto dump = to_json(t).dump();
      if (order == 0) reference = dump;
      ASSERT_EQ(dump, reference) << trial;

      std::set<std::string> improved, degraded;
      for (const auto& s : t.solutions) {
        for (const auto& [w, r] : s.reactions) {
          if (r.ratio > 1.05) improved.insert(w);
          if (r.ratio < 0.95) degraded.insert(w);
        }
      }
      int best = 0, worst = 0;
      for (const auto& s : t.solutions) {
        best += s.best_species;
        worst += s.worst_species;
      }
      EXPECT_LE(best, static_cast<int>(improved.size()));
      EXPECT_LE(worst, static_cast<int>(degraded.size()));
    }
  }
}

TEST(Classify, DominantSolutionAndPruning) {
  auto t = seeded({"-O3 -flto", "-O2", "-O1"});
  auto dom = solution_uid_for(kKey, "-O3 -flto"), meh = solution_uid_for(kKey, "-O2"),
       bad = solution_uid_for(kKey, "-O1");
  for (int w = 0; w < 6; ++w) {
    server_merge(t, report("p", "w" + std::to_string(w), {{dom, 1.5}, {meh, 1.02}, {bad, w == 0 ? 0.5 : 1.0}}));
  }
  classify_online(t);
  EXPECT_EQ(by_text(t, "-O3 -flto").best_species, 6);
  EXPECT_EQ(by_text(t, "-O1").worst_species, 1);
  ASSERT_EQ(t.solutions.size(), 2u);
  for (const auto& s : t.solutions) EXPECT_NE(s.assignment_text, "-O2");
}

TEST(CrowdJson, RoundTrips) {
  auto t = seeded({"-O3 -flto", "-O2"});
  server_merge(t, report("alice", "w", {{t.solutions[0].solution_uid, 1.2}}, Candidate{"-Os", 1.6}));
  EXPECT_EQ(table_from_json(to_json(t)), t);
  auto r = report("a", "w", {{"0123456789abcdef", 1.1}}, Candidate{"-O3", 1.3});
  auto back = report_from_json(to_json(r));
  EXPECT_EQ(back.reactions, r.reactions);
  EXPECT_EQ(back.candidate->assignment_text, "-O3");
  EXPECT_THROW(report_from_json(Json{{"workload", "w"}}), ContractError);
  EXPECT_THROW(table_from_json(Json{{"solutions", 3}}), ContractError);
}

TEST(Server, PersistsAndReloads) {
  fftest::TempDir dir;
  std::string uid;
  {
    CrowdServer server(dir.path());
    uid = server.seed_solution(kKey, "-O3 -flto");
    server.submit(report("alice", "w", {{uid, 1.25}}));
  }
  CrowdServer reopened(dir.path());
  auto top = reopened.top(kKey, 5);
  ASSERT_EQ(top.size(), 1u);
  EXPECT_DOUBLE_EQ(top[0].reactions.at("w").ratio, 1.25);
  auto found = reopened.solution(uid);
  ASSERT_TRUE(found);
  EXPECT_EQ(found->first, kKey);
  EXPECT_FALSE(reopened.solution("0000000000000000"));
  EXPECT_TRUE(reopened.top(ScenarioKey{"x", "y", "z"}, 3).empty());

  CrowdServer strict(std::nullopt, false);
  EXPECT_THROW(strict.submit(report("a", "w", {})), ContractError);
}

TEST(Server, ConcurrentSubmissionsSerialize) {
  CrowdServer server;
  auto uid = server.seed_solution(kKey, "-O3 -flto");
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&, t] {
      for (int i = 0; i < 25; ++i) {
        server.submit(report("p" + std::to_string(t), "w" + std::to_string(i), {{uid, 1.0 + 0.01 * t}}));
      }
    });
  }
  for (auto& th : threads) th.join();
  auto table = *server.table(kKey);
  ASSERT_EQ(table.solutions[0].reactions.size(), 25u);
  for (const auto& [w, r] : table.solutions[0].reactions) {
    EXPECT_EQ(r.samples, 4);
    EXPECT_DOUBLE_EQ(r.ratio, 1.03);
  }
}

namespace {

struct ClientFixture {
  fftest::Sandbox box;
  FlagSpace space = fftest::boolean_space(6);
  ClientFixture() {
    SyntheticSpec spec;
    spec.base_time = 10;
    spec.flag_effects["-ff0"].time_multiplier = 0.5;
    spec.flag_effects["-ff1"].time_multiplier = 0.9;
    box.registry.register_workload(fftest::synthetic_workload("syn", spec));
  }
  CrowdTuneOptions options(int extra) {
    CrowdTuneOptions o;
    o.workload = "syn";
    o.key = kKey;
    o.extra_random = extra;
    o.repetitions = 2;
    o.participant = "tester";
    o.sampling.include_probability = 0.5;
    o.sampling.seed = 3;
    return o;
  }
};

}  // namespace

TEST(Client, BaselineEquivalentSolutionGivesUnitReaction) {
  ClientFixture f;
  CrowdServer server;
  auto uid = server.seed_solution(kKey, "-O3");
  LocalTransport transport(server);
  CrowdClient client(f.box.registry, f.box.store, f.box.pipeline, transport, f.box.dir / "queue");
  auto result = client.crowdtune(f.options(0), f.space, f.box.env);
  EXPECT_TRUE(result.submitted);
  ASSERT_EQ(result.report.reactions.size(), 1u);
  EXPECT_DOUBLE_EQ(result.report.reactions.at(uid), 1.0);
  EXPECT_FALSE(result.report.candidate);
  auto points = f.box.store.load_points(result.entry_uid);
  ASSERT_EQ(points.size(), 2u);
  EXPECT_EQ(points[0].tag, "baseline");
  EXPECT_EQ(points[1].tag, "solution:" + uid);
}

TEST(Client, RandomSearchProposesCandidate) {
  ClientFixture f;
  CrowdServer server;
  LocalTransport transport(server);
  CrowdClient client(f.box.registry, f.box.store, f.box.pipeline, transport, f.box.dir / "queue");
  auto result = client.crowdtune(f.options(20), f.space, f.box.env);
  ASSERT_TRUE(result.report.candidate);
  EXPECT_NE(result.report.candidate->assignment_text.find("-ff0"), std::string::npos);
  EXPECT_GE(result.report.candidate->improvement, 2.0);
  auto top = server.top(kKey, 1);
  ASSERT_EQ(top.size(), 1u);
  EXPECT_EQ(top[0].assignment_text, result.report.candidate->assignment_text);
}

TEST(Client, OfflineQueuesThenFlushes) {
  ClientFixture f;
  CrowdServer server;
  server.seed_solution(kKey, "-O3 -ff0");
  auto queue = f.box.dir / "queue";
  {
    LocalTransport online(server);
    CrowdClient client(f.box.registry, f.box.store, f.box.pipeline, online, queue);
    client.crowdtune(f.options(0), f.space, f.box.env);  // caches the shared list
  }
  FailingTransport offline;
  CrowdClient offline_client(f.box.registry, f.box.store, f.box.pipeline, offline, queue);
  auto result = offline_client.crowdtune(f.options(0), f.space, f.box.env);
  EXPECT_FALSE(result.submitted);
  ASSERT_TRUE(result.queued_file);
  EXPECT_TRUE(fftest::fs::exists(*result.queued_file));
  EXPECT_EQ(result.report.reactions.size(), 1u);
  EXPECT_EQ(offline_client.flush_queue(), 0);

  LocalTransport online(server);
  CrowdClient client(f.box.registry, f.box.store, f.box.pipeline, online, queue);
  EXPECT_EQ(client.flush_queue(), 1);
  EXPECT_FALSE(fftest::fs::exists(*result.queued_file));

  fftest::TempDir empty;
  CrowdClient no_cache(f.box.registry, f.box.store, f.box.pipeline, offline, empty.path());
  EXPECT_THROW(no_cache.crowdtune(f.options(0), f.space, f.box.env), EnvironmentError);
}
