#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "flagforge/error.hpp"
#include "flagforge/learn.hpp"
#include "test_support.hpp"

using namespace flagforge;

namespace {

const ScenarioKey kKey{"time-size", "gcc 4.9.2", "rpi3|linux"};

LabeledItem item(std::string workload, std::map<int, double> values, std::string label) {
  LabeledItem it;
  it.features.workload = std::move(workload);
  for (auto [k, v] : values) it.features.values[FeatureId(k)] = v;
  it.label = std::move(label);
  return it;
}

FeatureVector vec(std::map<int, double> values) { return item("q", std::move(values), "").features; }

ModelSpec knn() { return ModelSpec{}; }
ModelSpec tree(int depth) { return ModelSpec{ModelKind::kDecisionTree, depth, {}, 0}; }

// Leave-one-out 1-NN written from the definition: z-score on the training
// fold only, euclidean distance, ties to the lowest label.
double oracle_loo_knn(const LabeledDataset& d, const std::vector<FeatureId>& features) {
  std::size_t correct = 0;
  for (std::size_t held = 0; held < d.items.size(); ++held) {
    std::vector<std::size_t> train;
    for (std::size_t j = 0; j < d.items.size(); ++j) {
      if (j != held) train.push_back(j);
    }
    std::vector<double> mean(features.size(), 0.0), sd(features.size(), 0.0);
    for (std::size_t f = 0; f < features.size(); ++f) {
      for (auto j : train) mean[f] += d.items[j].features.get_or(features[f], 0.0);
      mean[f] /= static_cast<double>(train.size());
      for (auto j : train) sd[f] += std::pow(d.items[j].features.get_or(features[f], 0.0) - mean[f], 2);
      sd[f] = std::sqrt(sd[f] / static_cast<double>(train.size()));
      if (sd[f] == 0) sd[f] = 1;
    }
    auto z = [&](const FeatureVector& v, std::size_t f) { return (v.get_or(features[f], 0.0) - mean[f]) / sd[f]; };
    double best = std::numeric_limits<double>::infinity();
    std::string label;
    for (auto j : train) {
      double dist = 0;
      for (std::size_t f = 0; f < features.size(); ++f) {
        dist += std::pow(z(d.items[held].features, f) - z(d.items[j].features, f), 2);
      }
      if (dist < best || (dist == best && d.items[j].label < label)) {
        best = dist;
        label = d.items[j].label;
      }
    }
    correct += label == d.items[held].label;
  }
  return static_cast<double>(correct) / static_cast<double>(d.items.size());
}

LabeledDataset random_dataset(std::mt19937_64& rng, std::size_t n, int features, int labels) {
  std::uniform_int_distribution<int> value(0, 9), label(0, labels - 1);
  LabeledDataset d;
  for (std::size_t i = 0; i < n; ++i) {
    std::map<int, double> v;
    for (int f = 1; f <= features; ++f) v[f] = value(rng);
    d.items.push_back(item("w" + std::to_string(i), v, "s" + std::to_string(label(rng))));
  }
  return d;
}

// a <= 5.5 -> A; else b <= 5.5 -> B; else c <= 5.5 -> C; else D
LabeledDataset depth_three_rule() {
  const double vals[] = {1, 2, 3, 7, 8, 9};
  LabeledDataset d;
  for (double a : vals) {
    for (double b : vals) {
      for (double c : vals) {
        std::string label = a <= 5.5 ? "A" : b <= 5.5 ? "B" : c <= 5.5 ? "C" : "D";
        d.items.push_back(item("w", {{1, a}, {2, b}, {3, c}}, label));
      }
    }
  }
  return d;
}

}  // namespace

TEST(ReactionMatrix, FromScenarioTable) {
  ScenarioTable one{kKey, {{"0000000000000001", "-O3 -flto", 0, 0, 1.3, 1.3, {{"w", Reaction{1.3, 1, {"a"}}}}}}};
  auto m = build_reaction_matrix(one);
  EXPECT_EQ(m.rows, std::vector<std::string>{"w"});
  EXPECT_EQ(m.cols, std::vector<std::string>{"0000000000000001"});
  EXPECT_DOUBLE_EQ(*m.at("w", "0000000000000001"), 1.3);
  EXPECT_DOUBLE_EQ(*m.at("w", kBaselineLabel), 1.0);

  ScenarioTable big{kKey, {}};
  for (int i = 0; i < 23; ++i) {
    SolutionRecord s{solution_uid_for(kKey, "-O3 -s" + std::to_string(i)), "-O3", 0, 0, 1, 1, {}};
    if (i % 2) s.reactions["w" + std::to_string(i % 5)] = Reaction{1.0 + i * 0.01, 1, {}};
    big.solutions.push_back(s);
  }
  auto bm = build_reaction_matrix(big);
  EXPECT_EQ(bm.cols.size(), 23u);
  EXPECT_FALSE(bm.at("w0", big.solutions[0].solution_uid));
  EXPECT_THROW(build_reaction_matrix(ScenarioTable{kKey, {}}), ContractError);
}

TEST(ReactionMatrix, FromStoreOmitsUntrustableCells) {
  fftest::Sandbox box;
  SyntheticSpec spec;
  spec.base_time = 10;
  spec.flag_effects["-ff0"].time_multiplier = 0.5;
  spec.flag_effects["-ff1"].time_multiplier = 0.8;
  box.registry.register_workload(fftest::synthetic_workload("w", spec));
  auto space = fftest::boolean_space(3);
  auto [entry, base_uid] = fftest::record_measured(box, "w", space, parse("-O3", space), 3);
  auto base = box.store.load_point(entry, base_uid);
  base.tag = "baseline";
  base.point_uid.clear();
  box.store.record_point(entry, base);
  box.store.remove_point(entry, base_uid);

  auto add = [&](const std::string& flags, const std::string& sol, std::vector<double> samples) {
    ExperimentPoint p;
    p.assignment = parse(flags, space);
    p.rendered = flags;
    p.tag = "solution:" + sol;
    p.characteristics[kExecutionTime] = summarize(samples);
    box.store.record_point(entry, p);
  };
  add("-O3 -ff0", "000000000000000a", {5.0, 5.0, 5.0});
  add("-O3 -ff1", "000000000000000b", {4.0, 8.0, 8.0});  // noisy
  ExperimentEntry empty;
  empty.workload = "nobase";
  auto orphan = box.store.create_entry(empty, space);

  auto m = build_reaction_matrix(box.store, {entry, orphan});
  EXPECT_EQ(m.rows, std::vector<std::string>{"w"});
  EXPECT_EQ(m.cols, (std::vector<std::string>{"000000000000000a", "000000000000000b"}));
  EXPECT_DOUBLE_EQ(*m.at("w", "000000000000000a"), 2.0);
  EXPECT_FALSE(m.at("w", "000000000000000b"));
  ASSERT_EQ(m.warnings.size(), 1u);
  EXPECT_NE(m.warnings[0].find("nobase"), std::string::npos);
}

TEST(Labels, ArgmaxMarginAndTies) {
  ReactionMatrix m;
  m.rows = {"a", "b", "c"};
  m.cols = {"s2", "s1"};
  m.cells = {{{"a", "s1"}, 1.3}, {{"a", "s2"}, 1.1}, {{"b", "s1"}, 1.04}, {{"b", "s2"}, 0.9},
             {{"c", "s1"}, 1.2}, {{"c", "s2"}, 1.2}};
  auto l = label_workloads(m);
  EXPECT_EQ(l.labels.at("a"), "s1");
  EXPECT_EQ(l.labels.at("b"), kBaselineLabel);
  EXPECT_EQ(l.labels.at("c"), "s1");
  EXPECT_EQ(l.groups.at("s1"), (std::vector<std::string>{"a", "c"}));
  EXPECT_THROW(label_workloads(ReactionMatrix{}), ContractError);
}

TEST(Labels, ElevenWorkloadsShareOneGroup) {
  ScenarioTable t{kKey, {}};
  auto shared = solution_uid_for(kKey, "-O3 -fno-inline -flto");
  auto other = solution_uid_for(kKey, "-O3 -funroll-loops");
  SolutionRecord a{shared, "-O3 -fno-inline -flto", 0, 0, 1, 1, {}};
  SolutionRecord b{other, "-O3 -funroll-loops", 0, 0, 1, 1, {}};
  for (int i = 0; i < 11; ++i) {
    a.reactions["w" + std::to_string(i)] = Reaction{1.2 + 0.01 * i, 1, {}};
    b.reactions["w" + std::to_string(i)] = Reaction{1.1, 1, {}};
  }
  b.reactions["x"] = Reaction{1.4, 1, {}};
  t.solutions = {a, b};
  auto l = label_workloads(build_reaction_matrix(t));
  EXPECT_EQ(l.groups.at(shared).size(), 11u);
  EXPECT_EQ(l.groups.at(other), std::vector<std::string>{"x"});
}

TEST(LabelsProperty, ArgmaxInvariantUnderRowScaling) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> ratio(0.5, 2.0), scale(0.1, 10.0);
  for (int trial = 0; trial < 100; ++trial) {
    ReactionMatrix m;
    m.rows = {"w"};
    for (int c = 0; c < 6; ++c) {
      auto col = "s" + std::to_string(c);
      m.cols.push_back(col);
      m.cells[{"w", col}] = ratio(rng);
    }
    // margin 0 isolates the argmax; with k large enough every ratio clears 1
    auto scaled = m;
    double k = scale(rng);
    for (auto& [key, v] : scaled.cells) v *= k;
    auto argmax = [](const ReactionMatrix& mm) {
      return std::max_element(mm.cells.begin(), mm.cells.end(),
                              [](const auto& a, const auto& b) { return a.second < b.second; })
          ->first.second;
    };
    EXPECT_EQ(argmax(scaled), argmax(m));
    auto big = m;
    for (auto& [key, v] : big.cells) v *= 10;
    auto bigger = big;
    for (auto& [key, v] : bigger.cells) v *= k;
    EXPECT_EQ(label_workloads(big, 0).labels.at("w"), label_workloads(bigger, 0).labels.at("w"));
  }
}

TEST(Normalize, RatioRuleAndDegenerate) {
  auto v = normalize_features(vec({{1, 100}, {5, 30}, {24, 60}}));
  EXPECT_DOUBLE_EQ(v.values.at(FeatureId(66)), 100.0 / 60.0);
  EXPECT_DOUBLE_EQ(v.values.at(FeatureId(70)), 0.5);
  EXPECT_DOUBLE_EQ(v.values.at(FeatureId(89)), 1.0);
  EXPECT_FALSE(v.has(FeatureId(67)));
  EXPECT_FALSE(v.degenerate);

  auto same = normalize_features(vec({{1, 100}, {24, 100}}));
  EXPECT_DOUBLE_EQ(same.values.at(FeatureId(66)), 1.0);

  auto zero = normalize_features(vec({{1, 7}, {24, 0}}));
  EXPECT_TRUE(zero.degenerate);
  EXPECT_DOUBLE_EQ(zero.values.at(FeatureId(66)), 0.0);
  EXPECT_DOUBLE_EQ(zero.values.at(FeatureId(89)), 0.0);
  EXPECT_THROW(normalize_features(vec({{1, 7}})), ContractError);
}

TEST(Train, SingleItemPredictsItsLabel) {
  LabeledDataset d{{item("w", {{1, 3}, {2, 4}}, "s1")}};
  for (const auto& spec : {knn(), tree(0), tree(2)}) {
    auto m = train(spec, d);
    EXPECT_EQ(predict(m, vec({{1, 100}, {2, -5}})), "s1");
    EXPECT_EQ(predict(m, vec({})), "s1");
  }
  EXPECT_THROW(train(knn(), LabeledDataset{}), ContractError);
}

TEST(Train, SeparableAtFiveWithDepthOne) {
  LabeledDataset d;
  for (int x = 0; x <= 10; ++x) {
    if (x == 5) continue;
    d.items.push_back(item("w" + std::to_string(x), {{1, double(x)}}, x < 5 ? "lo" : "hi"));
  }
  auto m = train(tree(1), d);
  EXPECT_DOUBLE_EQ(accuracy(m, d), 1.0);
  const auto& t = std::get<DecisionTreeModel>(m);
  EXPECT_EQ(t.depth(), 1);
  EXPECT_DOUBLE_EQ(t.nodes[0].threshold, 5.0);
  EXPECT_EQ(t.rules(), "ft1 <= 5 => lo (5)\nft1 > 5 => hi (5)\n");
}

TEST(Train, PlantedTwoFeatureRuleRecovered) {
  // label from binary integer operations (ft22) and distinct operators (ft59)
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> x(0, 100);
  auto rule = [](double a, double b) { return a > 40 ? (b > 60 ? "s2" : "s1") : kBaselineLabel; };
  LabeledDataset d;
  for (int i = 0; i < 200; ++i) {
    double a = x(rng), b = x(rng);
    d.items.push_back(item("w" + std::to_string(i), {{22, a}, {59, b}, {3, x(rng)}}, rule(a, b)));
  }
  auto m = train(tree(2), d);
  EXPECT_LE(std::get<DecisionTreeModel>(m).depth(), 2);
  EXPECT_DOUBLE_EQ(accuracy(m, d), 1.0);
  for (double a : {5.0, 30.0, 50.0, 95.0}) {
    for (double b : {10.0, 55.0, 65.0, 99.0}) EXPECT_EQ(predict(m, vec({{22, a}, {59, b}, {3, 50}})), rule(a, b));
  }
}

TEST(TrainProperty, DepthCapAndDeterminism) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 30; ++trial) {
    auto d = random_dataset(rng, 30, 4, 3);
    for (int depth : {1, 2, 3, 5}) {
      auto a = train(tree(depth), d);
      EXPECT_LE(std::get<DecisionTreeModel>(a).depth(), depth);
      auto b = train(tree(depth), d);
      EXPECT_EQ(to_json(a), to_json(b));
    }
  }
}

TEST(TrainProperty, NearestNeighborInvariantUnderAffineRescaling) {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> scale(0.1, 1000), shift(-500, 500);
  for (int trial = 0; trial < 30; ++trial) {
    auto d = random_dataset(rng, 15, 3, 3);
    int f = 1 + trial % 3;
    double k = scale(rng), c = shift(rng);
    auto scaled = d;
    for (auto& it : scaled.items) it.features.values[FeatureId(f)] = k * it.features.values[FeatureId(f)] + c;
    auto a = train(knn(), d), b = train(knn(), scaled);
    std::uniform_int_distribution<int> value(0, 9);
    for (int q = 0; q < 20; ++q) {
      std::map<int, double> v{{1, value(rng) + 0.3}, {2, value(rng) + 0.7}, {3, value(rng) + 0.1}};
      auto w = v;
      w[f] = k * w[f] + c;
      EXPECT_EQ(predict(a, vec(v)), predict(b, vec(w)));
    }
  }
}

TEST(Loo, DefinitionExamples) {
  LabeledDataset same{{item("a", {{1, 1}}, "s1"), item("b", {{1, 1}}, "s1"), item("c", {{1, 1}}, "s1")}};
  EXPECT_DOUBLE_EQ(loo_cv(knn(), same), 1.0);
  LabeledDataset two{{item("a", {{1, 1}}, "s1"), item("b", {{1, 2}}, "s2")}};
  EXPECT_DOUBLE_EQ(loo_cv(knn(), two), 0.0);
  LabeledDataset xo{{item("a", {{1, 0}, {2, 0}}, "s0"), item("b", {{1, 1}, {2, 1}}, "s0"),
                     item("c", {{1, 0}, {2, 1}}, "s1"), item("d", {{1, 1}, {2, 0}}, "s1")}};
  EXPECT_DOUBLE_EQ(loo_cv(knn(), xo), 0.0);
  EXPECT_THROW(loo_cv(knn(), LabeledDataset{{item("a", {{1, 1}}, "s1")}}), ContractError);
}

TEST(LooProperty, MatchesIndependentFoldEnumeration) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 60; ++trial) {
    auto d = random_dataset(rng, 2 + trial % 19, 1 + trial % 4, 2 + trial % 3);
    double got = loo_cv(knn(), d);
    EXPECT_GE(got, 0.0);
    EXPECT_LE(got, 1.0);
    EXPECT_DOUBLE_EQ(got, oracle_loo_knn(d, all_features(d))) << trial;
  }
}

TEST(AutotuneDepth, SeparableDataPicksDepthOne) {
  LabeledDataset d;
  for (int x = 0; x < 20; ++x) d.items.push_back(item("w", {{1, double(x)}, {2, double(x % 3)}}, x < 10 ? "a" : "b"));
  auto t = autotune_depth(d, {1, 2, 4, 0});
  EXPECT_EQ(t.best_depth, 1);
  EXPECT_EQ(t.curve.size(), 4u);
  EXPECT_THROW(autotune_depth(d, {}), ContractError);
}

TEST(AutotuneDepth, PlantedDepthThreeRule) {
  auto d = depth_three_rule();
  auto t = autotune_depth(d, {1, 2, 3, 4, 5, 0});
  EXPECT_EQ(t.best_depth, 3);
  double at3 = 0;
  for (const auto& p : t.curve) {
    if (p.depth == 3) at3 = p.cv_accuracy;
  }
  EXPECT_DOUBLE_EQ(at3, 1.0);
  for (const auto& p : t.curve) {
    if (p.depth == 1 || p.depth == 2) {
      EXPECT_LT(p.cv_accuracy, at3);
    }
    if (p.depth == 0 || p.depth > 3) {
      EXPECT_LE(p.cv_accuracy, at3);
    }
    if (p.depth == 0) {
      EXPECT_DOUBLE_EQ(p.in_sample_accuracy, 1.0);
    }
  }
}

TEST(ReduceFeatures, KeepsTheOnlyInformativeFeature) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> noise(0, 10);
  const double informative[] = {1, 2, 3, 4, 6, 7, 8, 9};
  LabeledDataset d;
  for (int i = 0; i < 24; ++i) {
    double x = informative[i % 8];
    d.items.push_back(item("w" + std::to_string(i), {{1, x}, {2, noise(rng)}, {3, noise(rng)}, {4, noise(rng)}},
                           x > 5 ? "hi" : "lo"));
  }
  auto full = loo_cv(knn(), d);
  auto removed = reduce_features(knn(), d, FeatureSearch::kGreedyRemove);
  auto added = reduce_features(knn(), d, FeatureSearch::kGreedyAdd);
  EXPECT_EQ(removed.features, std::vector<FeatureId>{FeatureId(1)});
  EXPECT_EQ(added.features, std::vector<FeatureId>{FeatureId(1)});
  EXPECT_GE(removed.accuracy, full);

  // brute force over every non-empty subset of the 4 features
  double best = 0;
  for (int mask = 1; mask < 16; ++mask) {
    std::vector<FeatureId> subset;
    for (int f = 0; f < 4; ++f) {
      if (mask & (1 << f)) subset.push_back(FeatureId(f + 1));
    }
    best = std::max(best, oracle_loo_knn(d, subset));
  }
  EXPECT_DOUBLE_EQ(removed.accuracy, best);
  EXPECT_DOUBLE_EQ(added.accuracy, best);
}

TEST(LearnJson, ModelsAndDatasetsRoundTrip) {
  auto d = depth_three_rule();
  for (const auto& spec : {knn(), tree(3)}) {
    auto m = train(spec, d);
    auto back = model_from_json(to_json(m));
    EXPECT_EQ(to_json(back), to_json(m));
    for (const auto& it : d.items) EXPECT_EQ(predict(back, it.features), predict(m, it.features));
  }
  auto dd = labeled_dataset_from_json(to_json(d));
  EXPECT_EQ(dd.items.size(), d.items.size());
  EXPECT_EQ(dd.items[5].label, d.items[5].label);
  EXPECT_THROW(model_from_json(Json{{"kind", "dnn"}}), ContractError);
  EXPECT_THROW(model_spec_from_json(Json{{"max_depth", -2}}), ContractError);
  auto spec = model_spec_from_json(to_json(ModelSpec{ModelKind::kDecisionTree, 4, {FeatureId(22)}, 1}));
  EXPECT_EQ(spec.max_depth, 4);
  EXPECT_EQ(spec.feature_set, std::vector<FeatureId>{FeatureId(22)});
}

TEST(Dataset, FromLabelsAndFeatures) {
  Labeling l;
  l.labels = {{"a", "s1"}, {"b", kBaselineLabel}};
  std::map<std::string, FeatureVector> f{{"a", vec({{1, 1}})}, {"b", vec({{1, 2}})}};
  auto d = make_dataset(l, f);
  ASSERT_EQ(d.items.size(), 2u);
  EXPECT_EQ(d.items[1].label, kBaselineLabel);
  f.erase("b");
  EXPECT_THROW(make_dataset(l, f), ContractError);
}
