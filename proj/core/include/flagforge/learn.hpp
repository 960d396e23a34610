#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "flagforge/crowd.hpp"
#include "flagforge/experiment.hpp"
#include "flagforge/features.hpp"
#include "flagforge/util.hpp"

namespace flagforge {

inline constexpr const char* kBaselineLabel = "BASELINE";

/// Workload x solution improvement ratios over the baseline. The baseline
/// column is implicit and always 1.0; absent cells mean "not measured or
/// untrustable", never 1.0.
struct ReactionMatrix {
  std::vector<std::string> rows;
  std::vector<std::string> cols;
  std::map<std::pair<std::string, std::string>, double> cells;
  std::vector<std::string> warnings;

  std::optional<double> at(const std::string& row, const std::string& col) const;
};

ReactionMatrix build_reaction_matrix(const ScenarioTable& table);

/// From experiment entries: each entry contributes one row (its workload)
/// built from its "baseline" point and points tagged "solution:<uid>".
/// Entries without a baseline are dropped with a warning.
ReactionMatrix build_reaction_matrix(const ExperimentStore& store, const std::vector<std::string>& entries,
                                     double threshold = kDefaultTrustThreshold);

struct Labeling {
  std::map<std::string, std::string> labels;                // workload -> label
  std::map<std::string, std::vector<std::string>> groups;   // label -> workloads
};

/// argmax solution when its ratio exceeds 1 + margin, else BASELINE; ties
/// go to the lowest solution uid.
Labeling label_workloads(const ReactionMatrix& matrix, double margin = kClassificationMargin);

/// Adds ft66..ft121 = ft1..ft56 / ft24. ft24 == 0 sets them to 0 and marks
/// the vector degenerate.
FeatureVector normalize_features(FeatureVector vector);

struct LabeledItem {
  FeatureVector features;
  std::string label;
};

struct LabeledDataset {
  std::vector<LabeledItem> items;
};

LabeledDataset make_dataset(const Labeling& labeling, const std::map<std::string, FeatureVector>& features);

Json to_json(const LabeledDataset& dataset);
LabeledDataset labeled_dataset_from_json(const Json& doc);

enum class ModelKind { kNearestNeighbor, kDecisionTree };

struct ModelSpec {
  ModelKind kind = ModelKind::kNearestNeighbor;
  int max_depth = 0;  // decision tree; 0 means unlimited
  std::vector<FeatureId> feature_set;
  std::uint64_t seed = 0;
};

Json to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const Json& doc);

/// Every feature id present in any item, ascending.
std::vector<FeatureId> all_features(const LabeledDataset& dataset);

/// 1-NN over z-scored features.
struct NearestNeighborModel {
  std::vector<FeatureId> features;
  std::vector<double> means;
  std::vector<double> scales;
  std::vector<std::vector<double>> rows;
  std::vector<std::string> labels;
};

struct TreeNode {
  int feature = -1;  // index into the model's feature list; -1 for a leaf
  double threshold = 0.0;  // go left when value <= threshold
  int left = -1;
  int right = -1;
  std::string label;  // majority label at this node
  std::size_t samples = 0;
};

/// Greedy gini tree with midpoint thresholds. nodes[0] is the root.
struct DecisionTreeModel {
  std::vector<FeatureId> features;
  std::vector<TreeNode> nodes;

  int depth() const;
  /// One line per leaf: "ft22 > 1.5 and ft59 <= 3 => s1 (12)".
  std::string rules() const;
};

using Model = std::variant<NearestNeighborModel, DecisionTreeModel>;

struct TrainResult {
  Model model;
  std::vector<std::string> warnings;
};

TrainResult train_with_warnings(const ModelSpec& spec, const LabeledDataset& dataset);
Model train(const ModelSpec& spec, const LabeledDataset& dataset);
std::string predict(const Model& model, const FeatureVector& vector);

Json to_json(const Model& model);
Model model_from_json(const Json& doc);

double accuracy(const Model& model, const LabeledDataset& dataset);

/// Leave-one-out: train without item i, predict item i, count correct,
/// divide by the number of items.
double loo_cv(const ModelSpec& spec, const LabeledDataset& dataset);

struct DepthPoint {
  int depth = 0;
  double cv_accuracy = 0.0;
  double in_sample_accuracy = 0.0;
};

struct DepthTuning {
  int best_depth = 0;
  std::vector<DepthPoint> curve;
};

/// Best is the smallest depth reaching the maximum CV accuracy.
DepthTuning autotune_depth(const LabeledDataset& dataset, const std::vector<int>& depths,
                           const std::vector<FeatureId>& features = {});

enum class FeatureSearch { kGreedyRemove, kGreedyAdd };

struct FeatureReduction {
  std::vector<FeatureId> features;
  double accuracy = 0.0;
};

FeatureReduction reduce_features(const ModelSpec& spec, const LabeledDataset& dataset, FeatureSearch mode);

}  // namespace flagforge
