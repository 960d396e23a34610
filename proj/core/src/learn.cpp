#include "flagforge/learn.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <set>
#include <sstream>

#include "flagforge/error.hpp"

namespace flagforge {
namespace {

constexpr double kMinGain = 1e-12;

std::vector<FeatureId> effective_features(const ModelSpec& spec, const LabeledDataset& dataset) {
  return spec.feature_set.empty() ? all_features(dataset) : spec.feature_set;
}

// Feature matrix of the dataset over `features`; missing values read as 0.
std::vector<std::vector<double>> extract(const LabeledDataset& dataset, const std::vector<FeatureId>& features,
                                         std::vector<std::string>* warnings) {
  std::vector<std::vector<double>> rows;
  std::set<std::string> reported;
  for (const auto& item : dataset.items) {
    std::vector<double> row;
    for (const auto& f : features) {
      if (!item.features.has(f) && warnings && reported.insert(f.name()).second) {
        warnings->push_back("feature " + f.name() + " missing in " + item.features.workload + ", read as 0");
      }
      row.push_back(item.features.get_or(f, 0.0));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string majority(const std::vector<std::string>& labels, const std::vector<std::size_t>& idx) {
  std::map<std::string, std::size_t> counts;
  for (auto i : idx) ++counts[labels[i]];
  std::string best;
  std::size_t best_count = 0;
  for (const auto& [label, count] : counts) {  // map order: ties go to the lowest label
    if (count > best_count) {
      best = label;
      best_count = count;
    }
  }
  return best;
}

double gini(const std::vector<std::string>& labels, const std::vector<std::size_t>& idx) {
  if (idx.empty()) return 0.0;
  std::map<std::string, std::size_t> counts;
  for (auto i : idx) ++counts[labels[i]];
  double g = 1.0;
  for (const auto& [label, count] : counts) {
    double p = static_cast<double>(count) / static_cast<double>(idx.size());
    g -= p * p;
  }
  return g;
}

// Counts are indexed by label rank, so the sum runs in the same order as gini().
double gini_counts(const std::vector<std::size_t>& counts, double n) {
  double g = 1.0;
  for (auto c : counts) {
    if (c == 0) continue;
    double p = static_cast<double>(c) / n;
    g -= p * p;
  }
  return g;
}

struct TreeBuilder {
  const std::vector<std::vector<double>>& x;
  const std::vector<std::string>& labels;
  int max_depth;
  std::vector<TreeNode> nodes;
  std::vector<std::size_t> label_ids;
  std::size_t label_count = 0;

  TreeBuilder(const std::vector<std::vector<double>>& rows, const std::vector<std::string>& row_labels, int depth)
      : x(rows), labels(row_labels), max_depth(depth) {
    std::vector<std::string> sorted = labels;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    label_count = sorted.size();
    for (const auto& l : labels) {
      label_ids.push_back(static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), l) - sorted.begin()));
    }
  }

  int grow(const std::vector<std::size_t>& idx, int depth) {
    int id = static_cast<int>(nodes.size());
    nodes.push_back(TreeNode{-1, 0.0, -1, -1, majority(labels, idx), idx.size()});
    double parent = gini(labels, idx);
    if (parent == 0.0 || (max_depth > 0 && depth >= max_depth)) return id;

    int best_feature = -1;
    double best_threshold = 0.0;
    double best_gain = kMinGain;
    std::size_t features = x.empty() ? 0 : x.front().size();
    const double n = static_cast<double>(idx.size());
    std::vector<std::size_t> total(label_count, 0);
    for (auto i : idx) ++total[label_ids[i]];
    // one sort per feature, then sweep thresholds with running label counts
    std::vector<std::pair<double, std::size_t>> column(idx.size());
    std::vector<std::size_t> lcount(label_count), rcount(label_count);
    for (std::size_t f = 0; f < features; ++f) {
      for (std::size_t k = 0; k < idx.size(); ++k) column[k] = {x[idx[k]][f], label_ids[idx[k]]};
      std::sort(column.begin(), column.end());
      std::fill(lcount.begin(), lcount.end(), 0);
      rcount = total;
      for (std::size_t k = 0; k + 1 < column.size(); ++k) {
        ++lcount[column[k].second];
        --rcount[column[k].second];
        if (column[k].first == column[k + 1].first) continue;
        double threshold = column[k].first + (column[k + 1].first - column[k].first) / 2;
        double nl = static_cast<double>(k + 1), nr = n - nl;
        double weighted = nl / n * gini_counts(lcount, nl) + nr / n * gini_counts(rcount, nr);
        double gain = parent - weighted;
        if (gain > best_gain + kMinGain) {
          best_gain = gain;
          best_feature = static_cast<int>(f);
          best_threshold = threshold;
        }
      }
    }
    if (best_feature < 0) return id;
    std::vector<std::size_t> left;
    std::vector<std::size_t> right;
    for (auto i : idx) (x[i][static_cast<std::size_t>(best_feature)] <= best_threshold ? left : right).push_back(i);
    nodes[id].feature = best_feature;
    nodes[id].threshold = best_threshold;
    int l = grow(left, depth + 1);
    int r = grow(right, depth + 1);
    nodes[id].left = l;
    nodes[id].right = r;
    return id;
  }
};

std::string predict_knn(const NearestNeighborModel& m, const FeatureVector& v) {
  if (m.rows.empty()) throw ContractError("model has no training rows");
  std::vector<double> q;
  for (std::size_t f = 0; f < m.features.size(); ++f) q.push_back((v.get_or(m.features[f], 0.0) - m.means[f]) / m.scales[f]);
  std::size_t best = 0;
  double best_distance = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < m.rows.size(); ++i) {
    double d = 0.0;
    for (std::size_t f = 0; f < q.size(); ++f) d += (q[f] - m.rows[i][f]) * (q[f] - m.rows[i][f]);
    if (d < best_distance || (d == best_distance && m.labels[i] < m.labels[best])) {
      best = i;
      best_distance = d;
    }
  }
  return m.labels[best];
}

std::string predict_tree(const DecisionTreeModel& m, const FeatureVector& v) {
  if (m.nodes.empty()) throw ContractError("tree has no nodes");
  int n = 0;
  while (m.nodes[n].feature >= 0) {
    const auto& node = m.nodes[n];
    n = v.get_or(m.features[static_cast<std::size_t>(node.feature)], 0.0) <= node.threshold ? node.left : node.right;
  }
  return m.nodes[n].label;
}

std::vector<std::string> feature_names(const std::vector<FeatureId>& features) {
  std::vector<std::string> out;
  for (const auto& f : features) out.push_back(f.name());
  return out;
}

std::vector<FeatureId> parse_features(const Json& j) {
  std::vector<FeatureId> out;
  for (const auto& name : j) out.push_back(FeatureId::parse(name.get<std::string>()));
  return out;
}

}  // namespace

std::optional<double> ReactionMatrix::at(const std::string& row, const std::string& col) const {
  if (col == kBaselineLabel) return 1.0;
  auto it = cells.find({row, col});
  if (it == cells.end()) return std::nullopt;
  return it->second;
}

ReactionMatrix build_reaction_matrix(const ScenarioTable& table) {
  if (table.solutions.empty()) throw ContractError("scenario table is empty");
  ReactionMatrix m;
  std::set<std::string> rows;
  for (const auto& s : table.solutions) {
    m.cols.push_back(s.solution_uid);
    for (const auto& [workload, r] : s.reactions) {
      rows.insert(workload);
      if (r.ratio > 0) m.cells[{workload, s.solution_uid}] = r.ratio;
    }
  }
  m.rows.assign(rows.begin(), rows.end());
  return m;
}

ReactionMatrix build_reaction_matrix(const ExperimentStore& store, const std::vector<std::string>& entries,
                                     double threshold) {
  if (entries.empty()) throw ContractError("no experiment entries given");
  ReactionMatrix m;
  std::set<std::string> cols;
  for (const auto& ref : entries) {
    auto entry = store.load_entry(ref);
    auto points = store.load_points(entry.entry_uid);
    auto base = std::find_if(points.begin(), points.end(), [](const ExperimentPoint& p) {
      return p.tag == "baseline" && !p.failure && p.characteristics.contains(kExecutionTime);
    });
    if (base == points.end()) {
      m.warnings.push_back("entry " + entry.entry_uid + " (" + entry.workload + ") has no baseline; row dropped");
      continue;
    }
    if (std::find(m.rows.begin(), m.rows.end(), entry.workload) != m.rows.end()) {
      m.warnings.push_back("workload " + entry.workload + " appears in several entries; later cells win");
    } else {
      m.rows.push_back(entry.workload);
    }
    const auto& base_time = base->characteristics.at(kExecutionTime);
    for (const auto& p : points) {
      if (!p.tag.starts_with("solution:")) continue;
      auto uid = p.tag.substr(9);
      cols.insert(uid);
      auto t = p.characteristics.find(kExecutionTime);
      if (p.failure || t == p.characteristics.end()) continue;
      if (!compare(base_time, t->second, threshold).trustable) continue;
      m.cells[{entry.workload, uid}] = speedup_over_baseline(base_time, t->second);
    }
  }
  m.cols.assign(cols.begin(), cols.end());
  return m;
}

Labeling label_workloads(const ReactionMatrix& matrix, double margin) {
  if (matrix.rows.empty()) throw ContractError("reaction matrix is empty");
  std::vector<std::string> cols = matrix.cols;
  std::sort(cols.begin(), cols.end());
  Labeling out;
  for (const auto& row : matrix.rows) {
    std::optional<std::string> best;
    double best_ratio = 0.0;
    for (const auto& col : cols) {
      auto v = matrix.at(row, col);
      if (v && (!best || *v > best_ratio)) {
        best = col;
        best_ratio = *v;
      }
    }
    std::string label = best && best_ratio > 1.0 + margin ? *best : kBaselineLabel;
    out.labels[row] = label;
    out.groups[label].push_back(row);
  }
  return out;
}

FeatureVector normalize_features(FeatureVector v) {
  FeatureId count(FeatureId::kInstructionCount);
  if (!v.has(count)) throw ContractError("feature vector of " + v.workload + " lacks ft24");
  double total = v.values.at(count);
  v.degenerate = total == 0.0;
  for (int i = 1; i <= FeatureId::kMilepostCount; ++i) {
    FeatureId src(i);
    if (!v.has(src)) continue;
    v.values[FeatureId(FeatureId::kAdditionalLast + i)] = v.degenerate ? 0.0 : v.values.at(src) / total;
  }
  return v;
}

LabeledDataset make_dataset(const Labeling& labeling, const std::map<std::string, FeatureVector>& features) {
  LabeledDataset out;
  for (const auto& [workload, label] : labeling.labels) {
    auto it = features.find(workload);
    if (it == features.end()) throw ContractError("no features for workload " + workload);
    out.items.push_back({it->second, label});
  }
  return out;
}

Json to_json(const LabeledDataset& d) {
  Json items = Json::array();
  for (const auto& item : d.items) {
    Json features = Json::object();
    for (const auto& [id, value] : item.features.values) features[id.name()] = value;
    Json j{{"workload", item.features.workload}, {"label", item.label}, {"features", features}};
    if (item.features.degenerate) j["degenerate"] = true;
    items.push_back(j);
  }
  return Json{{"items", items}};
}

LabeledDataset labeled_dataset_from_json(const Json& j) {
  try {
    LabeledDataset d;
    for (const auto& item : j.at("items")) {
      LabeledItem li;
      li.features.workload = item.value("workload", std::string());
      li.features.degenerate = item.value("degenerate", false);
      for (const auto& [name, value] : item.at("features").items()) {
        double v = value.get<double>();
        if (!std::isfinite(v)) throw ContractError("non-finite feature " + name);
        li.features.values[FeatureId::parse(name)] = v;
      }
      li.label = item.at("label").get<std::string>();
      d.items.push_back(std::move(li));
    }
    return d;
  } catch (const Json::exception& e) {
    throw ContractError(std::string("malformed dataset: ") + e.what());
  }
}

Json to_json(const ModelSpec& spec) {
  return Json{{"kind", spec.kind == ModelKind::kNearestNeighbor ? "nearest_neighbor" : "decision_tree"},
              {"max_depth", spec.max_depth},
              {"features", feature_names(spec.feature_set)},
              {"seed", spec.seed}};
}

ModelSpec model_spec_from_json(const Json& j) {
  try {
    ModelSpec spec;
    auto kind = j.value("kind", std::string("nearest_neighbor"));
    if (kind == "decision_tree") spec.kind = ModelKind::kDecisionTree;
    else if (kind != "nearest_neighbor") throw ContractError("unknown model kind '" + kind + "'");
    spec.max_depth = j.value("max_depth", 0);
    if (spec.max_depth < 0) throw ContractError("max_depth must be >= 1, or 0 for unlimited");
    if (j.contains("features")) spec.feature_set = parse_features(j.at("features"));
    spec.seed = j.value("seed", std::uint64_t{0});
    return spec;
  } catch (const Json::exception& e) {
    throw ContractError(std::string("malformed model spec: ") + e.what());
  }
}

std::vector<FeatureId> all_features(const LabeledDataset& dataset) {
  std::set<FeatureId> ids;
  for (const auto& item : dataset.items) {
    for (const auto& [id, v] : item.features.values) ids.insert(id);
  }
  return {ids.begin(), ids.end()};
}

int DecisionTreeModel::depth() const {
  if (nodes.empty()) return 0;
  std::function<int(int)> walk = [&](int n) -> int {
    const auto& node = nodes[static_cast<std::size_t>(n)];
    if (node.feature < 0) return 0;
    return 1 + std::max(walk(node.left), walk(node.right));
  };
  return walk(0);
}

std::string DecisionTreeModel::rules() const {
  std::ostringstream out;
  std::function<void(int, std::vector<std::string>&)> walk = [&](int n, std::vector<std::string>& path) {
    const auto& node = nodes[static_cast<std::size_t>(n)];
    if (node.feature < 0) {
      std::string cond;
      for (std::size_t i = 0; i < path.size(); ++i) cond += (i ? " and " : "") + path[i];
      out << (cond.empty() ? "always" : cond) << " => " << node.label << " (" << node.samples << ")\n";
      return;
    }
    auto name = features[static_cast<std::size_t>(node.feature)].name();
    path.push_back(name + " <= " + format_double(node.threshold));
    walk(node.left, path);
    path.back() = name + " > " + format_double(node.threshold);
    walk(node.right, path);
    path.pop_back();
  };
  if (!nodes.empty()) {
    std::vector<std::string> path;
    walk(0, path);
  }
  return out.str();
}

TrainResult train_with_warnings(const ModelSpec& spec, const LabeledDataset& dataset) {
  if (dataset.items.empty()) throw ContractError("cannot train on an empty dataset");
  if (spec.max_depth < 0) throw ContractError("max_depth must be >= 1, or 0 for unlimited");
  TrainResult result;
  auto features = effective_features(spec, dataset);
  auto x = extract(dataset, features, &result.warnings);
  std::vector<std::string> labels;
  for (const auto& item : dataset.items) labels.push_back(item.label);

  if (spec.kind == ModelKind::kNearestNeighbor) {
    NearestNeighborModel m;
    m.features = features;
    auto n = static_cast<double>(x.size());
    for (std::size_t f = 0; f < features.size(); ++f) {
      double mean = 0.0;
      for (const auto& row : x) mean += row[f];
      mean /= n;
      double var = 0.0;
      for (const auto& row : x) var += (row[f] - mean) * (row[f] - mean);
      double sd = std::sqrt(var / n);
      m.means.push_back(mean);
      m.scales.push_back(sd > 0 ? sd : 1.0);
    }
    for (const auto& row : x) {
      std::vector<double> z;
      for (std::size_t f = 0; f < row.size(); ++f) z.push_back((row[f] - m.means[f]) / m.scales[f]);
      m.rows.push_back(std::move(z));
    }
    m.labels = labels;
    result.model = std::move(m);
    return result;
  }

  TreeBuilder builder(x, labels, spec.max_depth);
  std::vector<std::size_t> all(x.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  builder.grow(all, 0);
  result.model = DecisionTreeModel{features, std::move(builder.nodes)};
  return result;
}

Model train(const ModelSpec& spec, const LabeledDataset& dataset) { return train_with_warnings(spec, dataset).model; }

std::string predict(const Model& model, const FeatureVector& vector) {
  return std::visit(
      [&](const auto& m) -> std::string {
        if constexpr (std::is_same_v<std::decay_t<decltype(m)>, NearestNeighborModel>) return predict_knn(m, vector);
        else return predict_tree(m, vector);
      },
      model);
}

Json to_json(const Model& model) {
  if (const auto* knn = std::get_if<NearestNeighborModel>(&model)) {
    return Json{{"kind", "nearest_neighbor"}, {"features", feature_names(knn->features)},
                {"means", knn->means},        {"scales", knn->scales},
                {"rows", knn->rows},          {"labels", knn->labels}};
  }
  const auto& tree = std::get<DecisionTreeModel>(model);
  Json nodes = Json::array();
  for (const auto& n : tree.nodes) {
    nodes.push_back({{"feature", n.feature}, {"threshold", n.threshold}, {"left", n.left},
                     {"right", n.right},     {"label", n.label},         {"samples", n.samples}});
  }
  return Json{{"kind", "decision_tree"}, {"features", feature_names(tree.features)}, {"nodes", nodes}};
}

Model model_from_json(const Json& j) {
  try {
    auto kind = j.at("kind").get<std::string>();
    if (kind == "nearest_neighbor") {
      NearestNeighborModel m;
      m.features = parse_features(j.at("features"));
      m.means = j.at("means").get<std::vector<double>>();
      m.scales = j.at("scales").get<std::vector<double>>();
      m.rows = j.at("rows").get<std::vector<std::vector<double>>>();
      m.labels = j.at("labels").get<std::vector<std::string>>();
      if (m.means.size() != m.features.size() || m.scales.size() != m.features.size() || m.rows.size() != m.labels.size()) {
        throw ContractError("inconsistent nearest-neighbor model");
      }
      return m;
    }
    if (kind != "decision_tree") throw ContractError("unknown model kind '" + kind + "'");
    DecisionTreeModel m;
    m.features = parse_features(j.at("features"));
    for (const auto& n : j.at("nodes")) {
      m.nodes.push_back({n.at("feature").get<int>(), n.at("threshold").get<double>(), n.at("left").get<int>(),
                         n.at("right").get<int>(), n.at("label").get<std::string>(), n.at("samples").get<std::size_t>()});
    }
    auto count = static_cast<int>(m.nodes.size());
    for (const auto& n : m.nodes) {
      if (n.feature >= static_cast<int>(m.features.size()) ||
          (n.feature >= 0 && (n.left <= 0 || n.left >= count || n.right <= 0 || n.right >= count))) {
        throw ContractError("inconsistent decision tree");
      }
    }
    return m;
  } catch (const Json::exception& e) {
    throw ContractError(std::string("malformed model: ") + e.what());
  }
}

double accuracy(const Model& model, const LabeledDataset& dataset) {
  if (dataset.items.empty()) throw ContractError("accuracy of an empty dataset");
  std::size_t correct = 0;
  for (const auto& item : dataset.items) correct += predict(model, item.features) == item.label;
  return static_cast<double>(correct) / static_cast<double>(dataset.items.size());
}

double loo_cv(const ModelSpec& spec, const LabeledDataset& dataset) {
  if (dataset.items.size() < 2) throw ContractError("leave-one-out needs at least 2 items");
  auto features = effective_features(spec, dataset);
  ModelSpec fixed = spec;
  fixed.feature_set = features;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < dataset.items.size(); ++i) {
    LabeledDataset train_set;
    for (std::size_t j = 0; j < dataset.items.size(); ++j) {
      if (j != i) train_set.items.push_back(dataset.items[j]);
    }
    correct += predict(train(fixed, train_set), dataset.items[i].features) == dataset.items[i].label;
  }
  return static_cast<double>(correct) / static_cast<double>(dataset.items.size());
}

DepthTuning autotune_depth(const LabeledDataset& dataset, const std::vector<int>& depths,
                           const std::vector<FeatureId>& features) {
  if (depths.empty()) throw ContractError("no depths to evaluate");
  DepthTuning out;
  for (int d : depths) {
    if (d < 0) throw ContractError("depth must be >= 1, or 0 for unlimited");
    ModelSpec spec{ModelKind::kDecisionTree, d, features, 0};
    out.curve.push_back({d, loo_cv(spec, dataset), accuracy(train(spec, dataset), dataset)});
  }
  // 0 stands for unlimited and ranks after every finite depth
  auto rank = [](int d) { return d == 0 ? std::numeric_limits<int>::max() : d; };
  double best_acc = -1.0;
  for (const auto& p : out.curve) best_acc = std::max(best_acc, p.cv_accuracy);
  bool found = false;
  for (const auto& p : out.curve) {
    if (p.cv_accuracy < best_acc - kMinGain) continue;
    if (!found || rank(p.depth) < rank(out.best_depth)) {
      out.best_depth = p.depth;
      found = true;
    }
  }
  return out;
}

FeatureReduction reduce_features(const ModelSpec& spec, const LabeledDataset& dataset, FeatureSearch mode) {
  auto pool = effective_features(spec, dataset);
  if (pool.empty()) throw ContractError("no features to reduce");
  std::sort(pool.begin(), pool.end());
  auto cv = [&](std::vector<FeatureId> set) {
    ModelSpec s = spec;
    s.feature_set = std::move(set);
    return loo_cv(s, dataset);
  };

  FeatureReduction out;
  if (mode == FeatureSearch::kGreedyRemove) {
    out.features = pool;
    out.accuracy = cv(pool);
    while (out.features.size() > 1) {
      std::optional<std::size_t> drop;
      double drop_acc = -1.0;
      for (std::size_t i = 0; i < out.features.size(); ++i) {
        auto trial = out.features;
        trial.erase(trial.begin() + static_cast<std::ptrdiff_t>(i));
        double acc = cv(trial);
        if (acc > drop_acc + kMinGain) {
          drop = i;
          drop_acc = acc;
        }
      }
      if (!drop || drop_acc < out.accuracy - kMinGain) break;
      out.features.erase(out.features.begin() + static_cast<std::ptrdiff_t>(*drop));
      out.accuracy = drop_acc;
    }
    return out;
  }

  out.accuracy = -1.0;
  std::vector<FeatureId> remaining = pool;
  while (!remaining.empty()) {
    std::optional<std::size_t> add;
    double add_acc = -1.0;
    for (std::size_t i = 0; i < remaining.size(); ++i) {
      auto trial = out.features;
      trial.push_back(remaining[i]);
      std::sort(trial.begin(), trial.end());
      double acc = cv(trial);
      if (acc > add_acc + kMinGain) {
        add = i;
        add_acc = acc;
      }
    }
    if (!add || add_acc <= out.accuracy + kMinGain) break;
    out.features.push_back(remaining[*add]);
    std::sort(out.features.begin(), out.features.end());
    out.accuracy = add_acc;
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(*add));
  }
  return out;
}

}  // namespace flagforge
