#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "flagforge/failure.hpp"
#include "flagforge/features.hpp"
#include "flagforge/util.hpp"

namespace flagforge {

enum class WorkloadKind { kReal, kSynthetic };

struct TunableParam {
  std::string name;
  std::int64_t min = 0;
  std::int64_t max = 0;
  std::string env_var;  // e.g. CT_BLOCK_SIZE
  bool operator==(const TunableParam&) const = default;
};

/// How produced output is checked against the reference.
///   digest  - exact MD5 of the bytes ("md5:<hex>"), or of a reference file
///   numeric - whitespace separated numbers, per-value relative tolerance
struct OutputReference {
  enum class Mode { kDigest, kNumeric };
  Mode mode = Mode::kDigest;
  std::string md5;                      // digest mode, when given inline
  std::optional<std::filesystem::path> file;
  double relative_tolerance = 1e-6;     // numeric mode
  bool operator==(const OutputReference&) const = default;
};

/// Applies `time_multiplier` only when the dataset parameter exceeds
/// `threshold`; otherwise `otherwise_multiplier`.
struct DatasetCondition {
  std::string param;
  double threshold = 0.0;
  double otherwise_multiplier = 1.0;
  bool operator==(const DatasetCondition&) const = default;
};

/// Effect of one rendered flag token on a synthetic workload. Keys match a
/// rendered token exactly ("-fno-ivopts", "-O3"), or, for "NAME=VALUE"
/// style tokens, the text before '=' ("--param max-unswitch-insns").
struct FlagEffect {
  double time_multiplier = 1.0;
  std::int64_t size_delta = 0;
  std::optional<std::string> md5_salt;        // defaults to the key itself
  std::optional<FailureKind> failure;
  std::optional<std::string> fixed_in;        // failure absent at compiler versions >= this
  std::optional<DatasetCondition> condition;
  bool operator==(const FlagEffect&) const = default;
};

struct NoiseModel {
  enum class Kind { kNone, kGaussian, kBimodal };
  Kind kind = Kind::kNone;
  double sigma = 0.0;        // gaussian, fraction of the time
  double offset = 0.0;       // bimodal, second mode at (1 + offset)
  double probability = 0.0;  // bimodal
  bool operator==(const NoiseModel&) const = default;
};

struct SyntheticSpec {
  std::map<std::string, FlagEffect> flag_effects;
  double base_time = 1.0;
  std::int64_t base_size = 1;
  NoiseModel noise;
  bool operator==(const SyntheticSpec&) const = default;
};

struct WorkloadMeta {
  std::string id;
  std::string title;
  WorkloadKind kind = WorkloadKind::kReal;
  std::string build_template;                          // {compiler} {flags} {src} {binary}
  std::map<std::string, std::string> run_commands;     // {binary} {dataset_file} {src} {workdir}
  std::map<std::string, OutputReference> reference_output;  // key "cmd" or "cmd@dataset"
  std::vector<std::string> dataset_tags;
  std::optional<std::filesystem::path> feature_file;
  std::vector<TunableParam> tunable_params;
  std::optional<SyntheticSpec> synthetic;
  std::optional<std::filesystem::path> source_dir;
  bool deterministic_build = false;
  bool operator==(const WorkloadMeta&) const = default;
};

struct DatasetMeta {
  std::string id;
  std::vector<std::string> tags;
  std::vector<std::filesystem::path> files;
  std::map<std::string, double> params;
  bool operator==(const DatasetMeta&) const = default;
};

Json to_json(const WorkloadMeta& meta);
WorkloadMeta workload_from_json(const Json& doc);
Json to_json(const DatasetMeta& meta);
DatasetMeta dataset_from_json(const Json& doc);
Json to_json(const SyntheticSpec& spec);
SyntheticSpec synthetic_from_json(const Json& doc);

/// Throws ContractError on invariant violations (unknown placeholder,
/// synthetic kind without spec, non-positive base values...).
void validate_workload(const WorkloadMeta& meta);

/// Workload and dataset entries under repo_root/{workload,dataset}/<id>/meta.json.
class WorkloadRegistry {
 public:
  explicit WorkloadRegistry(std::filesystem::path repo_root);

  const std::filesystem::path& root() const noexcept { return root_; }

  std::string register_workload(const WorkloadMeta& meta);
  std::string register_dataset(const DatasetMeta& meta);

  bool has_workload(const std::string& id) const;
  WorkloadMeta load_workload(const std::string& id) const;
  DatasetMeta load_dataset(const std::string& id) const;
  std::vector<std::string> list_workloads() const;
  std::vector<std::string> list_datasets() const;

  /// Datasets whose tags intersect the workload's dataset_tags and, when
  /// given, contain `tag_filter`. Sorted by id. File existence is checked.
  std::vector<DatasetMeta> resolve_datasets(const std::string& workload,
                                            const std::optional<std::string>& tag_filter = std::nullopt) const;

  FeatureVector load_feature_vector(const std::string& workload) const;

 private:
  std::filesystem::path entry_dir(const char* kind, const std::string& id) const;

  std::filesystem::path root_;
  mutable std::mutex mutex_;
};

}  // namespace flagforge
