#pragma once

#include <compare>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace flagforge {

/// Static program feature identifier ftN.
///   ft1..ft56    static program features
///   ft57..ft65   additional features, ingested opaquely
///   ft66..ft121  ft1..ft56 divided by the instruction count ft24
class FeatureId {
 public:
  static constexpr int kMilepostCount = 56;
  static constexpr int kAdditionalLast = 65;
  static constexpr int kLast = 121;
  static constexpr int kInstructionCount = 24;

  constexpr FeatureId() = default;
  explicit FeatureId(int index);

  /// Parses "ft17"; throws ContractError on anything else.
  static FeatureId parse(std::string_view text);

  int index() const noexcept { return index_; }
  std::string name() const;

  auto operator<=>(const FeatureId&) const = default;

 private:
  int index_ = 1;
};

struct FeatureVector {
  std::string workload;
  std::map<FeatureId, double> values;
  bool degenerate = false;  // normalization had ft24 == 0

  bool has(FeatureId id) const { return values.contains(id); }
  double get_or(FeatureId id, double fallback) const;
};

/// Reads a JSON mapping {"ft1": number, ...}. Missing keys stay absent.
FeatureVector read_feature_file(const std::filesystem::path& file, std::string workload);

}  // namespace flagforge
