#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "flagforge/util.hpp"

namespace flagforge {

inline constexpr double kDefaultTrustThreshold = 0.05;

struct StatsConfig {
  double trust_threshold = kDefaultTrustThreshold;
  /// A histogram peak counts as a separate state when its height is at
  /// least this fraction of the tallest peak.
  double state_prominence = 0.25;
};

struct HistogramBin {
  double center = 0.0;
  std::size_t count = 0;
  bool operator==(const HistogramBin&) const = default;
};

struct CharacteristicStats {
  std::size_t n = 0;
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
  double expected = 0.0;  // center of the most populated bin; min when n < 3
  std::vector<HistogramBin> histogram;
  int state_count = 1;
  bool noisy = false;
  bool operator==(const CharacteristicStats&) const = default;

  double spread() const { return max - min; }
};

struct Comparison {
  double improvement_min = 1.0;
  double improvement_expected = 1.0;
  double max_difference = 0.0;
  bool trustable = true;
};

/// Bins: max(1, ceil(sqrt(n))) equal-width bins over [min, max].
CharacteristicStats summarize(std::span<const double> samples, const StatsConfig& config = {});

/// Ratios base/candidate over min and expected values. Untrustable when the
/// two ratios disagree by more than `threshold`, when either side is noisy,
/// or when either side shows more than one state.
Comparison compare(const CharacteristicStats& base, const CharacteristicStats& candidate,
                   double threshold = kDefaultTrustThreshold);

/// baseline.expected / variant.expected.
double speedup_over_baseline(const CharacteristicStats& baseline, const CharacteristicStats& variant);

Json to_json(const CharacteristicStats& stats);
CharacteristicStats stats_from_json(const Json& doc);

}  // namespace flagforge
