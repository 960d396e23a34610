#include "flagforge/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "flagforge/error.hpp"

namespace flagforge {
namespace {

bool is_noisy(double min, double max, double threshold) { return (max - min) / min > threshold; }

int count_states(const std::vector<HistogramBin>& bins, double prominence) {
  std::size_t peak = 0;
  for (const auto& b : bins) peak = std::max(peak, b.count);
  if (peak == 0) return 1;
  int states = 0;
  std::size_t i = 0;
  while (i < bins.size()) {
    // a plateau of equal counts is one candidate
    std::size_t j = i;
    while (j + 1 < bins.size() && bins[j + 1].count == bins[i].count) ++j;
    std::size_t left = i == 0 ? 0 : bins[i - 1].count;
    std::size_t right = j + 1 == bins.size() ? 0 : bins[j + 1].count;
    std::size_t h = bins[i].count;
    if (h > left && h > right && static_cast<double>(h) >= prominence * static_cast<double>(peak)) ++states;
    i = j + 1;
  }
  return std::max(states, 1);
}

}  // namespace

CharacteristicStats summarize(std::span<const double> samples, const StatsConfig& config) {
  if (samples.empty()) throw ContractError("cannot summarize an empty sample");
  std::vector<double> sorted(samples.begin(), samples.end());
  for (double v : sorted) {
    if (!std::isfinite(v) || v <= 0) throw ContractError("samples must be positive and finite");
  }
  std::sort(sorted.begin(), sorted.end());

  CharacteristicStats s;
  s.n = sorted.size();
  s.min = sorted.front();
  s.max = sorted.back();
  s.mean = std::clamp(std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(s.n), s.min, s.max);

  auto bins = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(s.n)))));
  double width = (s.max - s.min) / static_cast<double>(bins);
  s.histogram.resize(bins);
  for (std::size_t b = 0; b < bins; ++b) {
    s.histogram[b].center = std::clamp(s.min + (static_cast<double>(b) + 0.5) * width, s.min, s.max);
  }
  for (double v : sorted) {
    std::size_t b = 0;
    if (s.max > s.min) {
      b = static_cast<std::size_t>((v - s.min) / (s.max - s.min) * static_cast<double>(bins));
      b = std::min(b, bins - 1);
    }
    ++s.histogram[b].count;
  }

  if (s.n < 3) {
    s.expected = s.min;
  } else {
    std::size_t best = 0;
    for (std::size_t b = 1; b < bins; ++b) {
      if (s.histogram[b].count > s.histogram[best].count) best = b;
    }
    s.expected = s.histogram[best].center;
  }
  s.state_count = count_states(s.histogram, config.state_prominence);
  s.noisy = is_noisy(s.min, s.max, config.trust_threshold);
  return s;
}

Comparison compare(const CharacteristicStats& base, const CharacteristicStats& candidate, double threshold) {
  if (!(candidate.min > 0) || !(candidate.expected > 0)) throw ContractError("candidate values must be positive");
  Comparison c;
  c.improvement_min = base.min / candidate.min;
  c.improvement_expected = base.expected / candidate.expected;
  double low = std::min(c.improvement_min, c.improvement_expected);
  c.max_difference = low > 0 ? std::abs(c.improvement_min - c.improvement_expected) / low : 0.0;
  c.trustable = c.max_difference <= threshold && !base.noisy && !candidate.noisy && base.state_count == 1 &&
                candidate.state_count == 1;
  return c;
}

double speedup_over_baseline(const CharacteristicStats& baseline, const CharacteristicStats& variant) {
  if (!(variant.expected > 0)) throw ContractError("variant expected value must be positive");
  return baseline.expected / variant.expected;
}

Json to_json(const CharacteristicStats& s) {
  Json hist = Json::array();
  for (const auto& b : s.histogram) hist.push_back(Json::array({b.center, b.count}));
  return Json{{"n", s.n},         {"min", s.min},           {"max", s.max},
              {"mean", s.mean},   {"expected", s.expected}, {"histogram", hist},
              {"state_count", s.state_count}, {"noisy", s.noisy}};
}

CharacteristicStats stats_from_json(const Json& j) {
  CharacteristicStats s;
  s.n = j.at("n").get<std::size_t>();
  s.min = j.at("min").get<double>();
  s.max = j.at("max").get<double>();
  s.mean = j.at("mean").get<double>();
  s.expected = j.at("expected").get<double>();
  for (const auto& b : j.value("histogram", Json::array())) {
    s.histogram.push_back({b.at(0).get<double>(), b.at(1).get<std::size_t>()});
  }
  s.state_count = j.value("state_count", 1);
  s.noisy = j.value("noisy", false);
  return s;
}

}  // namespace flagforge
