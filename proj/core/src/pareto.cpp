#include "flagforge/pareto.hpp"

#include <algorithm>

#include "flagforge/error.hpp"

namespace flagforge {

bool dominates(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw ContractError("objective vectors differ in dimension");
  bool strictly = false;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > q[i]) return false;
    if (p[i] < q[i]) strictly = true;
  }
  return strictly;
}

std::vector<FrontierPoint> pareto_filter(std::vector<FrontierPoint> points) {
  if (points.empty()) return points;
  auto dim = points.front().objectives.size();
  for (const auto& p : points) {
    if (p.objectives.size() != dim) throw ContractError("mixed objective dimensionality");
  }
  std::sort(points.begin(), points.end(), [](const FrontierPoint& a, const FrontierPoint& b) {
    if (a.objectives != b.objectives) return a.objectives < b.objectives;
    return a.point_uid < b.point_uid;
  });
  // after the lexicographic sort only earlier points can dominate later ones
  std::vector<FrontierPoint> out;
  for (auto& p : points) {
    bool dominated = std::any_of(out.begin(), out.end(),
                                 [&](const FrontierPoint& f) { return dominates(f.objectives, p.objectives); });
    if (!dominated) out.push_back(std::move(p));
  }
  return out;
}

bool FrontierArchive::insert(const FrontierPoint& point, std::vector<std::string>* evicted) {
  if (!points_.empty() && points_.front().objectives.size() != point.objectives.size()) {
    throw ContractError("mixed objective dimensionality");
  }
  for (const auto& f : points_) {
    if (dominates(f.objectives, point.objectives)) return false;
  }
  auto removed = std::stable_partition(points_.begin(), points_.end(), [&](const FrontierPoint& f) {
    return !dominates(point.objectives, f.objectives);
  });
  if (evicted) {
    for (auto it = removed; it != points_.end(); ++it) evicted->push_back(it->point_uid);
  }
  points_.erase(removed, points_.end());
  points_.push_back(point);
  return true;
}

}  // namespace flagforge
