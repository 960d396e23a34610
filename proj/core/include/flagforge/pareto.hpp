#pragma once

#include <span>
#include <string>
#include <vector>

namespace flagforge {

struct FrontierPoint {
  std::string point_uid;
  std::vector<double> objectives;  // all minimized
  bool operator==(const FrontierPoint&) const = default;
};

/// p dominates q iff p <= q in every component and p < q in at least one.
bool dominates(std::span<const double> p, std::span<const double> q);

/// Exactly the non-dominated points; duplicates of a frontier vector are all
/// kept. Sorted by objectives lexicographically, then uid. Throws
/// ContractError on mixed dimensionality.
std::vector<FrontierPoint> pareto_filter(std::vector<FrontierPoint> points);

/// Incrementally maintained frontier. `insert` returns false when the point
/// is dominated, otherwise adds it and reports evicted uids.
class FrontierArchive {
 public:
  bool insert(const FrontierPoint& point, std::vector<std::string>* evicted = nullptr);
  const std::vector<FrontierPoint>& points() const noexcept { return points_; }

 private:
  std::vector<FrontierPoint> points_;
};

}  // namespace flagforge
