#pragma once

#include <compare>
#include <string>
#include <string_view>
#include <vector>

namespace flagforge {

/// Dotted numeric version ("4.9.2"). Missing trailing components compare as 0.
class Version {
 public:
  Version() = default;
  static Version parse(std::string_view text);

  const std::vector<int>& parts() const noexcept { return parts_; }
  std::string str() const;

  std::strong_ordering operator<=>(const Version& other) const;
  bool operator==(const Version& other) const { return (*this <=> other) == 0; }

 private:
  std::vector<int> parts_;
};

/// Conjunction of comparisons, e.g. ">=4.6,<5". "*" or "" matches all.
/// "≥" and "≤" are accepted as aliases of ">=" and "<=".
class VersionRange {
 public:
  VersionRange() = default;
  static VersionRange parse(std::string_view text);

  bool contains(const Version& v) const;
  const std::string& text() const noexcept { return text_; }

 private:
  enum class Op { kLess, kLessEq, kGreater, kGreaterEq, kEqual };
  struct Bound {
    Op op;
    Version version;
  };
  std::string text_;
  std::vector<Bound> bounds_;
};

}  // namespace flagforge
