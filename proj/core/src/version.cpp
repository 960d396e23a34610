#include "flagforge/version.hpp"

#include <algorithm>
#include <charconv>

#include "flagforge/error.hpp"

namespace flagforge {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\n')) s.remove_suffix(1);
  return s;
}

}  // namespace

Version Version::parse(std::string_view text) {
  text = trim(text);
  if (text.empty()) throw ContractError("empty version");
  Version v;
  while (!text.empty()) {
    auto dot = text.find('.');
    auto part = text.substr(0, dot);
    int value = 0;
    auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), value);
    if (ec != std::errc() || ptr != part.data() + part.size()) {
      throw ContractError("bad version '" + std::string(text) + "'");
    }
    v.parts_.push_back(value);
    if (dot == std::string_view::npos) break;
    text.remove_prefix(dot + 1);
  }
  return v;
}

std::string Version::str() const {
  std::string out;
  for (std::size_t i = 0; i < parts_.size(); ++i) {
    if (i) out.push_back('.');
    out += std::to_string(parts_[i]);
  }
  return out;
}

std::strong_ordering Version::operator<=>(const Version& other) const {
  std::size_t n = std::max(parts_.size(), other.parts_.size());
  for (std::size_t i = 0; i < n; ++i) {
    int a = i < parts_.size() ? parts_[i] : 0;
    int b = i < other.parts_.size() ? other.parts_[i] : 0;
    if (auto c = a <=> b; c != 0) return c;
  }
  return std::strong_ordering::equal;
}

VersionRange VersionRange::parse(std::string_view text) {
  VersionRange range;
  range.text_ = std::string(trim(text));
  std::string_view rest = range.text_;
  if (rest.empty() || rest == "*") return range;
  while (!rest.empty()) {
    auto comma = rest.find(',');
    auto clause = trim(rest.substr(0, comma));
    rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
    if (clause.empty()) continue;
    Bound bound{Op::kEqual, {}};
    auto take = [&](std::string_view prefix, Op op) {
      if (clause.starts_with(prefix)) {
        bound.op = op;
        clause.remove_prefix(prefix.size());
        return true;
      }
      return false;
    };
    take(">=", Op::kGreaterEq) || take("≥", Op::kGreaterEq) || take("<=", Op::kLessEq) ||
        take("≤", Op::kLessEq) || take(">", Op::kGreater) || take("<", Op::kLess) || take("==", Op::kEqual) ||
        take("=", Op::kEqual);
    bound.version = Version::parse(clause);
    range.bounds_.push_back(std::move(bound));
  }
  return range;
}

bool VersionRange::contains(const Version& v) const {
  return std::all_of(bounds_.begin(), bounds_.end(), [&](const Bound& b) {
    switch (b.op) {
      case Op::kLess:
        return v < b.version;
      case Op::kLessEq:
        return v <= b.version;
      case Op::kGreater:
        return v > b.version;
      case Op::kGreaterEq:
        return v >= b.version;
      case Op::kEqual:
        return v == b.version;
    }
    return false;
  });
}

}  // namespace flagforge
