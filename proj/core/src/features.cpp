#include "flagforge/features.hpp"

#include <charconv>
#include <cmath>

#include "flagforge/error.hpp"
#include "flagforge/util.hpp"

namespace flagforge {

FeatureId::FeatureId(int index) : index_(index) {
  if (index < 1 || index > kLast) throw ContractError("feature index out of range: " + std::to_string(index));
}

FeatureId FeatureId::parse(std::string_view text) {
  if (text.size() < 3 || text.substr(0, 2) != "ft") throw ContractError("bad feature id '" + std::string(text) + "'");
  int index = 0;
  auto digits = text.substr(2);
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), index);
  if (ec != std::errc() || ptr != digits.data() + digits.size()) {
    throw ContractError("bad feature id '" + std::string(text) + "'");
  }
  return FeatureId(index);
}

std::string FeatureId::name() const { return "ft" + std::to_string(index_); }

double FeatureVector::get_or(FeatureId id, double fallback) const {
  auto it = values.find(id);
  return it == values.end() ? fallback : it->second;
}

FeatureVector read_feature_file(const std::filesystem::path& file, std::string workload) {
  if (!std::filesystem::exists(file)) throw ContractError("missing feature file " + file.string());
  Json doc = read_json(file);
  if (!doc.is_object()) throw ContractError("feature file must be a JSON object: " + file.string());
  FeatureVector vector;
  vector.workload = std::move(workload);
  for (const auto& [key, value] : doc.items()) {
    auto id = FeatureId::parse(key);
    if (!value.is_number()) throw ContractError("malformed feature entry " + key + " in " + file.string());
    double v = value.get<double>();
    if (!std::isfinite(v)) throw ContractError("non-finite feature entry " + key);
    vector.values[id] = v;
  }
  return vector;
}

}  // namespace flagforge
