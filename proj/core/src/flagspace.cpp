#include "flagforge/flagspace.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <random>
#include <sstream>

#include "flagforge/error.hpp"

namespace flagforge {
namespace {

std::string replace_all(std::string text, std::string_view from, std::string_view to) {
  std::size_t pos = 0;
  while ((pos = text.find(from, pos)) != std::string::npos) {
    text.replace(pos, from.size(), to);
    pos += to.size();
  }
  return text;
}

std::string render_template(const std::string& tmpl, const std::string& name, const std::string& value) {
  return replace_all(replace_all(tmpl, "NAME", name), "VALUE", value);
}

FlagTag parse_tag(std::string_view text) {
  if (text == "base") return FlagTag::kBase;
  if (text == "cpu") return FlagTag::kCpu;
  if (text == "parametric") return FlagTag::kParametric;
  throw ContractError("unknown flag tag '" + std::string(text) + "'");
}

struct Token {
  std::string text;
  std::size_t offset;
};

std::vector<Token> tokenize(std::string_view command) {
  std::vector<Token> tokens;
  std::size_t i = 0;
  while (i < command.size()) {
    while (i < command.size() && std::isspace(static_cast<unsigned char>(command[i]))) ++i;
    if (i >= command.size()) break;
    std::size_t start = i;
    while (i < command.size() && !std::isspace(static_cast<unsigned char>(command[i]))) ++i;
    tokens.push_back({std::string(command.substr(start, i - start)), start});
  }
  return tokens;
}

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream ss(text);
  for (std::string word; ss >> word;) out.push_back(word);
  return out;
}

/// Matches a (possibly multi-word) template at tokens[i...]. On success sets
/// `value` to the text standing for VALUE and `consumed` to the word count.
bool match_template(const std::string& tmpl, const std::string& name, const std::vector<Token>& tokens, std::size_t i,
                    std::string& value, std::size_t& consumed) {
  auto words = split_words(replace_all(tmpl, "NAME", name));
  if (i + words.size() > tokens.size()) return false;
  bool has_value = false;
  for (std::size_t k = 0; k < words.size(); ++k) {
    const auto& word = words[k];
    const auto& tok = tokens[i + k].text;
    auto pos = word.find("VALUE");
    if (pos == std::string::npos) {
      if (word != tok) return false;
      continue;
    }
    auto prefix = word.substr(0, pos);
    auto suffix = word.substr(pos + 5);
    if (tok.size() <= prefix.size() + suffix.size() || !tok.starts_with(prefix) || !tok.ends_with(suffix)) {
      return false;
    }
    value = tok.substr(prefix.size(), tok.size() - prefix.size() - suffix.size());
    has_value = true;
  }
  consumed = words.size();
  return has_value;
}

std::optional<std::int64_t> parse_int(std::string_view text) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) return std::nullopt;
  return v;
}

class Sampler {
 public:
  explicit Sampler(std::uint64_t seed) : rng_(seed) {}
  double unit() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }
  std::int64_t between(std::int64_t lo, std::int64_t hi) {
    auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(span == 0 ? rng_() : rng_() % span);
  }

 private:
  std::mt19937_64 rng_;
};

}  // namespace

std::string_view to_string(FlagTag tag) {
  switch (tag) {
    case FlagTag::kBase:
      return "base";
    case FlagTag::kCpu:
      return "cpu";
    case FlagTag::kParametric:
      return "parametric";
  }
  return "";
}

FlagAssignment FlagAssignment::without(const std::string& flag) const {
  FlagAssignment copy = *this;
  copy.values.erase(flag);
  copy.env_values.erase(flag);
  return copy;
}

std::vector<std::string> FlagAssignment::flag_names() const {
  std::vector<std::string> names;
  for (const auto& [name, value] : values) names.push_back(name);
  return names;
}

FlagSpace::FlagSpace(std::string compiler_id, VersionRange versions, std::vector<std::string> base_levels,
                     std::vector<FlagDescriptor> descriptors)
    : compiler_id_(std::move(compiler_id)),
      versions_(std::move(versions)),
      base_levels_(std::move(base_levels)),
      descriptors_(std::move(descriptors)) {
  if (base_levels_.empty()) throw ContractError("flag space needs at least one base level");
  for (std::size_t i = 0; i < descriptors_.size(); ++i) {
    const auto& d = descriptors_[i];
    if (d.name.empty()) throw ContractError("flag descriptor without a name");
    if (!by_name_.emplace(d.name, i).second) throw ContractError("duplicate flag '" + d.name + "'");
    if (const auto* b = std::get_if<BooleanForms>(&d.kind); b && b->on_form == b->off_form) {
      throw ContractError("flag '" + d.name + "' has identical on and off forms");
    }
    if (const auto* p = std::get_if<ParametricForm>(&d.kind); p && p->min > p->max) {
      throw ContractError("flag '" + d.name + "' has min > max");
    }
    if (const auto* e = std::get_if<EnvParamForm>(&d.kind); e && e->min > e->max) {
      throw ContractError("flag '" + d.name + "' has min > max");
    }
    if (const auto* c = std::get_if<ChoiceForm>(&d.kind); c && c->values.empty()) {
      throw ContractError("choice flag '" + d.name + "' has no values");
    }
  }
}

const FlagDescriptor* FlagSpace::find(std::string_view name) const {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? nullptr : &descriptors_[it->second];
}

std::size_t FlagSpace::index_of(std::string_view name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw ContractError("unknown flag '" + std::string(name) + "'");
  return it->second;
}

bool FlagSpace::has_base_level(std::string_view level) const {
  return std::find(base_levels_.begin(), base_levels_.end(), level) != base_levels_.end();
}

std::size_t FlagSpace::boolean_count() const {
  return static_cast<std::size_t>(
      std::count_if(descriptors_.begin(), descriptors_.end(), [](const auto& d) { return d.is_boolean(); }));
}

void FlagSpace::validate(const FlagAssignment& a) const {
  if (!has_base_level(a.base_level)) throw ContractError("unknown base level '" + a.base_level + "'");
  for (const auto& [name, value] : a.values) {
    const auto* d = find(name);
    if (!d) throw ContractError("unknown flag '" + name + "'");
    if (d->is_boolean() && !std::holds_alternative<bool>(value)) {
      throw ContractError("flag '" + name + "' expects on/off");
    }
    if (const auto* p = std::get_if<ParametricForm>(&d->kind)) {
      const auto* v = std::get_if<std::int64_t>(&value);
      if (!v) throw ContractError("flag '" + name + "' expects an integer");
      if (*v < p->min || *v > p->max) throw ContractError("flag '" + name + "' value out of range");
    }
    if (const auto* c = std::get_if<ChoiceForm>(&d->kind)) {
      const auto* v = std::get_if<std::string>(&value);
      if (!v || std::find(c->values.begin(), c->values.end(), *v) == c->values.end()) {
        throw ContractError("flag '" + name + "' has an unknown choice");
      }
    }
    if (d->is_env()) throw ContractError("environment parameter '" + name + "' belongs in env_values");
  }
  for (const auto& [name, value] : a.env_values) {
    const auto* d = find(name);
    const auto* e = d ? std::get_if<EnvParamForm>(&d->kind) : nullptr;
    if (!e) throw ContractError("unknown environment parameter '" + name + "'");
    if (value < e->min || value > e->max) throw ContractError("parameter '" + name + "' value out of range");
  }
}

FlagSpace parse_flagspace(const Json& doc) {
  try {
    std::vector<FlagDescriptor> descriptors;
    for (const auto& f : doc.at("flags")) {
      FlagDescriptor d;
      d.name = f.at("name").get<std::string>();
      auto kind = f.value("kind", std::string("boolean"));
      if (kind == "boolean") {
        d.kind = BooleanForms{f.value("on", "-f" + d.name), f.value("off", "-fno-" + d.name)};
      } else if (kind == "parametric") {
        d.kind = ParametricForm{f.at("min").get<std::int64_t>(), f.at("max").get<std::int64_t>(),
                                f.value("template", std::string("--param NAME=VALUE"))};
        d.tags.insert(FlagTag::kParametric);
      } else if (kind == "choice") {
        d.kind = ChoiceForm{f.at("values").get<std::vector<std::string>>(),
                            f.value("template", "-f" + d.name + "=VALUE")};
      } else if (kind == "env") {
        d.kind = EnvParamForm{f.at("var").get<std::string>(), f.at("min").get<std::int64_t>(),
                              f.at("max").get<std::int64_t>()};
      } else {
        throw ContractError("unknown flag kind '" + kind + "' for " + d.name);
      }
      for (const auto& tag : f.value("tags", std::vector<std::string>{})) d.tags.insert(parse_tag(tag));
      d.versions = VersionRange::parse(f.value("versions", std::string("*")));
      descriptors.push_back(std::move(d));
    }
    return FlagSpace(doc.at("compiler").get<std::string>(),
                     VersionRange::parse(doc.value("versions", std::string("*"))),
                     doc.at("base_levels").get<std::vector<std::string>>(), std::move(descriptors));
  } catch (const Json::exception& e) {
    throw ContractError(std::string("malformed flag space description: ") + e.what());
  }
}

Json flagspace_to_json(const FlagSpace& space) {
  Json flags = Json::array();
  for (const auto& d : space.descriptors()) {
    Json f{{"name", d.name}};
    std::visit(
        [&](const auto& form) {
          using T = std::decay_t<decltype(form)>;
          if constexpr (std::is_same_v<T, BooleanForms>) {
            f["kind"] = "boolean";
            f["on"] = form.on_form;
            f["off"] = form.off_form;
          } else if constexpr (std::is_same_v<T, ParametricForm>) {
            f["kind"] = "parametric";
            f["min"] = form.min;
            f["max"] = form.max;
            f["template"] = form.render_template;
          } else if constexpr (std::is_same_v<T, ChoiceForm>) {
            f["kind"] = "choice";
            f["values"] = form.values;
            f["template"] = form.render_template;
          } else {
            f["kind"] = "env";
            f["var"] = form.variable;
            f["min"] = form.min;
            f["max"] = form.max;
          }
        },
        d.kind);
    if (!d.tags.empty()) {
      Json tags = Json::array();
      for (auto t : d.tags) tags.push_back(std::string(to_string(t)));
      f["tags"] = tags;
    }
    if (!d.versions.text().empty() && d.versions.text() != "*") f["versions"] = d.versions.text();
    flags.push_back(std::move(f));
  }
  return Json{{"compiler", space.compiler_id()},
              {"versions", space.versions().text().empty() ? "*" : space.versions().text()},
              {"base_levels", space.base_levels()},
              {"flags", flags}};
}

std::vector<std::filesystem::path> default_flagspace_dirs() {
  std::vector<std::filesystem::path> dirs;
  if (const char* extra = std::getenv("FLAGFORGE_FLAGSPACES"); extra && *extra) {
    std::string_view rest = extra;
    while (!rest.empty()) {
      auto colon = rest.find(':');
      if (auto part = rest.substr(0, colon); !part.empty()) dirs.emplace_back(part);
      if (colon == std::string_view::npos) break;
      rest.remove_prefix(colon + 1);
    }
  }
#ifdef FLAGFORGE_BUILD_DATA_DIR
  dirs.emplace_back(std::filesystem::path(FLAGFORGE_BUILD_DATA_DIR) / "flagspaces");
#endif
#ifdef FLAGFORGE_INSTALL_DATA_DIR
  dirs.emplace_back(std::filesystem::path(FLAGFORGE_INSTALL_DATA_DIR) / "flagspaces");
#endif
  return dirs;
}

FlagSpace load_flagspace(std::string_view compiler_id, std::string_view version,
                         const std::vector<std::filesystem::path>& search_dirs) {
  auto v = Version::parse(version);
  bool compiler_seen = false;
  for (const auto& dir : search_dirs) {
    if (!std::filesystem::is_directory(dir)) continue;
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
      if (e.path().extension() == ".json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& file : files) {
      auto space = parse_flagspace(read_json(file));
      if (space.compiler_id() != compiler_id) continue;
      compiler_seen = true;
      if (!space.versions().contains(v)) continue;
      std::vector<FlagDescriptor> kept;
      for (const auto& d : space.descriptors()) {
        if (d.versions.contains(v)) kept.push_back(d);
      }
      return FlagSpace(space.compiler_id(), space.versions(), space.base_levels(), std::move(kept));
    }
  }
  if (!compiler_seen) throw EnvironmentError("no flag space description for compiler '" + std::string(compiler_id) + "'");
  throw EnvironmentError("version " + std::string(version) + " of '" + std::string(compiler_id) +
                         "' is outside every described range");
}

FlagAssignment sample_random(const FlagSpace& space, const SamplingPolicy& policy) {
  if (!(policy.include_probability >= 0.0 && policy.include_probability <= 1.0)) {
    throw ContractError("include_probability must lie in [0, 1]");
  }
  Sampler rng(policy.seed);
  FlagAssignment a;
  const auto& levels = space.base_levels();
  if (policy.enable_base) {
    a.base_level = levels[static_cast<std::size_t>(rng.between(0, static_cast<std::int64_t>(levels.size()) - 1))];
  } else {
    a.base_level = space.has_base_level("-O3") ? "-O3" : levels.front();
  }
  for (const auto& d : space.descriptors()) {
    if (const auto* e = std::get_if<EnvParamForm>(&d.kind)) {
      a.env_values[d.name] = rng.between(e->min, e->max);
      continue;
    }
    bool eligible = (policy.enable_cpu || !d.has_tag(FlagTag::kCpu)) &&
                    (policy.enable_base || !d.has_tag(FlagTag::kBase)) &&
                    (policy.enable_parametric || !(d.is_parametric() || d.has_tag(FlagTag::kParametric)));
    if (!eligible) continue;
    // One draw per eligible flag keeps the stream aligned across policies.
    bool include = rng.unit() < policy.include_probability;
    if (!include) continue;
    std::visit(
        [&](const auto& form) {
          using T = std::decay_t<decltype(form)>;
          if constexpr (std::is_same_v<T, BooleanForms>) {
            a.values[d.name] = rng.unit() < 0.5;
          } else if constexpr (std::is_same_v<T, ParametricForm>) {
            a.values[d.name] = rng.between(form.min, form.max);
          } else if constexpr (std::is_same_v<T, ChoiceForm>) {
            auto idx = rng.between(0, static_cast<std::int64_t>(form.values.size()) - 1);
            a.values[d.name] = form.values[static_cast<std::size_t>(idx)];
          }
        },
        d.kind);
  }
  return a;
}

std::vector<std::string> render_tokens(const FlagAssignment& assignment, const FlagSpace& space) {
  for (const auto& [name, value] : assignment.values) {
    if (!space.find(name)) throw ContractError("unknown flag '" + name + "'");
  }
  std::vector<std::string> tokens;
  if (!assignment.base_level.empty()) tokens.push_back(assignment.base_level);
  for (const auto& d : space.descriptors()) {
    auto it = assignment.values.find(d.name);
    if (it == assignment.values.end()) continue;
    const auto& value = it->second;
    std::visit(
        [&](const auto& form) {
          using T = std::decay_t<decltype(form)>;
          if constexpr (std::is_same_v<T, BooleanForms>) {
            tokens.push_back(std::get<bool>(value) ? form.on_form : form.off_form);
          } else if constexpr (std::is_same_v<T, ParametricForm>) {
            tokens.push_back(render_template(form.render_template, d.name, std::to_string(std::get<std::int64_t>(value))));
          } else if constexpr (std::is_same_v<T, ChoiceForm>) {
            tokens.push_back(render_template(form.render_template, d.name, std::get<std::string>(value)));
          }
        },
        d.kind);
  }
  return tokens;
}

std::string render(const FlagAssignment& assignment, const FlagSpace& space) {
  std::string out;
  for (const auto& token : render_tokens(assignment, space)) {
    if (!out.empty()) out.push_back(' ');
    out += token;
  }
  return out;
}

FlagAssignment parse(std::string_view command, const FlagSpace& space) {
  auto tokens = tokenize(command);
  FlagAssignment a;
  a.base_level = space.base_levels().front();
  bool base_seen = false;
  std::size_t i = 0;
  while (i < tokens.size()) {
    const auto& tok = tokens[i].text;
    if (space.has_base_level(tok) && !tok.empty()) {
      if (base_seen) throw ContractError("more than one base level in '" + std::string(command) + "'");
      a.base_level = tok;
      base_seen = true;
      ++i;
      continue;
    }
    bool matched = false;
    for (const auto& d : space.descriptors()) {
      std::optional<FlagValue> value;
      std::size_t consumed = 1;
      if (const auto* b = std::get_if<BooleanForms>(&d.kind)) {
        if (tok == b->on_form) value = true;
        else if (tok == b->off_form) value = false;
      } else if (const auto* p = std::get_if<ParametricForm>(&d.kind)) {
        std::string text;
        if (match_template(p->render_template, d.name, tokens, i, text, consumed)) {
          auto v = parse_int(text);
          if (!v || *v < p->min || *v > p->max) throw FlagParseError(tok, i, tokens[i].offset);
          value = *v;
        }
      } else if (const auto* c = std::get_if<ChoiceForm>(&d.kind)) {
        std::string text;
        if (match_template(c->render_template, d.name, tokens, i, text, consumed)) {
          if (std::find(c->values.begin(), c->values.end(), text) == c->values.end()) {
            throw FlagParseError(tok, i, tokens[i].offset);
          }
          value = text;
        }
      }
      if (!value) continue;
      if (!a.values.emplace(d.name, *value).second) {
        throw ContractError("flag '" + d.name + "' given twice in '" + std::string(command) + "'");
      }
      i += consumed;
      matched = true;
      break;
    }
    if (!matched) throw FlagParseError(tok, i, tokens[i].offset);
  }
  return a;
}

std::map<std::string, std::string> render_env(const FlagAssignment& assignment, const FlagSpace& space) {
  std::map<std::string, std::string> env;
  for (const auto& [name, value] : assignment.env_values) {
    const auto* d = space.find(name);
    const auto* e = d ? std::get_if<EnvParamForm>(&d->kind) : nullptr;
    if (!e) throw ContractError("unknown environment parameter '" + name + "'");
    env[e->variable] = std::to_string(value);
  }
  return env;
}

Json assignment_to_json(const FlagAssignment& a) {
  Json values = Json::object();
  for (const auto& [name, value] : a.values) {
    std::visit([&](const auto& v) { values[name] = v; }, value);
  }
  return Json{{"base", a.base_level}, {"values", values}, {"env", a.env_values}};
}

FlagAssignment assignment_from_json(const Json& doc) {
  FlagAssignment a;
  a.base_level = doc.value("base", std::string());
  const Json values = doc.value("values", Json::object());
  for (const auto& [name, v] : values.items()) {
    if (v.is_boolean()) a.values[name] = v.get<bool>();
    else if (v.is_number_integer()) a.values[name] = v.get<std::int64_t>();
    else if (v.is_string()) a.values[name] = v.get<std::string>();
    else throw ContractError("bad value for flag '" + name + "'");
  }
  a.env_values = doc.value("env", std::map<std::string, std::int64_t>{});
  return a;
}

}  // namespace flagforge
