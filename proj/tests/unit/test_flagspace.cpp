#include <cmath>

#include <gtest/gtest.h>

#include "flagforge/error.hpp"
#include "flagforge/flagspace.hpp"
#include "test_support.hpp"

using namespace flagforge;

namespace {

const char* kA4R =
    "-O3 -fno-guess-branch-probability -fno-if-conversion -fno-ivopts -fno-schedule-insns "
    "-fsingle-precision-constant --param max-unswitch-insns=5";
const char* kA6R = "-O3 -fno-inline-small-functions -fno-ivopts -fno-tree-partial-pre";

FlagSpace gcc(const std::string& version) { return load_flagspace("gcc", version, default_flagspace_dirs()); }

}  // namespace

TEST(FlagSpaceLoad, Gcc492HasKnownFlags) {
  auto space = gcc("4.9.2");
  EXPECT_EQ(space.compiler_id(), "gcc");
  const auto* ivopts = space.find("ivopts");
  ASSERT_NE(ivopts, nullptr);
  ASSERT_TRUE(ivopts->is_boolean());
  EXPECT_EQ(std::get<BooleanForms>(ivopts->kind).off_form, "-fno-ivopts");
  const auto* unswitch = space.find("max-unswitch-insns");
  ASSERT_NE(unswitch, nullptr);
  EXPECT_TRUE(unswitch->is_parametric());
  EXPECT_TRUE(unswitch->has_tag(FlagTag::kParametric));
  EXPECT_TRUE(space.has_base_level("-O3"));
  EXPECT_TRUE(space.has_base_level("-Os"));
}

TEST(FlagSpaceLoad, ShippedSpacesMeetSizeFloor) {
  for (auto v : {"4.9.2", "7.1.0"}) {
    auto space = gcc(v);
    std::size_t parametric = 0;
    for (const auto& d : space.descriptors()) parametric += d.is_parametric();
    EXPECT_GE(space.boolean_count(), 100u) << v;
    EXPECT_GE(parametric, 20u) << v;
  }
}

TEST(FlagSpaceLoad, VersionOutsideRangesIsError) {
  EXPECT_THROW(gcc("2.95"), EnvironmentError);
  EXPECT_THROW(load_flagspace("icc", "19", default_flagspace_dirs()), EnvironmentError);
}

TEST(FlagSpaceLoad, PerFlagRangeFiltersDescriptors) {
  fftest::TempDir dir;
  Json doc{{"compiler", "toy"},
           {"versions", "*"},
           {"base_levels", {"", "-O3"}},
           {"flags",
            {{{"name", "a"}},
             {{"name", "new-in-7"}, {"versions", "≥7"}},
             {{"name", "b"}},
             {{"name", "old"}, {"versions", "<5"}}}}};
  write_json_atomic(dir / "toy.json", doc);
  auto at4 = load_flagspace("toy", "4.9.2", {dir.path()});
  auto at7 = load_flagspace("toy", "7.1.0", {dir.path()});
  std::vector<std::string> n4, n7;
  for (const auto& d : at4.descriptors()) n4.push_back(d.name);
  for (const auto& d : at7.descriptors()) n7.push_back(d.name);
  EXPECT_EQ(n4, (std::vector<std::string>{"a", "b", "old"}));
  EXPECT_EQ(n7, (std::vector<std::string>{"a", "new-in-7", "b"}));
}

// Loaded descriptors are exactly those whose range holds, in file order.
TEST(FlagSpaceLoad, ShippedFilesFilterConsistently) {
  for (const auto& dir : default_flagspace_dirs()) {
    if (!fftest::fs::is_directory(dir)) continue;
    for (const auto& f : fftest::fs::directory_iterator(dir)) {
      auto doc = read_json(f.path());
      auto full = parse_flagspace(doc);
      for (auto v : {"4.6", "4.9.2", "7.1.0", "8.5", "11.4.0", "14.0.0"}) {
        auto version = Version::parse(v);
        if (!full.versions().contains(version)) continue;
        auto loaded = load_flagspace(full.compiler_id(), v, {dir});
        std::vector<std::string> expected, got;
        for (const auto& j : doc.at("flags")) {
          if (VersionRange::parse(j.value("versions", std::string("*"))).contains(version)) {
            expected.push_back(j.at("name"));
          }
        }
        for (const auto& d : loaded.descriptors()) got.push_back(d.name);
        EXPECT_EQ(got, expected) << f.path() << " @ " << v;
      }
    }
    break;
  }
}

TEST(FlagSpaceInvariants, ConstructorRejectsBadDescriptors) {
  auto b = [](std::string n, std::string on, std::string off) {
    return FlagDescriptor{std::move(n), BooleanForms{std::move(on), std::move(off)}, {}, {}};
  };
  EXPECT_THROW(FlagSpace("g", {}, {}, {}), ContractError);
  EXPECT_THROW(FlagSpace("g", {}, {""}, {b("x", "-fx", "-fno-x"), b("x", "-fy", "-fno-y")}), ContractError);
  EXPECT_THROW(FlagSpace("g", {}, {""}, {b("x", "-fx", "-fx")}), ContractError);
  EXPECT_THROW(FlagSpace("g", {}, {""}, {FlagDescriptor{"p", ParametricForm{5, 1, "--param NAME=VALUE"}, {}, {}}}),
               ContractError);
}

TEST(Sampling, ZeroProbabilityIsBaseOnly) {
  auto space = gcc("4.9.2");
  SamplingPolicy p;
  p.include_probability = 0;
  p.seed = 3;
  auto a = sample_random(space, p);
  EXPECT_TRUE(a.values.empty());
  EXPECT_EQ(render(a, space), "-O3");
}

TEST(Sampling, FullProbabilitySetsEveryBoolean) {
  auto space = fftest::boolean_space(3);
  SamplingPolicy p;
  p.include_probability = 1;
  auto a = sample_random(space, p);
  EXPECT_EQ(a.values.size(), 3u);
  EXPECT_EQ(a.base_level, "-O3");
}

TEST(Sampling, SameSeedSameAssignment) {
  auto space = gcc("4.9.2");
  SamplingPolicy p;
  p.seed = 42;
  p.enable_parametric = true;
  EXPECT_EQ(sample_random(space, p), sample_random(space, p));
  p.seed = 43;
  auto other = sample_random(space, p);
  p.seed = 42;
  EXPECT_NE(sample_random(space, p), other);
}

TEST(Sampling, InvalidProbabilityRejected) {
  SamplingPolicy p;
  p.include_probability = 1.5;
  EXPECT_THROW(sample_random(fftest::boolean_space(2), p), ContractError);
}

TEST(Sampling, IncludedCountMatchesExpectationWithin3Sigma) {
  const int n = 20, seeds = 10000;
  const double prob = 0.25;
  auto space = fftest::boolean_space(n);
  SamplingPolicy p;
  p.include_probability = prob;
  double total = 0;
  int on = 0;
  for (int s = 0; s < seeds; ++s) {
    p.seed = static_cast<std::uint64_t>(s);
    auto a = sample_random(space, p);
    total += static_cast<double>(a.values.size());
    for (const auto& [k, v] : a.values) on += std::get<bool>(v);
  }
  double mean = seeds * n * prob;
  double sigma = std::sqrt(seeds * n * prob * (1 - prob));
  EXPECT_LE(std::abs(total - mean), 3 * sigma);
  // once included, on and off forms are equally likely
  EXPECT_LE(std::abs(on - total / 2), 3 * std::sqrt(total / 4));
}

TEST(Sampling, PolicyGatesCpuParametricAndBase) {
  auto space = gcc("4.9.2");
  SamplingPolicy p;
  p.include_probability = 1;
  auto a = sample_random(space, p);
  for (const auto& [name, v] : a.values) {
    const auto* d = space.find(name);
    EXPECT_FALSE(d->is_parametric()) << name;
    EXPECT_FALSE(d->has_tag(FlagTag::kCpu)) << name;
  }
  p.enable_parametric = p.enable_cpu = p.enable_base = true;
  bool saw_parametric = false, saw_other_base = false;
  for (std::uint64_t s = 0; s < 30; ++s) {
    p.seed = s;
    auto b = sample_random(space, p);
    saw_other_base |= b.base_level != "-O3";
    for (const auto& [name, v] : b.values) saw_parametric |= space.find(name)->is_parametric();
  }
  EXPECT_TRUE(saw_parametric);
  EXPECT_TRUE(saw_other_base);
}

TEST(Render, KnownTokens) {
  auto space = gcc("4.9.2");
  FlagAssignment a;
  a.base_level = "-O3";
  a.values["ivopts"] = false;
  a.values["max-unswitch-insns"] = std::int64_t{5};
  EXPECT_EQ(render(a, space), "-O3 -fno-ivopts --param max-unswitch-insns=5");
  auto tokens = render_tokens(a, space);
  EXPECT_EQ(tokens, (std::vector<std::string>{"-O3", "-fno-ivopts", "--param max-unswitch-insns=5"}));
  FlagAssignment base_only;
  base_only.base_level = "-O3";
  EXPECT_EQ(render(base_only, space), "-O3");
}

TEST(Render, UnknownFlagRejected) {
  auto space = fftest::boolean_space(2);
  FlagAssignment a;
  a.base_level = "-O3";
  a.values["nope"] = true;
  EXPECT_THROW(render(a, space), ContractError);
}

TEST(Render, EnvParametersStayOffTheCommandLine) {
  auto descriptors = fftest::boolean_space(1).descriptors();
  descriptors.push_back(FlagDescriptor{"block", EnvParamForm{"CT_BLOCK_SIZE", 1, 64}, {}, {}});
  FlagSpace space("gcc", {}, {"", "-O3"}, descriptors);
  FlagAssignment a;
  a.base_level = "-O3";
  a.values["f0"] = true;
  a.env_values["block"] = 16;
  EXPECT_EQ(render(a, space), "-O3 -ff0");
  EXPECT_EQ(render_env(a, space), (std::map<std::string, std::string>{{"CT_BLOCK_SIZE", "16"}}));
  a.env_values["block"] = 65;
  EXPECT_THROW(space.validate(a), ContractError);
}

TEST(Parse, KnownSolutionsRoundTrip) {
  auto space = gcc("4.9.2");
  for (const char* text : {kA4R, kA6R, "-O3 -flto", "-Os", "-O3 -fno-inline -flto"}) {
    auto a = parse(text, space);
    EXPECT_EQ(render(a, space), text);
  }
  auto a4r = parse(kA4R, space);
  EXPECT_EQ(a4r.values.size(), 6u);
  EXPECT_EQ(std::get<std::int64_t>(a4r.values.at("max-unswitch-insns")), 5);
  EXPECT_FALSE(std::get<bool>(a4r.values.at("guess-branch-probability")));
  EXPECT_TRUE(std::get<bool>(a4r.values.at("single-precision-constant")));
}

TEST(Parse, LtoSnapshotSolution) {
  auto space = gcc("4.9.2");
  auto a = parse("-O3 -flto", space);
  EXPECT_EQ(a.base_level, "-O3");
  ASSERT_EQ(a.values.size(), 1u);
  EXPECT_TRUE(std::get<bool>(a.values.at("lto")));
}

TEST(Parse, EmptyTextIsFirstBaseLevel) {
  auto space = gcc("4.9.2");
  auto a = parse("", space);
  EXPECT_EQ(a.base_level, "");
  EXPECT_TRUE(a.values.empty());
}

TEST(Parse, UnknownTokenReportsPosition) {
  auto space = gcc("4.9.2");
  try {
    parse("-O3 -funknown", space);
    FAIL() << "expected FlagParseError";
  } catch (const FlagParseError& e) {
    EXPECT_EQ(e.token(), "-funknown");
    EXPECT_EQ(e.position(), 1u);
    EXPECT_EQ(e.offset(), 4u);
  }
  EXPECT_THROW(parse("--param max-unswitch-insns=100000", space), FlagParseError);
  EXPECT_THROW(parse("-O3 -fivopts -fno-ivopts", space), ContractError);
}

TEST(Parse, RandomAssignmentsRoundTripOnAllShippedSpaces) {
  std::vector<FlagSpace> spaces = {gcc("4.9.2"), gcc("7.1.0"), gcc("11.4.0"),
                                   load_flagspace("clang", "14.0.0", default_flagspace_dirs())};
  for (const auto& space : spaces) {
    SamplingPolicy p;
    p.enable_parametric = p.enable_cpu = p.enable_base = true;
    for (std::uint64_t s = 0; s < 300; ++s) {
      p.seed = s;
      p.include_probability = static_cast<double>(s % 5) / 4.0;
      auto a = sample_random(space, p);
      auto text = render(a, space);
      auto back = parse(text, space);
      ASSERT_EQ(back, a) << text;
      ASSERT_EQ(render(back, space), text);
    }
  }
}

TEST(Assignment, JsonRoundTripAndWithout) {
  FlagAssignment a;
  a.base_level = "-O3";
  a.values = {{"ivopts", false}, {"max-unswitch-insns", std::int64_t{5}}, {"ira-algorithm", std::string("CB")}};
  a.env_values = {{"block", 8}};
  EXPECT_EQ(assignment_from_json(assignment_to_json(a)), a);
  auto b = a.without("ivopts").without("block");
  EXPECT_FALSE(b.values.contains("ivopts"));
  EXPECT_FALSE(b.env_values.contains("block"));
  EXPECT_EQ(b.values.size(), 2u);
}

TEST(FlagSpaceJson, RoundTrip) {
  auto space = gcc("4.9.2");
  auto again = parse_flagspace(flagspace_to_json(space));
  ASSERT_EQ(again.descriptors().size(), space.descriptors().size());
  EXPECT_EQ(again.base_levels(), space.base_levels());
  auto a = parse(kA4R, space);
  EXPECT_EQ(render(a, again), kA4R);
}
