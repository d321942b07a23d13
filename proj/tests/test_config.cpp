#include <string>

#include <gtest/gtest.h>

#include "btfl/config.hpp"

using namespace btfl;

namespace {

ExperimentConfig tweaked() {
  ExperimentConfig c;
  c.experiment.task.n_classes = 7;
  c.experiment.task.noise_sigma = 0.1 + 0.2;  // not exactly representable in short decimal
  c.experiment.concentration = 0.25;
  c.experiment.training.lr = 1.0 / 3.0;
  c.experiment.seed = 123456789012345ull;
  c.adapter.lambda = 10.5;
  c.adapter.hbu_enabled = false;
  c.adapter.quadrature.abs_tol = 1e-11;
  c.fedthe.steps = 7;
  c.n_per_stream = 64;
  c.shift.domain_strength = 0.0;
  c.methods = {parse_method("btfl"), parse_method("fixed_mix(0.3)")};
  c.workers = 3;
  c.output_dir = "runs/a b";
  return c;
}

std::string field_of(const std::string& text) {
  try {
    validate(parse_config(text));
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "";
}

}  // namespace

TEST(Config, DefaultsAreValid) { EXPECT_NO_THROW(validate(ExperimentConfig{})); }

TEST(Config, IniRoundTripIsIdentity) {
  const auto c = tweaked();
  EXPECT_EQ(parse_config(to_ini(c)), c);
  EXPECT_EQ(to_ini(parse_config(to_ini(c))), to_ini(c));
  EXPECT_EQ(parse_config(to_ini(ExperimentConfig{})), ExperimentConfig{});
}

TEST(Config, JsonRoundTripIsIdentity) {
  const auto c = tweaked();
  EXPECT_EQ(parse_config(to_json(c).dump()), c);
  EXPECT_EQ(parse_config(to_json(c).dump(2)), c);
}

TEST(Config, JsonAcceptsMethodArrays) {
  const auto c = parse_config(R"({"bench": {"methods": ["local_only", "btfl"]}, "federation": {"seed": 4}})");
  ASSERT_EQ(c.methods.size(), 2u);
  EXPECT_EQ(c.methods[1].kind, MethodKind::Btfl);
  EXPECT_EQ(c.experiment.seed, 4u);
}

TEST(Config, IniCommentsBlankLinesAndSpacing) {
  const auto c = parse_config(
      "# leading comment\n"
      "; another\n"
      "\n"
      "[federation]\n"
      "  n_clients=4   \n"
      "concentration = 0.5\n"
      "[bench]\n"
      "methods = local_only, btfl\n");
  EXPECT_EQ(c.experiment.n_clients, 4u);
  EXPECT_EQ(c.experiment.concentration, 0.5);
  EXPECT_EQ(c.methods.size(), 2u);
  EXPECT_EQ(c.experiment.task, TaskParams{});
}

TEST(Config, UnknownKeysAndSectionsAreRejected) {
  EXPECT_THROW(parse_config("[federation]\nclients = 3\n"), ConfigError);
  EXPECT_THROW(parse_config("[nope]\nseed = 3\n"), ConfigError);
  EXPECT_THROW(parse_config("seed = 3\n"), ConfigError);
  EXPECT_THROW(parse_config(R"({"federation": {"clients": 3}})"), ConfigError);
  EXPECT_THROW(parse_config("[federation\n"), ConfigError);
  EXPECT_THROW(parse_config("[federation]\nseed\n"), ConfigError);
  EXPECT_THROW(parse_config("{not json"), ConfigError);
}

TEST(Config, MalformedValuesNameTheField) {
  EXPECT_EQ(field_of("[federation]\nn_clients = three\n"), "federation.n_clients");
  EXPECT_EQ(field_of("[training]\nlr = 0.1x\n"), "training.lr");
  EXPECT_EQ(field_of("[adapter]\nhbu_enabled = maybe\n"), "adapter.hbu_enabled");
  EXPECT_EQ(field_of("[bench]\nmethods = tent\n"), "methods");
}

TEST(Config, ValidationNamesTheField) {
  EXPECT_EQ(field_of("[federation]\nconcentration = 0\n"), "federation.concentration");
  EXPECT_EQ(field_of("[federation]\nconcentration = -1\n"), "federation.concentration");
  EXPECT_EQ(field_of("[adapter]\nlambda = 2.5\n"), "adapter.lambda");
  EXPECT_EQ(field_of("[adapter]\nlambda = 3\n"), "");
  EXPECT_EQ(field_of("[bench]\nn_per_stream = 10\n"), "bench.n_per_stream");
  EXPECT_EQ(field_of("[bench]\nmethods = btfl, btfl\n"), "bench.methods");
  EXPECT_EQ(field_of("[training]\nlr = inf\n"), "training.lr");
  EXPECT_EQ(field_of("[task]\nn_classes = 1\n"), "task.n_classes");
  EXPECT_EQ(field_of("[adapter]\nquad_panels = 15\n"), "adapter.quad_panels");
}

TEST(Config, ConfigErrorsExitWithCode2) {
  try {
    validate(parse_config("[federation]\nconcentration = 0\n"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.exit_code(), 2);
  }
}

TEST(Config, SeedOverrideFromEnvironment) {
  ExperimentConfig c;
  apply_env_overrides(c, "17");
  EXPECT_EQ(c.experiment.seed, 17u);
  apply_env_overrides(c, "");
  EXPECT_EQ(c.experiment.seed, 17u);
  apply_env_overrides(c, nullptr);
  EXPECT_EQ(c.experiment.seed, 17u);
  EXPECT_THROW(apply_env_overrides(c, "seventeen"), ConfigError);
}

TEST(Config, DerivedParameterBundles) {
  const auto c = tweaked();
  const auto b = c.bench_params();
  EXPECT_EQ(b.n_per_stream, 64u);
  EXPECT_EQ(b.workers, 3u);
  EXPECT_EQ(b.methods, c.methods);
  EXPECT_EQ(c.method_context().adapter, c.adapter);
  EXPECT_EQ(c.method_context().fedthe, c.fedthe);
}
