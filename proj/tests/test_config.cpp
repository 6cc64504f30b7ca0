#include <cstdlib>

#include <doctest.h>

#include "selfqa/config.hpp"

using namespace selfqa;

TEST_CASE("defaults validate and round-trip through JSON") {
  RunConfig def;
  CHECK_NOTHROW(def.validate());
  RunConfig back = config_from_json_text(config_to_json_text(def), false);
  CHECK(config_to_json_text(back) == config_to_json_text(def));
  CHECK(back.n_train == def.n_train);
  CHECK(back.train.lr == def.train.lr);
  CHECK(back.seeds == def.seeds);
}

TEST_CASE("schema version is enforced") {
  CHECK_THROWS_AS(config_from_json_text(R"({"schema_version": 2})", false),
                  ConfigError);
}

TEST_CASE("unknown fields are rejected with the field name") {
  try {
    config_from_json_text(R"({"train": {"lerning_rate": 0.1}})", false);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("train.lerning_rate") != std::string::npos);
  }
}

TEST_CASE("invalid values name the offending field") {
  try {
    config_from_json_text(R"({"train": {"gumbel_tau": -1.0}})", false);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("gumbel_tau") != std::string::npos);
  }
  try {
    config_from_json_text(R"({"model": {"heads": 3, "dim": 32}})", false);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("model") != std::string::npos);
  }
  CHECK_THROWS_AS(config_from_json_text("not json at all", false), ConfigError);
  CHECK_THROWS_AS(config_from_json_text(R"({"n_train": 0})", false), ConfigError);
  CHECK_THROWS_AS(config_from_json_text(R"({"seeds": []})", false), ConfigError);
  CHECK_THROWS_AS(config_from_json_text(R"({"rho_grid": [1.5]})", false),
                  ConfigError);
}

TEST_CASE("type mismatches surface as ConfigError") {
  CHECK_THROWS_AS(config_from_json_text(R"({"train": {"lr": "fast"}})", false),
                  ConfigError);
  CHECK_THROWS_AS(config_from_json_text(R"({"n_train": "many"})", false),
                  ConfigError);
}

TEST_CASE("cross-field constraints between model and world") {
  CHECK_THROWS_AS(config_from_json_text(R"({"world": {"feat_dim": 8}})", false),
                  ConfigError);  // model.feat_dim still 16
  CHECK_NOTHROW(config_from_json_text(
      R"({"world": {"feat_dim": 8}, "model": {"feat_dim": 8}})", false));
}

TEST_CASE("environment variables override file values") {
  setenv("SELFQA_TRAIN_GUMBEL_TAU", "2.5", 1);
  setenv("SELFQA_N_TRAIN", "123", 1);
  setenv("SELFQA_TRAIN_OPTIMIZER", "sgd", 1);
  RunConfig cfg = config_from_json_text(R"({"train": {"gumbel_tau": 0.7}})", true);
  unsetenv("SELFQA_TRAIN_GUMBEL_TAU");
  unsetenv("SELFQA_N_TRAIN");
  unsetenv("SELFQA_TRAIN_OPTIMIZER");
  CHECK(cfg.train.gumbel_tau == 2.5);
  CHECK(cfg.n_train == 123);
  CHECK(cfg.train.optimizer == "sgd");  // bare string, no JSON quoting

  // without the env pass the file value wins
  RunConfig plain = config_from_json_text(R"({"train": {"gumbel_tau": 0.7}})", false);
  CHECK(plain.train.gumbel_tau == 0.7);
}

TEST_CASE("env overrides still hit validation") {
  setenv("SELFQA_TRAIN_EPOCHS", "0", 1);
  CHECK_THROWS_AS(config_from_json_text("{}", true), ConfigError);
  unsetenv("SELFQA_TRAIN_EPOCHS");
}
