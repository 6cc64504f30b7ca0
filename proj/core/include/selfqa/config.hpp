#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "selfqa/model.hpp"
#include "selfqa/trainer.hpp"
#include "selfqa/world.hpp"

namespace selfqa {

/// Raised on malformed config files; the message names the offending field.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Everything a run needs, loaded from one JSON file. Schema version 1.
/// Environment variables prefixed SELFQA_ override individual fields, e.g.
/// SELFQA_TRAIN_EPOCHS=3 or SELFQA_N_TRAIN=200 (section and field joined by
/// an underscore; values parsed as JSON).
struct RunConfig {
  int schema_version = 1;
  WorldConfig world;
  ModelConfig model;  // model.vocab is derived from the world vocabulary
  TrainConfig train;

  std::size_t n_train = 2000;
  std::size_t n_val = 500;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};  // ablation sweep
  std::vector<double> sigma_grid = {0.0, 0.5, 1.0, 2.0};
  std::vector<double> rho_grid = {0.0, 0.25, 0.5, 0.75, 1.0};

  void validate() const;  // throws ConfigError
};

/// Parse + env overrides + validate. Unknown keys are rejected.
RunConfig load_config(const std::string& path);

RunConfig config_from_json_text(const std::string& text,
                                bool apply_env = true);

std::string config_to_json_text(const RunConfig& cfg);

const char* kEnvPrefix();  // "SELFQA_"

}  // namespace selfqa
