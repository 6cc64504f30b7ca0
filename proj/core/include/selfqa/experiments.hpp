#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "selfqa/config.hpp"
#include "selfqa/trainer.hpp"
#include "selfqa/world.hpp"

namespace selfqa {

/// Identity of one run: the exact config, the seed, the code version and the
/// output directory. Equal manifests must produce byte-identical outputs.
struct RunManifest {
  std::string config_json;  // full snapshot, canonical formatting
  std::uint64_t seed = 0;
  std::string version_hash;
  std::string out_dir;

  void write(const std::string& path) const;
};

std::string code_version_hash();

/// Bundle the CLI hands to every experiment command.
struct RunContext {
  RunConfig cfg;
  std::string out_dir;
  /// Optional directory holding checkpoint.json/checkpoint.bin from a prior
  /// train run; commands that need a trained model train from scratch when
  /// this is empty.
  std::string checkpoint_dir;
};

/// Deterministically rebuilds world, datasets, model, head and trainer from
/// the config; loads the checkpoint when `checkpoint_dir` is set.
struct ExperimentSetup {
  Vocabulary vocab;
  std::vector<Episode> train_set;
  std::vector<Episode> val_set;
  ToyVideoLM model;
  EdlHead head;
  Trainer trainer;

  explicit ExperimentSetup(const RunContext& ctx, bool load_checkpoint);
};

// Each command writes its outputs under ctx.out_dir and returns a process
// exit code (0 = success).
int cmd_train(const RunContext& ctx);
int cmd_ablate(const RunContext& ctx);
int cmd_noise_exp(const RunContext& ctx);
int cmd_text_destroy_exp(const RunContext& ctx);
int cmd_uncert_hist(const RunContext& ctx);
int cmd_quality_corr(const RunContext& ctx);
int cmd_gradcheck(std::uint64_t seed, const std::string& out_dir);
int cmd_edl_breakdown(const RunContext& ctx);

}  // namespace selfqa
