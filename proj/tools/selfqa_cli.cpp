// Command-line entry point for the self-questioning trainer and its
// analysis experiments. Every subcommand takes --config/--seed/--out and
// writes a manifest plus its artifacts under the output directory.
#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "selfqa/config.hpp"
#include "selfqa/experiments.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string out_dir = "out";
  std::string checkpoint_dir;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "JSON config file");
  cmd->add_option("--seed", args.seed, "run seed (overrides train.seed)")
      ->each([&](const std::string&) { args.seed_given = true; });
  cmd->add_option("--out", args.out_dir, "output directory");
  cmd->add_option("--checkpoint", args.checkpoint_dir,
                  "directory with checkpoint.json/checkpoint.bin from a "
                  "prior train run");
}

selfqa::RunContext make_context(const CommonArgs& args) {
  selfqa::RunContext ctx;
  if (!args.config_path.empty())
    ctx.cfg = selfqa::load_config(args.config_path);
  else
    // defaults, with SELFQA_* environment overrides still applied
    ctx.cfg = selfqa::config_from_json_text("{}");
  if (args.seed_given) ctx.cfg.train.seed = args.seed;
  ctx.out_dir = args.out_dir;
  ctx.checkpoint_dir = args.checkpoint_dir;
  return ctx;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale self-questioning video-QA trainer"};
  app.require_subcommand(1);

  struct Sub {
    const char* name;
    const char* help;
    int (*run)(const selfqa::RunContext&);
  };
  const Sub subs[] = {
      {"train", "train one model and write metrics + checkpoint",
       selfqa::cmd_train},
      {"ablate", "ablation table over the four training switches",
       selfqa::cmd_ablate},
      {"noise-exp", "mean uncertainty vs video noise level sigma",
       selfqa::cmd_noise_exp},
      {"text-destroy-exp", "mean uncertainty vs question destruction rho",
       selfqa::cmd_text_destroy_exp},
      {"uncert-hist", "uncertainty split by answer correctness",
       selfqa::cmd_uncert_hist},
      {"quality-corr", "uncertainty vs question-quality proxies",
       selfqa::cmd_quality_corr},
      {"edl-breakdown", "evidence-construction variants side by side",
       selfqa::cmd_edl_breakdown},
  };

  CommonArgs args[8];
  std::size_t n = 0;
  for (const Sub& s : subs) add_common(app.add_subcommand(s.name, s.help), args[n++]);
  CommonArgs& gc_args = args[n];
  add_common(app.add_subcommand("gradcheck",
                                "finite-difference check of all loss terms"),
             gc_args);

  CLI11_PARSE(app, argc, argv);

  try {
    for (std::size_t i = 0; i < n; ++i)
      if (app.get_subcommand(subs[i].name)->parsed())
        return subs[i].run(make_context(args[i]));
    if (app.get_subcommand("gradcheck")->parsed())
      return selfqa::cmd_gradcheck(gc_args.seed_given ? gc_args.seed : 0,
                                   gc_args.out_dir);
  } catch (const selfqa::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
