#include "selfqa/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "selfqa/autodiff.hpp"
#include "selfqa/checkpoint.hpp"
#include "selfqa/gumbel.hpp"
#include "selfqa/specialfn.hpp"
#include "selfqa/stats.hpp"

namespace selfqa {

using nlohmann::json;

namespace {

constexpr const char* kVersion = "selfqa 0.1.0";

constexpr std::uint64_t kModelSeedSalt = 11;
constexpr std::uint64_t kHeadSeedSalt = 13;
constexpr std::uint64_t kValFirstId = 1000000;

std::string num(double x) { return json(x).dump(); }

void ensure_dir(const std::string& dir) {
  std::filesystem::create_directories(dir);
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open output file: " + path);
  return f;
}

RunManifest make_manifest(const RunContext& ctx) {
  return RunManifest{config_to_json_text(ctx.cfg), ctx.cfg.train.seed,
                     code_version_hash(), ctx.out_dir};
}

ModelConfig model_config(const RunConfig& cfg, std::size_t vocab_size) {
  ModelConfig mc = cfg.model;
  mc.vocab = vocab_size;
  return mc;
}

/// Min-max normalization to [0,1]; constant series map to all zeros.
std::vector<double> min_max(const std::vector<double>& xs) {
  double lo = *std::min_element(xs.begin(), xs.end());
  double hi = *std::max_element(xs.begin(), xs.end());
  std::vector<double> out(xs.size(), 0.0);
  if (hi > lo)
    for (std::size_t i = 0; i < xs.size(); ++i) out[i] = (xs[i] - lo) / (hi - lo);
  return out;
}

void write_checkpoint_files(Trainer& trainer, const std::string& dir) {
  save_checkpoint(trainer.all_parameters(), dir + "/checkpoint.json",
                  dir + "/checkpoint.bin");
}

/// Train-or-load used by the analysis commands.
ExperimentSetup prepared_setup(const RunContext& ctx) {
  ExperimentSetup setup(ctx, !ctx.checkpoint_dir.empty());
  if (ctx.checkpoint_dir.empty())
    setup.trainer.train(setup.train_set, setup.val_set);
  return setup;
}

}  // namespace

std::string code_version_hash() {
  // FNV-1a over the version string: stable across runs of the same build
  std::uint64_t h = 1469598103934665603ull;
  for (const char* p = kVersion; *p; ++p) {
    h ^= std::uint64_t(static_cast<unsigned char>(*p));
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void RunManifest::write(const std::string& path) const {
  json j{{"config", json::parse(config_json)},
         {"seed", seed},
         {"version_hash", version_hash},
         {"out_dir", out_dir}};
  open_out(path) << j.dump(2) << '\n';
}

ExperimentSetup::ExperimentSetup(const RunContext& ctx, bool load_ckpt)
    : vocab(make_vocabulary(ctx.cfg.world)),
      train_set(generate_dataset(ctx.cfg.world, ctx.cfg.n_train, vocab, 0)),
      val_set(generate_dataset(ctx.cfg.world, ctx.cfg.n_val, vocab, kValFirstId)),
      model(model_config(ctx.cfg, vocab.size()),
            ctx.cfg.train.seed * 1000 + kModelSeedSalt),
      head([&] {
        RngStream rng(ctx.cfg.train.seed * 1000 + kHeadSeedSalt);
        EdlHead h(vocab.size(), rng);
        h.bias.value[0] = ctx.cfg.train.edl_bias_init;
        return h;
      }()),
      trainer(model, head, ctx.cfg.train) {
  if (load_ckpt)
    load_checkpoint(trainer.all_parameters(),
                    ctx.checkpoint_dir + "/checkpoint.json",
                    ctx.checkpoint_dir + "/checkpoint.bin");
}

int cmd_train(const RunContext& ctx) {
  ensure_dir(ctx.out_dir);
  make_manifest(ctx).write(ctx.out_dir + "/manifest.json");

  ExperimentSetup setup(ctx, false);
  TrainResult res = setup.trainer.train(setup.train_set, setup.val_set);

  std::ofstream metrics = open_out(ctx.out_dir + "/metrics.jsonl");
  for (const EpochRecord& r : res.records) {
    json j{{"epoch", r.epoch},         {"l_vqa_edl", r.l_vqa_edl},
           {"l_vqbar_a", r.l_vqbar_a}, {"l_reg", r.l_reg},
           {"l_reg_edl", r.l_reg_edl}, {"mean_u", r.mean_u},
           {"val_acc", r.val_acc}};
    metrics << j.dump() << '\n';
  }
  json summary{{"final_val_acc", res.final_val_acc},
               {"completed_epochs", res.completed_epochs},
               {"diverged", res.diverged},
               {"trainable_parameters", setup.model.trainable_parameter_count()}};
  open_out(ctx.out_dir + "/summary.json") << summary.dump(2) << '\n';
  write_checkpoint_files(setup.trainer, ctx.out_dir);
  return 0;
}

int cmd_ablate(const RunContext& ctx) {
  ensure_dir(ctx.out_dir);
  make_manifest(ctx).write(ctx.out_dir + "/manifest.json");

  struct Row {
    const char* name;
    bool reg, selfq, feedback, filter;
  };
  // cumulative switch sets mirroring the ablation table
  const Row rows[] = {{"baseline", false, false, false, false},
                      {"+reg", true, false, false, false},
                      {"+selfq", true, true, false, false},
                      {"+feedback", true, true, true, false},
                      {"full", true, true, true, true}};

  std::ofstream csv = open_out(ctx.out_dir + "/ablation.csv");
  csv << "config,enable_reg,enable_selfq,enable_feedback,enable_edl_filter";
  for (std::uint64_t s : ctx.cfg.seeds) csv << ",seed_" << s;
  csv << ",median\n";

  for (const Row& row : rows) {
    std::vector<double> accs;
    for (std::uint64_t seed : ctx.cfg.seeds) {
      RunContext run = ctx;
      run.cfg.train.seed = seed;
      run.cfg.train.enable_reg = row.reg;
      run.cfg.train.enable_selfq = row.selfq;
      run.cfg.train.enable_feedback = row.feedback;
      run.cfg.train.enable_edl_filter = row.filter;
      ExperimentSetup setup(run, false);
      TrainResult res = setup.trainer.train(setup.train_set, setup.val_set);
      accs.push_back(res.final_val_acc);
    }
    csv << row.name << ',' << row.reg << ',' << row.selfq << ','
        << row.feedback << ',' << row.filter;
    for (double a : accs) csv << ',' << num(a);
    csv << ',' << num(median(accs)) << '\n';
  }
  return 0;
}

int cmd_noise_exp(const RunContext& ctx) {
  ensure_dir(ctx.out_dir);
  make_manifest(ctx).write(ctx.out_dir + "/manifest.json");

  ExperimentSetup setup = prepared_setup(ctx);
  std::ofstream out = open_out(ctx.out_dir + "/noise_exp.jsonl");
  RngStream base(ctx.cfg.train.seed);
  for (double sigma : ctx.cfg.sigma_grid) {
    std::vector<double> us;
    for (const Episode& ep : setup.val_set) {
      // level-independent stream: the same noise draw scaled by sigma pairs
      // the levels, so the sigma effect is not drowned in resampling noise
      RngStream rng = base.split(0xA000).split(ep.id);
      QAExample ex = ep.example;
      ex.video.mat = corrupt_video(ex.video.mat, sigma, rng);
      us.push_back(setup.trainer.example_uncertainty(ex));
    }
    double mean = 0;
    for (double u : us) mean += u;
    mean /= double(us.size());
    out << json{{"sigma", sigma}, {"u_values", us}, {"u_mean", mean}}.dump()
        << '\n';
  }
  return 0;
}

int cmd_text_destroy_exp(const RunContext& ctx) {
  ensure_dir(ctx.out_dir);
  make_manifest(ctx).write(ctx.out_dir + "/manifest.json");

  ExperimentSetup setup = prepared_setup(ctx);
  std::ofstream out = open_out(ctx.out_dir + "/text_destroy_exp.jsonl");
  RngStream base(ctx.cfg.train.seed);
  for (double rho : ctx.cfg.rho_grid) {
    std::vector<double> us;
    for (const Episode& ep : setup.val_set) {
      // level-independent stream: a larger rho corrupts a superset of the
      // positions corrupted at a smaller rho (common random numbers)
      RngStream rng = base.split(0xB000).split(ep.id);
      QAExample ex = ep.example;
      ex.seed_question = corrupt_question(ex.seed_question, rho, setup.vocab, rng);
      us.push_back(setup.trainer.example_uncertainty(ex));
    }
    double mean = 0;
    for (double u : us) mean += u;
    mean /= double(us.size());
    out << json{{"rho", rho}, {"u_values", us}, {"u_mean", mean}}.dump() << '\n';
  }
  return 0;
}

int cmd_uncert_hist(const RunContext& ctx) {
  ensure_dir(ctx.out_dir);
  make_manifest(ctx).write(ctx.out_dir + "/manifest.json");

  ExperimentSetup setup = prepared_setup(ctx);
  std::vector<double> u_correct, u_incorrect;
  for (const Episode& ep : setup.val_set) {
    double u = setup.trainer.example_uncertainty(ep.example);
    bool correct = setup.trainer.predict_option(ep.example) == ep.example.correct_index;
    (correct ? u_correct : u_incorrect).push_back(u);
  }
  auto mean = [](const std::vector<double>& v) {
    double m = 0;
    for (double x : v) m += x;
    return v.empty() ? 0.0 : m / double(v.size());
  };
  json j{{"u_correct", u_correct},
         {"u_incorrect", u_incorrect},
         {"mean_u_correct", mean(u_correct)},
         {"mean_u_incorrect", mean(u_incorrect)}};
  if (!u_correct.empty() && !u_incorrect.empty())
    j["mann_whitney_p"] = mann_whitney_p(u_incorrect, u_correct);
  open_out(ctx.out_dir + "/uncert_hist.json") << j.dump(2) << '\n';
  return 0;
}

int cmd_quality_corr(const RunContext& ctx) {
  if (!ctx.cfg.train.enable_selfq)
    throw std::invalid_argument("quality-corr requires train.enable_selfq");
  ensure_dir(ctx.out_dir);
  make_manifest(ctx).write(ctx.out_dir + "/manifest.json");

  ExperimentSetup setup = prepared_setup(ctx);
  std::vector<double> us, vqbars, regs;
  RngStream base(ctx.cfg.train.seed);
  for (const Episode& ep : setup.val_set) {
    RngStream rng = base.split(0xC000).split(ep.id);
    // one fresh self-generated question per example, scored against the
    // shared answer and the seed question
    Trainer::StepGraph g = setup.trainer.forward_losses(ep.example, 9, rng);
    us.push_back(g.bundle.u);
    vqbars.push_back(g.bundle.l_vqbar_a);
    regs.push_back(g.bundle.l_reg);
  }
  std::vector<double> u_n = min_max(us), vq_n = min_max(vqbars), rg_n = min_max(regs);
  std::ofstream pairs = open_out(ctx.out_dir + "/quality_pairs.jsonl");
  for (std::size_t i = 0; i < us.size(); ++i)
    pairs << json{{"u", u_n[i]}, {"l_vqbar_a", vq_n[i]}, {"l_reg", rg_n[i]}}.dump()
          << '\n';
  json j{{"spearman_u_vqbar", spearman(u_n, vq_n)},
         {"spearman_u_reg", spearman(u_n, rg_n)}};
  open_out(ctx.out_dir + "/quality_corr.json") << j.dump(2) << '\n';
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, const std::string& out_dir) {
  ensure_dir(out_dir);
  constexpr double kTol = 1e-4;
  constexpr double kEps = 1e-4;
  constexpr int kPoints = 20;

  // micro world/model keep 20 x 6 losses affordable
  WorldConfig wc;
  wc.events = 4;
  wc.feat_dim = 6;
  wc.seed = seed;
  Vocabulary vocab = make_vocabulary(wc);
  ModelConfig mc;
  mc.layers = 1;
  mc.dim = 8;
  mc.heads = 2;
  mc.vocab = vocab.size();
  mc.video_slots = wc.events;
  mc.feat_dim = wc.feat_dim;

  TrainConfig tc;
  tc.seed = seed;
  tc.gumbel_hard = false;  // soft path: the straight-through estimator is
                           // deliberately not the gradient of its own forward
  std::vector<Episode> eps = generate_dataset(wc, std::size_t(kPoints), vocab, 0);

  struct Check {
    const char* name;
    double max_err = 0;
  };
  std::vector<Check> checks = {{"l_vqa"},     {"l_vqbar_a"}, {"l_reg"},
                               {"l_vqa_edl"}, {"l_reg_edl"}, {"total"}};

  for (int pt = 0; pt < kPoints; ++pt) {
    ToyVideoLM model(mc, seed * 7919 + std::uint64_t(pt));
    RngStream hr(seed * 104729 + std::uint64_t(pt));
    EdlHead head(vocab.size(), hr, 0.05);
    Trainer trainer(model, head, tc);
    const QAExample& ex = eps[std::size_t(pt)].example;
    std::vector<Parameter*> params = trainer.all_parameters();

    auto note = [&](std::size_t idx, const std::function<Value()>& loss) {
      double err = finite_diff_check(loss, params, kEps);
      // A central difference that straddles a relu kink is not a gradient
      // estimate; a genuine gradient bug would survive the smaller step.
      if (err >= kTol) err = std::min(err, finite_diff_check(loss, params, kEps / 10));
      checks[idx].max_err = std::max(checks[idx].max_err, err);
    };

    auto answer_slice = [&](const PromptLayout& lay, Value& logits_out,
                            std::vector<int>& targets_out) {
      targets_out.assign(
          lay.token_ids.begin() + std::ptrdiff_t(lay.answer_begin),
          lay.token_ids.begin() + std::ptrdiff_t(lay.answer_end));
      logits_out = slice_rows(model.decoder_forward(lay.embedded),
                              lay.answer_begin - 1, lay.answer_end - 1);
    };

    note(0, [&] {
      PromptLayout lay = model.build_answerer_prompt(ex, ex.seed_question);
      Value logits;
      std::vector<int> tg;
      answer_slice(lay, logits, tg);
      return answerer_nll(logits, tg);
    });
    note(1, [&] {
      RngStream rng(seed * 31 + std::uint64_t(pt));
      QuestionerOutput q = trainer.questioner_step(ex, rng);
      PromptLayout lay = model.build_answerer_prompt(ex, q.onehots);
      Value logits;
      std::vector<int> tg;
      answer_slice(lay, logits, tg);
      return answerer_nll(logits, tg);
    });
    note(2, [&] {
      PromptLayout lay = model.build_questioner_prompt(ex);
      Value logits = model.decoder_forward(lay.embedded);
      Value qlogits = slice_rows(logits, lay.question_begin - 1,
                                 lay.question_end - 1);
      return seed_regularization(qlogits, ex.seed_question);
    });
    note(3, [&] {
      PromptLayout lay = model.build_answerer_prompt(ex, ex.seed_question);
      Value logits;
      std::vector<int> tg;
      answer_slice(lay, logits, tg);
      return edl_answer_pass(logits, head, tg).l_vqa_edl;
    });
    note(4, [&] {
      PromptLayout lay = model.build_answerer_prompt(ex, ex.seed_question);
      Value logits;
      std::vector<int> tg;
      answer_slice(lay, logits, tg);
      return edl_answer_pass(logits, head, tg).l_reg_edl;
    });
    // The (1-u) filter weight is detached in the total, so the analytic
    // gradient treats it as a constant; hold it at its unperturbed value or
    // the finite difference would also measure the gradient through u.
    double w0;
    {
      RngStream rng(seed * 137 + std::uint64_t(pt));
      w0 = 1.0 - trainer.forward_losses(ex, 3, rng).bundle.u;
    }
    note(5, [&] {
      RngStream rng(seed * 137 + std::uint64_t(pt));
      return trainer.forward_losses(ex, 3, rng, &w0).total;
    });
  }

  bool ok = true;
  json rows = json::array();
  for (const Check& c : checks) {
    rows.push_back({{"loss", c.name}, {"max_rel_err", c.max_err}});
    if (!(c.max_err < kTol)) ok = false;
  }
  json j{{"tolerance", kTol}, {"points", kPoints}, {"losses", rows}, {"pass", ok}};
  open_out(out_dir + "/gradcheck.json") << j.dump(2) << '\n';
  return ok ? 0 : 1;
}

int cmd_edl_breakdown(const RunContext& ctx) {
  ensure_dir(ctx.out_dir);
  make_manifest(ctx).write(ctx.out_dir + "/manifest.json");

  const char* variants[] = {"decoupled", "relu", "softmax"};
  json report = json::array();
  std::ofstream zeros = open_out(ctx.out_dir + "/relu_zeroed_frac.jsonl");
  for (const char* variant : variants) {
    RunContext run = ctx;
    run.cfg.train.evidence_mode = variant;
    ExperimentSetup setup(run, false);
    TrainResult res = setup.trainer.train(setup.train_set, setup.val_set);
    report.push_back({{"variant", variant},
                      {"final_val_acc", res.final_val_acc},
                      {"completed_epochs", res.completed_epochs},
                      {"diverged", res.diverged}});
    if (std::string(variant) == "relu")
      for (const EpochRecord& r : res.records)
        zeros << json{{"epoch", r.epoch}, {"zeroed_frac", r.zeroed_frac}}.dump()
              << '\n';
  }
  open_out(ctx.out_dir + "/edl_breakdown.json") << report.dump(2) << '\n';
  return 0;
}

}  // namespace selfqa
