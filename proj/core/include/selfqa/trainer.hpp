#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "selfqa/edl.hpp"
#include "selfqa/gumbel.hpp"
#include "selfqa/model.hpp"
#include "selfqa/world.hpp"

namespace selfqa {

struct TrainConfig {
  // ablation switches
  bool enable_selfq = true;
  bool enable_feedback = true;
  bool enable_edl_filter = true;
  bool enable_reg = true;

  double gumbel_tau = 2.0;
  bool gumbel_hard = true;
  bool gumbel_noise = true;  // false -> deterministic argmax decoding

  std::size_t epochs = 10;
  std::size_t batch_size = 4;
  double lr = 1.2e-3;
  std::string optimizer = "adam";  // "adam" | "adaptive" | "sgd"
  std::uint64_t seed = 0;

  bool edl_annealing = true;  // lambda_t = min(1, epoch/10); else 1
  bool uncertainty_from_selfq = true;  // compute u on the q-bar pass
  // initial value of the magnitude-head bias: the starting Dirichlet
  // strength is exp(edl_bias_init) + K, so training begins with u well
  // below 1 and cannot reach the zero-evidence dead zone early
  double edl_bias_init = 5.5;
  std::string uncertainty_strength = "dirichlet";  // or "magnitude"
  // evidence construction: "decoupled" (softmax direction x learned
  // magnitude), "relu" (truncated logits, summed strength) or "softmax"
  // (direction only, no learned magnitude)
  std::string evidence_mode = "decoupled";

  void validate() const;
};

/// The four loss terms plus the filter weight for one batch (or example).
struct LossBundle {
  double l_vqa_edl = 0, l_vqbar_a = 0, l_reg = 0, l_reg_edl = 0;
  double u = 1.0;
  double total = 0;
  double zeroed_frac = 0;  // fraction of truncated logits (relu mode only)
};

struct EpochRecord {
  std::size_t epoch = 0;
  double l_vqa_edl = 0, l_vqbar_a = 0, l_reg = 0, l_reg_edl = 0;
  double mean_u = 0.0;
  double val_acc = 0;
  double zeroed_frac = 0;
};

struct TrainResult {
  std::vector<EpochRecord> records;
  bool diverged = false;
  std::size_t completed_epochs = 0;
  double final_val_acc = 0;
};

/// Thrown when any loss component goes non-finite.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---- loss building blocks --------------------------------------------------

/// -sum_i log p(a_i | prefix) over the given target rows of teacher-forced
/// logits (rows aligned with targets).
Value answerer_nll(const Value& logits, const std::vector<int>& targets);

/// KL[onehot(seed) || p(.|prefix)] summed over question positions; reduces
/// to the NLL of the seed tokens.
Value seed_regularization(const Value& question_logits,
                          const std::vector<int>& seed_question);

struct EdlPass {
  Value l_vqa_edl;
  Value l_reg_edl;
  UncertaintyReport u;
  double zeroed_frac = 0;
};

/// Per-position evidence -> Dirichlet over the answer logits; Bayes-risk sum,
/// target-masked KL regularizer sum and the uncertainty report.
EdlPass edl_answer_pass(const Value& answer_logits, EdlHead& head,
                        const std::vector<int>& answer_tokens,
                        const std::string& evidence_mode = "decoupled",
                        const std::string& strength_source = "dirichlet");

struct QuestionerOutput {
  Value onehots;          // N_q x K rows, exact one-hots (hard mode)
  Value question_logits;  // N_q x K teacher-forced logits
  std::vector<int> sampled_tokens;
};

// ---- trainer ---------------------------------------------------------------

class Trainer {
 public:
  Trainer(ToyVideoLM& model, EdlHead& head, TrainConfig cfg);

  /// One teacher-forced questioner pass plus Gumbel sampling per seed
  /// position.
  QuestionerOutput questioner_step(const QAExample& ex, RngStream& rng);

  /// Builds the full loss graph for one example; no gradient side effects.
  struct StepGraph {
    Value total;
    LossBundle bundle;
    std::vector<int> generated_question;
  };
  /// filter_weight_override pins the (1-u) self-question weight to a fixed
  /// value; the finite-difference check needs this because u is detached in
  /// the total and therefore not part of the analytic gradient.
  StepGraph forward_losses(const QAExample& ex, std::size_t epoch, RngStream& rng,
                           const double* filter_weight_override = nullptr);

  /// forward_losses + backward; gradients accumulate into the parameters.
  LossBundle train_step(const QAExample& ex, std::size_t epoch, RngStream& rng);

  void optimizer_step(double grad_scale);
  void zero_grads();

  TrainResult train(const std::vector<Episode>& train_set,
                    const std::vector<Episode>& val_set);

  /// Scores all 5 options by answer-token NLL under the seed question;
  /// argmin wins, ties broken by lowest option index.
  double evaluate_accuracy(const std::vector<Episode>& val_set);
  int predict_option(const QAExample& ex);
  double option_nll(const QAExample& ex, int option);

  /// Aggregate uncertainty of the seed answer pass (no gradients).
  double example_uncertainty(const QAExample& ex);

  /// Fraction of episodes whose freshly sampled question contains the
  /// answer's content token.
  double leakage_rate(const std::vector<Episode>& eps, std::uint64_t noise_seed);

  std::vector<Parameter*> all_parameters();
  ToyVideoLM& model() { return model_; }
  EdlHead& head() { return head_; }
  const TrainConfig& config() const { return cfg_; }
  double lambda_t(std::size_t epoch) const;

 private:
  ToyVideoLM& model_;
  EdlHead& head_;
  TrainConfig cfg_;
  // optimizer state per trainable parameter entry
  std::vector<Tensor> moment1_;
  std::vector<Tensor> moment2_;
  std::size_t step_count_ = 0;
};

}  // namespace selfqa
