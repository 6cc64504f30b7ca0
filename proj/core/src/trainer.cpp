#include "selfqa/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace selfqa {

void TrainConfig::validate() const {
  if (!(gumbel_tau > 0.0)) throw std::invalid_argument("train config: gumbel_tau must be > 0");
  if (epochs < 1) throw std::invalid_argument("train config: epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
  if (!(lr > 0.0)) throw std::invalid_argument("train config: lr must be > 0");
  if (optimizer != "adam" && optimizer != "adaptive" && optimizer != "sgd")
    throw std::invalid_argument("train config: optimizer must be adam|adaptive|sgd");
  if (uncertainty_strength != "dirichlet" && uncertainty_strength != "magnitude")
    throw std::invalid_argument("train config: uncertainty_strength must be dirichlet|magnitude");
  if (evidence_mode != "decoupled" && evidence_mode != "relu" && evidence_mode != "softmax")
    throw std::invalid_argument("train config: evidence_mode must be decoupled|relu|softmax");
  if (!std::isfinite(edl_bias_init) || edl_bias_init > std::log(kMagnitudeCap))
    throw std::invalid_argument(
        "train config: edl_bias_init must be finite and at most log(1e12)");
}

Value answerer_nll(const Value& logits, const std::vector<int>& targets) {
  return nll_rows(log_softmax_rows(logits), targets);
}

Value seed_regularization(const Value& question_logits,
                          const std::vector<int>& seed_question) {
  if (question_logits.rows() != seed_question.size())
    throw std::invalid_argument("seed_regularization: position count mismatch");
  // one-hot KL collapses to the seed-token NLL
  return nll_rows(log_softmax_rows(question_logits), seed_question);
}

EdlPass edl_answer_pass(const Value& answer_logits, EdlHead& head,
                        const std::vector<int>& answer_tokens,
                        const std::string& evidence_mode,
                        const std::string& strength_source) {
  std::size_t n = answer_tokens.size();
  if (n == 0 || answer_logits.rows() != n)
    throw std::invalid_argument("edl_answer_pass: empty or mismatched answer positions");
  std::size_t K = answer_logits.cols();
  std::vector<DirichletParams> dirichlets;
  std::vector<double> magnitudes;
  dirichlets.reserve(n);
  std::size_t zeroed = 0;
  for (std::size_t j = 0; j < n; ++j) {
    Value z = row(answer_logits, j);
    if (evidence_mode == "relu") {
      for (double v : z.tensor().data)
        if (v <= 0.0) ++zeroed;
      dirichlets.push_back(vanilla_relu_evidence(z));
      magnitudes.push_back(dirichlets.back().strength.scalar() - double(K));
    } else if (evidence_mode == "softmax") {
      // direction only: unit total evidence, nothing learnable about scale
      Value alpha = add_const(softmax_rows(reshape(z, {1, K})), 1.0);
      dirichlets.push_back(DirichletParams{alpha, sum(alpha), K});
      magnitudes.push_back(1.0);
    } else {
      DecoupledEvidence ev = decouple_evidence(z, head);
      magnitudes.push_back(ev.magnitude.scalar());
      dirichlets.push_back(to_dirichlet(ev));
    }
  }
  // The KL is applied with the target class's evidence removed
  // (alpha~ = y + (1-y) .* alpha): penalizing target evidence too would
  // collapse the strength and with it every direction gradient.
  auto masked_kl = [&](const DirichletParams& d, int target) {
    Tensor keep = Tensor::zeros({d.K});
    Tensor onehot = Tensor::zeros({d.K});
    for (std::size_t k = 0; k < d.K; ++k) keep[k] = 1.0;
    keep[std::size_t(target)] = 0.0;
    onehot[std::size_t(target)] = 1.0;
    Value masked = add(mul(reshape(d.alpha, {d.K}), Value::constant(keep)),
                       Value::constant(onehot));
    return edl_kl_regularizer(DirichletParams{masked, sum(masked), d.K});
  };
  EdlPass pass;
  pass.zeroed_frac = double(zeroed) / double(n * K);
  pass.l_vqa_edl = sequence_bayes_risk(dirichlets, answer_tokens);
  pass.l_reg_edl = masked_kl(dirichlets[0], answer_tokens[0]);
  for (std::size_t j = 1; j < n; ++j)
    pass.l_reg_edl = add(pass.l_reg_edl, masked_kl(dirichlets[j], answer_tokens[j]));
  if (strength_source == "magnitude") {
    // exploratory variant: S taken as the sigmoid-ratio magnitude itself
    pass.u.per_position.clear();
    double acc = 0.0;
    for (double m : magnitudes) {
      double u = std::min(1.0, double(K) / std::max(m, 1e-300));
      pass.u.per_position.push_back(u);
      acc += u;
    }
    pass.u.aggregate = acc / double(n);
  } else {
    pass.u = uncertainty(dirichlets);
  }
  return pass;
}

Trainer::Trainer(ToyVideoLM& model, EdlHead& head, TrainConfig cfg)
    : model_(model), head_(head), cfg_(std::move(cfg)) {
  cfg_.validate();
  for (Parameter* p : all_parameters()) {
    moment1_.push_back(Tensor::zeros(p->value.shape));
    moment2_.push_back(Tensor::zeros(p->value.shape));
  }
}

std::vector<Parameter*> Trainer::all_parameters() {
  std::vector<Parameter*> out = model_.parameters();
  out.push_back(&head_.weights);
  out.push_back(&head_.bias);
  return out;
}

double Trainer::lambda_t(std::size_t epoch) const {
  return cfg_.edl_annealing ? std::min(1.0, double(epoch) / 10.0) : 1.0;
}

QuestionerOutput Trainer::questioner_step(const QAExample& ex, RngStream& rng) {
  PromptLayout layout = model_.build_questioner_prompt(ex);
  Value logits = model_.decoder_forward(layout.embedded);
  Value qlogits = slice_rows(logits, layout.question_begin - 1, layout.question_end - 1);

  GumbelConfig gc{cfg_.gumbel_tau, cfg_.gumbel_hard};
  std::size_t n_q = ex.seed_question.size();
  std::vector<Value> rows;
  std::vector<int> sampled;
  for (std::size_t i = 0; i < n_q; ++i) {
    Value zi = reshape(row(qlogits, i), {1, qlogits.cols()});
    Value yi;
    if (cfg_.gumbel_noise) {
      yi = gumbel_softmax(zi, gc, rng);
    } else {
      Value soft = softmax_rows(scale(zi, 1.0 / gc.temperature));
      yi = gc.hard ? straight_through_onehot(soft) : soft;
    }
    const Tensor& t = yi.tensor();
    std::size_t best = 0;
    for (std::size_t k = 1; k < t.size(); ++k)
      if (t[k] > t[best]) best = k;
    sampled.push_back(int(best));
    rows.push_back(yi);
  }
  return QuestionerOutput{concat_rows(rows), qlogits, std::move(sampled)};
}

Trainer::StepGraph Trainer::forward_losses(const QAExample& ex, std::size_t epoch,
                                           RngStream& rng,
                                           const double* filter_weight_override) {
  StepGraph out;

  // answer targets: answer tokens then [EOS]
  PromptLayout seed_layout = model_.build_answerer_prompt(ex, ex.seed_question);
  std::vector<int> answer_targets(seed_layout.token_ids.begin() + std::ptrdiff_t(seed_layout.answer_begin),
                                  seed_layout.token_ids.begin() + std::ptrdiff_t(seed_layout.answer_end));
  Value seed_logits = model_.decoder_forward(seed_layout.embedded);
  Value seed_answer_logits =
      slice_rows(seed_logits, seed_layout.answer_begin - 1, seed_layout.answer_end - 1);
  EdlPass edl = edl_answer_pass(seed_answer_logits, head_, answer_targets,
                                cfg_.evidence_mode, cfg_.uncertainty_strength);

  Value l_reg, l_vqbar;
  bool need_questioner = cfg_.enable_reg || cfg_.enable_selfq;
  if (need_questioner) {
    QuestionerOutput q = questioner_step(ex, rng);
    out.generated_question = q.sampled_tokens;
    if (cfg_.enable_reg) l_reg = seed_regularization(q.question_logits, ex.seed_question);
    if (cfg_.enable_selfq) {
      Value question_input = cfg_.enable_feedback ? q.onehots : detach(q.onehots);
      PromptLayout bar_layout = model_.build_answerer_prompt(ex, question_input);
      Value bar_logits = model_.decoder_forward(bar_layout.embedded);
      Value bar_answer_logits =
          slice_rows(bar_logits, bar_layout.answer_begin - 1, bar_layout.answer_end - 1);
      l_vqbar = answerer_nll(bar_answer_logits, answer_targets);
      if (cfg_.uncertainty_from_selfq) {
        EdlPass bar_edl = edl_answer_pass(bar_answer_logits, head_, answer_targets,
                                          cfg_.evidence_mode, cfg_.uncertainty_strength);
        edl.u = bar_edl.u;
      }
    }
  }

  double u = edl.u.aggregate;
  double weight = cfg_.enable_edl_filter ? (1.0 - u) : 1.0;  // u is detached
  if (filter_weight_override) weight = *filter_weight_override;
  double lam = lambda_t(epoch);

  Value total = add(edl.l_vqa_edl, scale(edl.l_reg_edl, lam));
  if (cfg_.enable_selfq) total = add(total, scale(l_vqbar, weight));
  if (cfg_.enable_reg) total = add(total, l_reg);

  LossBundle& b = out.bundle;
  b.l_vqa_edl = edl.l_vqa_edl.scalar();
  b.l_reg_edl = edl.l_reg_edl.scalar();
  b.l_vqbar_a = cfg_.enable_selfq ? l_vqbar.scalar() : 0.0;
  b.l_reg = cfg_.enable_reg ? l_reg.scalar() : 0.0;
  b.u = u;
  b.total = total.scalar();
  b.zeroed_frac = edl.zeroed_frac;
  if (!std::isfinite(b.l_vqa_edl) || !std::isfinite(b.l_vqbar_a) ||
      !std::isfinite(b.l_reg) || !std::isfinite(b.l_reg_edl) ||
      !std::isfinite(b.u) || !std::isfinite(b.total))
    throw DivergenceError("non-finite loss component in training step");

  out.total = total;
  return out;
}

LossBundle Trainer::train_step(const QAExample& ex, std::size_t epoch, RngStream& rng) {
  StepGraph g = forward_losses(ex, epoch, rng);
  backward(g.total);
  return g.bundle;
}

void Trainer::zero_grads() {
  for (Parameter* p : all_parameters()) p->zero_grad();
}

void Trainer::optimizer_step(double grad_scale) {
  ++step_count_;
  std::vector<Parameter*> params = all_parameters();
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double c1 = 1.0 - std::pow(beta1, double(step_count_));
  double c2 = 1.0 - std::pow(beta2, double(step_count_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter* p = params[i];
    if (!p->trainable) continue;
    for (std::size_t k = 0; k < p->value.size(); ++k) {
      double g = p->grad[k] * grad_scale;
      if (cfg_.optimizer == "sgd") {
        p->value[k] -= cfg_.lr * g;
      } else if (cfg_.optimizer == "adaptive") {
        double& v = moment2_[i][k];
        v = beta2 * v + (1.0 - beta2) * g * g;
        p->value[k] -= cfg_.lr * g / (std::sqrt(v / c2) + eps);
      } else {
        double& m = moment1_[i][k];
        double& v = moment2_[i][k];
        m = beta1 * m + (1.0 - beta1) * g;
        v = beta2 * v + (1.0 - beta2) * g * g;
        p->value[k] -= cfg_.lr * (m / c1) / (std::sqrt(v / c2) + eps);
      }
    }
  }
}

double Trainer::option_nll(const QAExample& ex, int option) {
  const std::vector<int>& opt = ex.option_tokens[std::size_t(option)];
  std::vector<int> answer = {opt[1], opt[0]};  // content word, then letter
  PromptLayout layout = model_.build_answerer_prompt(ex, ex.seed_question, &answer);
  std::vector<int> targets(layout.token_ids.begin() + std::ptrdiff_t(layout.answer_begin),
                           layout.token_ids.begin() + std::ptrdiff_t(layout.answer_end));
  Value logits = model_.decoder_forward(layout.embedded);
  Value slice = slice_rows(logits, layout.answer_begin - 1, layout.answer_end - 1);
  return answerer_nll(slice, targets).scalar();
}

int Trainer::predict_option(const QAExample& ex) {
  int best = 0;
  double best_nll = option_nll(ex, 0);
  for (int o = 1; o < 5; ++o) {
    double nll = option_nll(ex, o);
    if (nll < best_nll) {  // strict: ties keep the lowest index
      best_nll = nll;
      best = o;
    }
  }
  return best;
}

double Trainer::evaluate_accuracy(const std::vector<Episode>& val_set) {
  if (val_set.empty()) throw std::invalid_argument("evaluate_accuracy: empty dataset");
  std::size_t correct = 0;
  for (const Episode& ep : val_set)
    if (predict_option(ep.example) == ep.example.correct_index) ++correct;
  return double(correct) / double(val_set.size());
}

double Trainer::example_uncertainty(const QAExample& ex) {
  PromptLayout layout = model_.build_answerer_prompt(ex, ex.seed_question);
  std::vector<int> targets(layout.token_ids.begin() + std::ptrdiff_t(layout.answer_begin),
                           layout.token_ids.begin() + std::ptrdiff_t(layout.answer_end));
  Value logits = model_.decoder_forward(layout.embedded);
  Value slice = slice_rows(logits, layout.answer_begin - 1, layout.answer_end - 1);
  EdlPass pass = edl_answer_pass(slice, head_, targets, cfg_.evidence_mode,
                                 cfg_.uncertainty_strength);
  return pass.u.aggregate;
}

double Trainer::leakage_rate(const std::vector<Episode>& eps, std::uint64_t noise_seed) {
  if (eps.empty()) throw std::invalid_argument("leakage_rate: empty dataset");
  RngStream base(noise_seed);
  std::size_t leaked = 0;
  for (const Episode& ep : eps) {
    RngStream rng = base.split(ep.id);
    QuestionerOutput q = questioner_step(ep.example, rng);
    int content = answer_content_token(ep.example);
    if (std::find(q.sampled_tokens.begin(), q.sampled_tokens.end(), content) !=
        q.sampled_tokens.end())
      ++leaked;
  }
  return double(leaked) / double(eps.size());
}

TrainResult Trainer::train(const std::vector<Episode>& train_set,
                           const std::vector<Episode>& val_set) {
  if (train_set.empty() || val_set.empty())
    throw std::invalid_argument("train: empty dataset");
  TrainResult result;
  RngStream run_rng(cfg_.seed);

  // snapshot for divergence recovery
  std::vector<Tensor> last_good;
  for (Parameter* p : all_parameters()) last_good.push_back(p->value);

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < cfg_.epochs; ++epoch) {
    RngStream shuffle_rng = run_rng.split(0x5000 + epoch);
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.below(i)]);

    EpochRecord rec;
    rec.epoch = epoch;
    std::size_t count = 0;
    try {
      std::size_t batch_fill = 0;
      zero_grads();
      for (std::size_t oi = 0; oi < order.size(); ++oi) {
        const Episode& ep = train_set[order[oi]];
        RngStream ex_rng = run_rng.split(0x9000 + epoch).split(ep.id);
        LossBundle b = train_step(ep.example, epoch, ex_rng);
        rec.l_vqa_edl += b.l_vqa_edl;
        rec.l_vqbar_a += b.l_vqbar_a;
        rec.l_reg += b.l_reg;
        rec.l_reg_edl += b.l_reg_edl;
        rec.mean_u += b.u;
        rec.zeroed_frac += b.zeroed_frac;
        ++count;
        ++batch_fill;
        if (batch_fill == cfg_.batch_size || oi + 1 == order.size()) {
          optimizer_step(1.0 / double(batch_fill));
          zero_grads();
          batch_fill = 0;
        }
      }
    } catch (const DivergenceError&) {
      // roll back to the last epoch that completed cleanly
      std::vector<Parameter*> params = all_parameters();
      for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = last_good[i];
      result.diverged = true;
      break;
    }
    rec.l_vqa_edl /= double(count);
    rec.l_vqbar_a /= double(count);
    rec.l_reg /= double(count);
    rec.l_reg_edl /= double(count);
    rec.mean_u /= double(count);
    rec.zeroed_frac /= double(count);
    rec.val_acc = evaluate_accuracy(val_set);
    result.records.push_back(rec);
    result.completed_epochs = epoch + 1;
    result.final_val_acc = rec.val_acc;

    std::vector<Parameter*> params = all_parameters();
    for (std::size_t i = 0; i < params.size(); ++i) last_good[i] = params[i]->value;
  }
  return result;
}

}  // namespace selfqa
