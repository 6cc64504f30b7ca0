#include <cmath>

#include <doctest.h>

#include "selfqa/model.hpp"
#include "selfqa/world.hpp"

using namespace selfqa;

namespace {

struct Fixture {
  WorldConfig wc;
  Vocabulary vocab;
  std::vector<Episode> eps;
  ModelConfig mc;
  ToyVideoLM model;

  Fixture()
      : vocab(make_vocabulary(wc)),
        eps(generate_dataset(wc, 4, vocab, 0)),
        mc([&] {
          ModelConfig m;
          m.layers = 2;
          m.dim = 16;
          m.heads = 2;
          m.vocab = vocab.size();
          m.video_slots = wc.events;
          m.feat_dim = wc.feat_dim;
          return m;
        }()),
        model(mc, 42) {}
};

}  // namespace

TEST_CASE("decoder is strictly causal") {
  Fixture fx;
  const QAExample& ex = fx.eps[0].example;
  PromptLayout lay = fx.model.build_answerer_prompt(ex, ex.seed_question);
  Tensor base = fx.model.decoder_forward(lay.embedded).tensor();

  // perturb the last row of the embedded prompt: all earlier logit rows
  // must be bitwise unchanged
  Tensor bumped = lay.embedded.tensor();
  std::size_t T = bumped.rows(), D = bumped.cols();
  for (std::size_t d = 0; d < D; ++d) bumped.at(T - 1, d) += 3.0;
  Tensor after =
      fx.model.decoder_forward(Value::constant(bumped)).tensor();

  for (std::size_t t = 0; t + 1 < T; ++t)
    for (std::size_t k = 0; k < base.cols(); ++k)
      CHECK(base.at(t, k) == after.at(t, k));
  // and the final row must actually move
  double delta = 0;
  for (std::size_t k = 0; k < base.cols(); ++k)
    delta += std::abs(base.at(T - 1, k) - after.at(T - 1, k));
  CHECK(delta > 0.0);
}

TEST_CASE("one-hot question path reproduces the token-id path bitwise") {
  Fixture fx;
  const QAExample& ex = fx.eps[1].example;
  PromptLayout by_ids = fx.model.build_answerer_prompt(ex, ex.seed_question);

  Tensor onehots = Tensor::zeros({ex.seed_question.size(), fx.vocab.size()});
  for (std::size_t i = 0; i < ex.seed_question.size(); ++i)
    onehots.at(i, std::size_t(ex.seed_question[i])) = 1.0;
  PromptLayout by_onehots =
      fx.model.build_answerer_prompt(ex, Value::constant(onehots));

  REQUIRE(by_ids.embedded.tensor().shape == by_onehots.embedded.tensor().shape);
  for (std::size_t i = 0; i < by_ids.embedded.size(); ++i)
    CHECK(by_ids.embedded.tensor()[i] == by_onehots.embedded.tensor()[i]);
  CHECK(by_ids.answer_begin == by_onehots.answer_begin);
  CHECK(by_ids.answer_end == by_onehots.answer_end);
}

TEST_CASE("adapters start as the identity") {
  // up is zero-initialized, so apply_adapter must reproduce base exactly
  RngStream rng(5);
  Tensor down = Tensor::zeros({4, 2});
  for (double& v : down.data) v = rng.normal();
  AdapterWeights ad{Parameter("down", down), Parameter("up", Tensor::zeros({2, 4}))};

  Tensor xs = Tensor::zeros({3, 4});
  for (double& v : xs.data) v = rng.normal();
  Tensor base = Tensor::zeros({3, 4});
  for (double& v : base.data) v = rng.normal();

  Value out = apply_adapter(Value::constant(base), Value::constant(xs), ad);
  for (std::size_t i = 0; i < base.size(); ++i) CHECK(out.tensor()[i] == base[i]);

  // once up is nonzero the correction shows up
  ad.up.value.fill(0.1);
  Value moved = apply_adapter(Value::constant(base), Value::constant(xs), ad);
  double delta = 0;
  for (std::size_t i = 0; i < base.size(); ++i)
    delta += std::abs(moved.tensor()[i] - base[i]);
  CHECK(delta > 0.0);
}

TEST_CASE("freeze_base leaves adapters, projector and temporal trainable") {
  Fixture fx;
  ModelConfig mc = fx.mc;
  mc.adapter_rank = 4;
  mc.freeze_base = true;
  ToyVideoLM m(mc, 7);
  std::size_t trainable = m.trainable_parameter_count();
  CHECK(trainable > 0);
  std::size_t total = 0;
  for (Parameter* p : m.parameters()) total += p->value.size();
  CHECK(trainable < total);
  m.set_freeze_base(false);
  CHECK(m.trainable_parameter_count() == total);
}

TEST_CASE("prompt layout round-trips through detokenize") {
  Fixture fx;
  const QAExample& ex = fx.eps[3].example;
  PromptLayout lay = fx.model.build_answerer_prompt(ex, ex.seed_question);
  std::string text = detokenize(lay, fx.vocab);
  CHECK(text.find(tok::kVideo) != std::string::npos);
  CHECK(text.find(tok::kQuestion) != std::string::npos);
  CHECK(text.find(tok::kChoices) != std::string::npos);
  CHECK(text.find(tok::kAnswer) != std::string::npos);
  // the correct option letter must appear in the rendered answer section
  std::string letter = tok::kLetters[ex.correct_index];
  CHECK(text.rfind(letter) > text.find(tok::kAnswer));

  // question ranges address the seed tokens exactly
  REQUIRE(lay.question_end - lay.question_begin == ex.seed_question.size());
  for (std::size_t i = 0; i < ex.seed_question.size(); ++i)
    CHECK(lay.token_ids[lay.question_begin + i] == ex.seed_question[i]);
}

TEST_CASE("questioner layout conditions on choices+answer, question last") {
  Fixture fx;
  const QAExample& ex = fx.eps[0].example;
  PromptLayout lay = fx.model.build_questioner_prompt(ex);
  // question section comes after the answer it conditions on
  CHECK(lay.question_begin > lay.answer_end);
  CHECK(lay.question_end == lay.token_ids.size());
  std::string text = detokenize(lay, fx.vocab);
  CHECK(text.find(tok::kChoices) < text.find(tok::kQuestion));
}

TEST_CASE("model config validation") {
  ModelConfig bad;
  bad.vocab = 10;
  bad.dim = 10;
  bad.heads = 3;  // does not divide dim
  CHECK_THROWS(bad.validate());
}
