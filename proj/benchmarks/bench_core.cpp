#include <benchmark/benchmark.h>

#include "selfqa/autodiff.hpp"
#include "selfqa/config.hpp"
#include "selfqa/edl.hpp"
#include "selfqa/trainer.hpp"
#include "selfqa/world.hpp"

namespace {

using namespace selfqa;

Tensor randn(std::vector<std::size_t> shape, RngStream& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.data) v = rng.normal();
  return t;
}

void BM_Matmul(benchmark::State& state) {
  std::size_t n = std::size_t(state.range(0));
  RngStream rng(1);
  Parameter a("a", randn({n, n}, rng));
  Parameter b("b", randn({n, n}, rng));
  for (auto _ : state) {
    Value c = matmul(Value::leaf(a), Value::leaf(b));
    benchmark::DoNotOptimize(c.tensor().data.data());
  }
}
BENCHMARK(BM_Matmul)->Arg(16)->Arg(32)->Arg(64);

struct TrainerFixture {
  RunConfig cfg;
  Vocabulary vocab;
  std::vector<Episode> eps;
  ToyVideoLM model;
  EdlHead head;
  Trainer trainer;

  TrainerFixture()
      : vocab(make_vocabulary(cfg.world)),
        eps(generate_dataset(cfg.world, 8, vocab, 0)),
        model([&] {
          ModelConfig mc = cfg.model;
          mc.vocab = vocab.size();
          return mc;
        }(), 1),
        head([&] {
          RngStream rng(2);
          return EdlHead(vocab.size(), rng);
        }()),
        trainer(model, head, cfg.train) {}
};

void BM_ForwardPass(benchmark::State& state) {
  TrainerFixture fx;
  RngStream rng(3);
  for (auto _ : state) {
    RngStream step = rng.split(7);
    auto g = fx.trainer.forward_losses(fx.eps[0].example, 5, step);
    benchmark::DoNotOptimize(g.bundle.total);
  }
}
BENCHMARK(BM_ForwardPass);

void BM_TrainStep(benchmark::State& state) {
  TrainerFixture fx;
  RngStream rng(3);
  std::size_t i = 0;
  for (auto _ : state) {
    RngStream step = rng.split(i);
    auto b = fx.trainer.train_step(fx.eps[i % fx.eps.size()].example, 5, step);
    fx.trainer.optimizer_step(1.0);
    fx.trainer.zero_grads();
    benchmark::DoNotOptimize(b.total);
    ++i;
  }
}
BENCHMARK(BM_TrainStep);

void BM_EdlLoss(benchmark::State& state) {
  std::size_t K = 55;
  RngStream rng(5);
  EdlHead head(K, rng, 0.05);
  Parameter logits("z", randn({6, K}, rng));
  std::vector<int> targets = {7, 12, 20, 31, 40, 1};
  for (auto _ : state) {
    EdlPass pass = edl_answer_pass(Value::leaf(logits), head, targets);
    benchmark::DoNotOptimize(pass.l_vqa_edl.tensor().data.data());
  }
}
BENCHMARK(BM_EdlLoss);

}  // namespace

BENCHMARK_MAIN();
