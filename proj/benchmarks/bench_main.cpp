#include <benchmark/benchmark.h>

#include <random>

#include "causeptr/evaluation.hpp"
#include "causeptr/inference.hpp"
#include "causeptr/synthetic.hpp"
#include "causeptr/training.hpp"

using namespace causeptr;

namespace {

struct Setup {
  std::vector<Example> corpus = synthetic_corpus();
  Vocabulary vocab = build_vocab(corpus, 1);
  ModelParams params;

  explicit Setup(int context_dim) {
    TrainConfig tc;
    tc.encoder.context_dim = context_dim;
    tc.encoder.pos_dim = context_dim / 2;
    params = ModelParams(model_config(tc, vocab));
    params.initialize(1);
  }
};

// Forward pass and backpropagation of one example's teacher-forced loss.
void BM_ExampleLossGradient(benchmark::State& state) {
  const Setup s(static_cast<int>(state.range(0)));
  const ModelInputs model{s.params, s.vocab, nullptr};
  ad::Vector grad = ad::Vector::Zero(static_cast<Eigen::Index>(s.params.size()));
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(accumulate_gradient(model, s.corpus[i++ % s.corpus.size()], 1.0, grad));
  }
}
BENCHMARK(BM_ExampleLossGradient)->Arg(16)->Arg(64);

void BM_GreedyDecode(benchmark::State& state) {
  const Setup s(static_cast<int>(state.range(0)));
  const ModelInputs model{s.params, s.vocab, nullptr};
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(decode(model, s.corpus[i++ % s.corpus.size()].segment, {}));
  }
}
BENCHMARK(BM_GreedyDecode)->Arg(16)->Arg(64);

void BM_ConstrainedSpanArgmax(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  SpanDistributions d{ad::Vector(n + 1), ad::Vector(n + 1)};
  for (int i = 0; i <= n; ++i) {
    d.start[i] = u(rng);
    d.end[i] = u(rng);
  }
  d.start /= d.start.sum();
  d.end /= d.end.sum();
  for (auto _ : state) benchmark::DoNotOptimize(constrained_span_argmax(d, n));
}
BENCHMARK(BM_ConstrainedSpanArgmax)->Arg(12)->Arg(64)->Arg(256);

void BM_TokenF1(benchmark::State& state) {
  const auto corpus = synthetic_corpus(static_cast<std::size_t>(state.range(0)));
  Prediction pred;
  for (const auto& e : corpus) pred[e.segment.id] = e.gold;
  for (auto _ : state) benchmark::DoNotOptimize(token_f1(corpus, pred));
}
BENCHMARK(BM_TokenF1)->Arg(50)->Arg(1000);

}  // namespace

BENCHMARK_MAIN();
