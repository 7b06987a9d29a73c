#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "causeptr/error.hpp"
#include "causeptr/synthetic.hpp"
#include "causeptr/training.hpp"

using namespace causeptr;
using ad::Vector;

namespace {

Vector uniform(int positions) { return Vector::Constant(positions, 1.0 / positions); }

Vector one_hot(int positions, int at) {
  Vector v = Vector::Zero(positions);
  v[at] = 1.0;
  return v;
}

TrainConfig tiny_config(Ordering o = Ordering::kCauseFirst) {
  TrainConfig c;
  c.ordering = o;
  c.encoder.context_dim = 4;
  c.encoder.pos_dim = 4;
  c.learning_rate = 0.01;
  c.epochs = 2;
  c.batch_size = 4;
  return c;
}

struct Fixture {
  std::vector<Example> data = synthetic_corpus(10);
  Vocabulary vocab = build_vocab(data, 1);

  ModelParams model(Ordering o, std::uint64_t seed, double spread = 0.0) const {
    ModelParams p(model_config(tiny_config(o), vocab));
    p.initialize(seed);
    if (spread > 0.0) {
      std::mt19937_64 rng(seed);
      std::uniform_real_distribution<double> u(-spread, spread);
      for (auto& x : p.values()) x = u(rng);
    }
    return p;
  }
};

}  // namespace

TEST(OrderGold, CauseFirstAndEffectFirst) {
  const std::vector<Causality> gold = {{6, 7, 1, 2}, {3, 4, 9, 9}};
  EXPECT_EQ(order_gold(gold, Ordering::kCauseFirst),
            (std::vector<Causality>{{3, 4, 9, 9}, {6, 7, 1, 2}, Causality::stop()}));
  EXPECT_EQ(order_gold(gold, Ordering::kEffectFirst),
            (std::vector<Causality>{{6, 7, 1, 2}, {3, 4, 9, 9}, Causality::stop()}));
  EXPECT_EQ(order_gold({}, Ordering::kCauseFirst), (std::vector<Causality>{Causality::stop()}));
}

TEST(StepLoss, CertainGoldCostsNothing) {
  const StepDistributions d{{one_hot(5, 1), one_hot(5, 2)}, {one_hot(5, 3), one_hot(5, 4)}};
  EXPECT_EQ(step_loss(d, {1, 2, 3, 4}, Ordering::kCauseFirst), 0.0);
}

TEST(StepLoss, UniformNonStopIsFourLogPositions) {
  const StepDistributions d{{uniform(5), uniform(5)}, {uniform(5), uniform(5)}};
  EXPECT_NEAR(step_loss(d, {1, 2, 3, 4}, Ordering::kCauseFirst), 4.0 * std::log(5.0), 1e-12);
  EXPECT_NEAR(step_loss(d, {1, 2, 3, 4}, Ordering::kEffectFirst), 4.0 * std::log(5.0), 1e-12);
}

TEST(StepLoss, StopUsesOnlyFirstStartHead) {
  Vector start = Vector::Constant(4, 0.25);
  const StepDistributions a{{start, uniform(4)}, {uniform(4), uniform(4)}};
  const StepDistributions b{{start, one_hot(4, 3)}, {one_hot(4, 1), one_hot(4, 2)}};
  EXPECT_NEAR(step_loss(a, Causality::stop(), Ordering::kCauseFirst), std::log(4.0), 1e-15);
  EXPECT_EQ(step_loss(a, Causality::stop(), Ordering::kCauseFirst),
            step_loss(b, Causality::stop(), Ordering::kCauseFirst));
  // Under EF the effect start head decides.
  const StepDistributions c{{one_hot(4, 2), uniform(4)}, {start, uniform(4)}};
  EXPECT_NEAR(step_loss(c, Causality::stop(), Ordering::kEffectFirst), std::log(4.0), 1e-15);
}

TEST(StepLoss, OutOfRangeTarget) {
  const StepDistributions d{{uniform(5), uniform(5)}, {uniform(5), uniform(5)}};
  try {
    step_loss(d, {1, 2, 3, 7}, Ordering::kCauseFirst);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kTargetOutOfRange);
  }
}

TEST(ExampleLoss, EmptyGoldIsStopLossOnly) {
  Fixture f;
  const ModelParams p = f.model(Ordering::kCauseFirst, 3);
  const Example& empty = f.data[4];
  ASSERT_TRUE(empty.gold.empty());
  const ModelInputs m{p, f.vocab, nullptr};

  ad::Tape tape(p.values());
  DecoderContext ctx(tape, p, encode(tape, p, empty.segment, f.vocab));
  const auto half = ctx.begin_step(ctx.initial_state(), TupleMemory{});
  const double want = -tape.value(half.first.start_log_probs)(0, 0);
  EXPECT_NEAR(example_loss_value(m, empty), want, 1e-14);
}

TEST(ExampleLoss, EqualsHandChainedSteps) {
  for (Ordering o : {Ordering::kCauseFirst, Ordering::kEffectFirst}) {
    Fixture f;
    const ModelParams p = f.model(o, 5, 0.5);
    const Example& ex = f.data[0];
    ASSERT_EQ(ex.gold.size(), 1u);
    const Causality gold = ex.gold[0];

    ad::Tape tape(p.values());
    DecoderContext ctx(tape, p, encode(tape, p, ex.segment, f.vocab));
    TupleMemory memory;
    const Span first = o == Ordering::kCauseFirst ? gold.cause() : gold.effect();
    const auto step = ctx.generation_step(ctx.initial_state(), memory, first);
    const double l0 = step_loss(by_role(o, step.first.distributions(), step.second.distributions()), gold, o);
    memory.push(ctx.causality_vector(ctx.span_vector(gold.cause()), ctx.span_vector(gold.effect())));
    const auto stop = ctx.begin_step(step.state, memory);
    const double l1 = -tape.value(stop.first.start_log_probs)(0, 0);

    EXPECT_NEAR(example_loss_value({p, f.vocab, nullptr}, ex), (l0 + l1) / 2.0, 1e-12);
  }
}

TEST(ExampleLoss, InvalidGoldRejected) {
  Fixture f;
  const ModelParams p = f.model(Ordering::kCauseFirst, 3);
  Example bad = f.data[0];
  bad.gold[0].e_e = 99;
  try {
    example_loss_value({p, f.vocab, nullptr}, bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kTargetOutOfRange);
  }
}

TEST(BatchLoss, PaddingMatchesPerExampleMean) {
  Fixture f;
  const ModelParams p = f.model(Ordering::kCauseFirst, 7);
  const ModelInputs m{p, f.vocab, nullptr};
  std::vector<const Example*> batch;
  double sum = 0.0;
  for (const auto& e : f.data) {
    batch.push_back(&e);
    sum += example_loss_value(m, e);
  }
  EXPECT_NEAR(batch_loss(m, batch), sum / static_cast<double>(f.data.size()), 1e-10);
}

TEST(BatchLoss, DuplicatedExampleLeavesLossUnchanged) {
  Fixture f;
  const ModelParams p = f.model(Ordering::kCauseFirst, 7);
  const ModelInputs m{p, f.vocab, nullptr};
  EXPECT_NEAR(batch_loss(m, {&f.data[2], &f.data[2]}), example_loss_value(m, f.data[2]), 1e-12);
}

TEST(Gradient, PaddedAndUnpaddedGradientsAgree) {
  Fixture f;
  const ModelParams p = f.model(Ordering::kCauseFirst, 9);
  const ModelInputs m{p, f.vocab, nullptr};
  Vector a = Vector::Zero(static_cast<Eigen::Index>(p.size())), b = a;
  accumulate_gradient(m, f.data[0], 1.0, a);
  accumulate_gradient(m, f.data[0], 1.0, b, 8, f.data[0].segment.length() + 6);
  EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Train, ZeroLearningRateLeavesParametersBitwise) {
  Fixture f;
  TrainConfig c = tiny_config();
  c.learning_rate = 0.0;
  c.epochs = 3;
  ModelParams init(model_config(c, f.vocab));
  init.initialize(c.seed);
  const TrainResult r = train(f.data, f.vocab, c);
  EXPECT_EQ(r.params.checksum(), init.checksum());
  EXPECT_EQ(r.history.size(), 3u);
}

TEST(Train, SeededRunsAreBitIdentical) {
  Fixture f;
  const TrainConfig c = tiny_config();
  const TrainResult a = train(f.data, f.vocab, c);
  const TrainResult b = train(f.data, f.vocab, c);
  EXPECT_EQ(a.params.checksum(), b.params.checksum());
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) EXPECT_EQ(a.history[i].mean_loss, b.history[i].mean_loss);
  TrainConfig other = c;
  other.seed = 2;
  EXPECT_NE(train(f.data, f.vocab, other).params.checksum(), a.params.checksum());
}

TEST(Train, CallbackCanStopEarly) {
  Fixture f;
  TrainConfig c = tiny_config();
  c.epochs = 5;
  const TrainResult r = train(f.data, f.vocab, c, nullptr, nullptr,
                              [](const EpochRecord& e, const ModelParams&) { return e.epoch < 2; });
  EXPECT_EQ(r.history.size(), 2u);
}

TEST(Train, NonFiniteLossAborts) {
  Fixture f;
  const TrainConfig c = tiny_config();
  ModelParams init(model_config(c, f.vocab));
  init.initialize(1);
  init.values()[0] = std::numeric_limits<double>::quiet_NaN();
  init.values().tail(3).setConstant(std::numeric_limits<double>::quiet_NaN());
  try {
    train(f.data, f.vocab, c, nullptr, &init);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNonFiniteLoss);
  }
}

TEST(Train, LossDecreasesOnSmallCorpus) {
  Fixture f;
  TrainConfig c = tiny_config();
  c.epochs = 25;
  const TrainResult r = train(f.data, f.vocab, c);
  EXPECT_LT(r.history.back().mean_loss, 0.5 * r.history.front().mean_loss);
}

TEST(Optimizer, ClipGlobalNorm) {
  Vector g(2);
  g << 3.0, 4.0;
  EXPECT_DOUBLE_EQ(clip_global_norm(g, 1.0), 5.0);
  EXPECT_NEAR(g.norm(), 1.0, 1e-15);
  Vector small(2);
  small << 0.3, 0.4;
  clip_global_norm(small, 1.0);
  EXPECT_EQ(small[0], 0.3);
}

TEST(Optimizer, AdamFirstStepMovesByLearningRate) {
  AdamOptimizer adam(3, 0.1);
  Vector p = Vector::Zero(3), g(3);
  g << 2.0, -0.5, 0.0;
  adam.step(p, g);
  EXPECT_NEAR(p[0], -0.1, 1e-8);
  EXPECT_NEAR(p[1], 0.1, 1e-8);
  EXPECT_EQ(p[2], 0.0);
  EXPECT_EQ(adam.steps(), 1);
}

TEST(GradCheck, PassesOnEveryGroup) {
  Example ex{make_segment("g", "higher rates cut profits"), {Causality{1, 2, 4, 4}}};
  const std::vector<Example> one = {ex};
  const Vocabulary v = build_vocab(one, 1);
  ModelParams q(model_config(tiny_config(), v));
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto& x : q.values()) x = u(rng);
  GradCheckOptions opt;
  opt.probe_count = 200;
  const GradCheckResult r = grad_check({q, v, nullptr}, ex, opt);
  EXPECT_LT(r.max_relative_error, 1e-4);
  EXPECT_EQ(r.probes.size(), 200u);
  EXPECT_EQ(r.max_error_by_group.size(), q.groups().size());
}

TEST(GradCheck, NegatedGradientDetected) {
  Fixture f;
  const ModelParams p = f.model(Ordering::kEffectFirst, 17, 1.0);
  const ModelInputs m{p, f.vocab, nullptr};
  Vector analytic = analytic_gradient(m, f.data[0]);
  Eigen::Index idx = 0;
  analytic.cwiseAbs().maxCoeff(&idx);
  analytic[idx] = -analytic[idx];
  GradCheckOptions opt;
  opt.coordinates = {static_cast<std::size_t>(idx)};
  const GradCheckResult r = grad_check(m, f.data[0], opt, &analytic);
  // A sign flip is the worst case of |a - n| / (|a| + |n|).
  EXPECT_NEAR(r.max_relative_error, 1.0, 1e-6);
  EXPECT_GT(r.max_relative_error, 1e-4);
}
