#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "causeptr/decoder.hpp"
#include "causeptr/error.hpp"

using namespace causeptr;
using ad::Matrix;
using ad::Vector;

namespace {

double sig(double v) { return 1.0 / (1.0 + std::exp(-v)); }

ModelParams random_params(Ordering ordering, unsigned seed, int context = 2, int pos = 2) {
  ModelConfig c;
  c.encoder.context_dim = context;
  c.encoder.pos_dim = pos;
  c.encoder.vocab_size = 5;
  c.ordering = ordering;
  ModelParams p(c);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto& x : p.values()) x = u(rng);
  return p;
}

Matrix random_states(int d, int T, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Matrix h(d, T);
  for (int i = 0; i < h.size(); ++i) h.data()[i] = u(rng);
  return h;
}

EncoderStates states_on(ad::Tape& tape, const Matrix& h, int valid) {
  EncoderStates s{tape.constant(h), std::vector<std::uint8_t>(static_cast<std::size_t>(h.cols()), 0)};
  std::fill(s.mask.begin(), s.mask.begin() + valid, std::uint8_t{1});
  return s;
}

Matrix lstm_run(const Matrix& pre, const Matrix& w_hh, int valid, bool reverse) {
  const int h = static_cast<int>(w_hh.cols());
  Matrix out = Matrix::Zero(h, pre.cols());
  Vector hs = Vector::Zero(h), cs = Vector::Zero(h);
  for (int k = 0; k < valid; ++k) {
    const int t = reverse ? valid - 1 - k : k;
    const Vector z = pre.col(t) + w_hh * hs;
    for (int j = 0; j < h; ++j) {
      cs[j] = sig(z[h + j]) * cs[j] + sig(z[j]) * std::tanh(z[2 * h + j]);
      hs[j] = sig(z[3 * h + j]) * std::tanh(cs[j]);
    }
    out.col(t) = hs;
  }
  return out;
}

// Log-softmax over admitted positions; -inf elsewhere.
Vector log_softmax(const Vector& scores, const std::vector<bool>& admit) {
  double m = -INFINITY;
  for (int i = 0; i < scores.size(); ++i) {
    if (admit[static_cast<std::size_t>(i)]) m = std::max(m, scores[i]);
  }
  double z = 0.0;
  for (int i = 0; i < scores.size(); ++i) {
    if (admit[static_cast<std::size_t>(i)]) z += std::exp(scores[i] - m);
  }
  Vector out(scores.size());
  for (int i = 0; i < scores.size(); ++i) {
    out[i] = admit[static_cast<std::size_t>(i)] ? scores[i] - m - std::log(z) : -INFINITY;
  }
  return out;
}

// Plain-Eigen pointer network.
std::pair<Vector, Vector> pointer_oracle(const ModelParams& p, SpanRole role, const Matrix& h, int valid,
                                         const Vector& dec, const Vector* cond, bool admit_stop) {
  const PointerBlocks& blocks = p.layout().pointer[static_cast<int>(role)];
  Matrix features(p.config().d_p(), h.cols());
  const int half = p.config().d_p() / 2;
  int row = 0;
  for (const auto* dir : {&blocks.forward, &blocks.backward}) {
    Matrix pre = Matrix(p.block(dir->w_enc)) * h;
    Vector shared = Matrix(p.block(dir->w_dec)) * dec + Matrix(p.block(dir->lstm.bias));
    if (cond) shared += Matrix(p.block(dir->w_cond)) * *cond;
    pre.colwise() += shared;
    features.middleRows(row, half) = lstm_run(pre, p.block(dir->lstm.w_hh), valid, row != 0);
    row += half;
  }
  const Vector start = (Matrix(p.block(blocks.w_start)) * features).transpose();
  const Vector end = (Matrix(p.block(blocks.w_end)) * features).transpose();
  std::vector<bool> span_admit(static_cast<std::size_t>(h.cols()), false), start_admit;
  for (int i = 1; i < valid; ++i) span_admit[static_cast<std::size_t>(i)] = true;
  start_admit = span_admit;
  if (admit_stop) start_admit[0] = true;
  return {log_softmax(start, start_admit), log_softmax(end, span_admit)};
}

void expect_rows_near(const Matrix& got, const Vector& want, double tol) {
  ASSERT_EQ(got.size(), want.size());
  for (int i = 0; i < want.size(); ++i) {
    if (std::isinf(want[i])) {
      EXPECT_TRUE(std::isinf(got(0, i)) && got(0, i) < 0) << "position " << i;
    } else {
      EXPECT_NEAR(got(0, i), want[i], tol) << "position " << i;
    }
  }
}

}  // namespace

TEST(Attention, HandComputedWeights) {
  // d_h = 2, W_enc = I, W_dec = 0, v = (1, 0): score_i = tanh(h_i[0]).
  ModelConfig c;
  c.encoder.context_dim = 1;
  c.encoder.pos_dim = 1;
  c.encoder.vocab_size = 3;
  c.encoder.recurrent = false;
  ModelParams p(c);
  p.block(p.layout().att_w_enc) = Matrix::Identity(2, 2);
  p.block(p.layout().att_v) << 1.0, 0.0;
  Matrix h(2, 3);
  h << 0.0, 0.5, -1.0,  //
      1.0, 2.0, 3.0;
  ad::Tape tape(p.values());
  DecoderContext ctx(tape, p, states_on(tape, h, 3));
  const Matrix w = tape.value(ctx.attention_weights(tape.zeros(2, 1)));
  const double z = std::exp(std::tanh(0.0)) + std::exp(std::tanh(0.5)) + std::exp(std::tanh(-1.0));
  EXPECT_NEAR(w(0, 0), 1.0 / z, 1e-15);
  EXPECT_NEAR(w(0, 1), std::exp(std::tanh(0.5)) / z, 1e-15);
  EXPECT_NEAR(w(0, 2), std::exp(std::tanh(-1.0)) / z, 1e-15);
  const Matrix e = tape.value(ctx.attention(tape.zeros(2, 1)));
  EXPECT_NEAR(e(1, 0), (1.0 + 2.0 * std::exp(std::tanh(0.5)) + 3.0 * std::exp(std::tanh(-1.0))) / z, 1e-14);
}

TEST(Attention, MatchesFormulaWithQueryAndPadding) {
  const ModelParams p = random_params(Ordering::kCauseFirst, 1);
  const Matrix h = random_states(4, 6, 2);
  const Vector q = random_states(4, 1, 3);
  ad::Tape tape(p.values());
  DecoderContext ctx(tape, p, states_on(tape, h, 4));
  const Matrix w = tape.value(ctx.attention_weights(tape.constant(q)));

  const Matrix hidden = ((Matrix(p.block(p.layout().att_w_enc)) * h).colwise() +
                         Matrix(p.block(p.layout().att_w_dec)) * q)
                            .array()
                            .tanh()
                            .matrix();
  const Vector scores = (Matrix(p.block(p.layout().att_v)) * hidden).transpose();
  std::vector<bool> admit = {true, true, true, true, false, false};
  const Vector want = log_softmax(scores, admit).array().exp().matrix();
  for (int i = 0; i < 6; ++i) EXPECT_NEAR(w(0, i), want[i], 1e-14);
}

TEST(DecoderCell, MatchesHandLstm) {
  const ModelParams p = random_params(Ordering::kCauseFirst, 4);
  const Matrix h = random_states(4, 3, 5);
  ad::Tape tape(p.values());
  DecoderContext ctx(tape, p, states_on(tape, h, 3));
  TupleMemory memory;
  const Vector y1 = random_states(4, 1, 6), y2 = random_states(4, 1, 7);
  memory.push(tape.constant(y1));
  memory.push(tape.constant(y2));
  const Vector prev_h = random_states(4, 1, 8), prev_c = random_states(4, 1, 9), e = random_states(4, 1, 10);
  const DecoderState next =
      ctx.decode_step({tape.constant(prev_h), tape.constant(prev_c), 3}, tape.constant(e), memory);
  EXPECT_EQ(next.step, 4);

  Vector input(8);
  input << e, (y1 + y2) / 2.0;
  const Vector z = Matrix(p.block(p.layout().dec_w_x)) * input + Matrix(p.block(p.layout().decoder.w_hh)) * prev_h +
                   Matrix(p.block(p.layout().decoder.bias));
  for (int j = 0; j < 4; ++j) {
    const double c = sig(z[4 + j]) * prev_c[j] + sig(z[j]) * std::tanh(z[8 + j]);
    EXPECT_NEAR(tape.value(next.cell)(j, 0), c, 1e-14);
    EXPECT_NEAR(tape.value(next.hidden)(j, 0), sig(z[12 + j]) * std::tanh(c), 1e-14);
  }
}

TEST(TupleMemory, EmptyAverageIsZero) {
  const ModelParams p = random_params(Ordering::kCauseFirst, 4);
  ad::Tape tape(p.values());
  TupleMemory memory;
  EXPECT_TRUE(tape.value(memory.average(tape, 4)).isZero(0.0));
}

TEST(Pointer, FirstHeadTwoTokensMatchesOracle) {
  for (Ordering o : {Ordering::kCauseFirst, Ordering::kEffectFirst}) {
    const ModelParams p = random_params(o, 11);
    const Matrix h = random_states(4, 3, 12);  // n = 2
    const Vector dec = random_states(4, 1, 13);
    ad::Tape tape(p.values());
    DecoderContext ctx(tape, p, states_on(tape, h, 3));
    const PointerOutput out = ctx.pointer_scores(first_role(o), tape.constant(dec));
    const auto [start, end] = pointer_oracle(p, first_role(o), h, 3, dec, nullptr, true);
    expect_rows_near(tape.value(out.start_log_probs), start, 1e-13);
    expect_rows_near(tape.value(out.end_log_probs), end, 1e-13);
  }
}

TEST(Pointer, ConditionedSecondHeadMatchesOracle) {
  for (Ordering o : {Ordering::kCauseFirst, Ordering::kEffectFirst}) {
    const ModelParams p = random_params(o, 21);
    const Matrix h = random_states(4, 5, 22);
    const Vector dec = random_states(4, 1, 23), cond = random_states(4, 1, 24);
    ad::Tape tape(p.values());
    DecoderContext ctx(tape, p, states_on(tape, h, 4));  // n = 3 plus one padded column
    const PointerOutput out = ctx.pointer_scores(second_role(o), tape.constant(dec), tape.constant(cond));
    const auto [start, end] = pointer_oracle(p, second_role(o), h, 4, dec, &cond, false);
    expect_rows_near(tape.value(out.start_log_probs), start, 1e-13);
    expect_rows_near(tape.value(out.end_log_probs), end, 1e-13);
  }
}

TEST(Pointer, ConditioningArgumentChecked) {
  const ModelParams p = random_params(Ordering::kCauseFirst, 31);
  ad::Tape tape(p.values());
  DecoderContext ctx(tape, p, states_on(tape, random_states(4, 3, 32), 3));
  const ad::Var dec = tape.zeros(4, 1);
  EXPECT_THROW(ctx.pointer_scores(SpanRole::kCause, dec, dec), Error);
  EXPECT_THROW(ctx.pointer_scores(SpanRole::kEffect, dec), Error);
}

TEST(Projections, SpanAndCausalityVectors) {
  const ModelParams p = random_params(Ordering::kCauseFirst, 41);
  const Matrix h = random_states(4, 5, 42);
  ad::Tape tape(p.values());
  DecoderContext ctx(tape, p, states_on(tape, h, 5));
  const ad::Var cause = ctx.span_vector({1, 3});
  const ad::Var effect = ctx.span_vector({4, 4});
  const Matrix w_span = p.block(p.layout().span_w);
  const Matrix b_span = p.block(p.layout().span_b);
  const Vector want_cause = (w_span * h.middleCols(1, 3).rowwise().mean() + b_span).array().tanh().matrix();
  const Vector want_effect = (w_span * h.col(4) + b_span).array().tanh().matrix();
  for (int j = 0; j < 4; ++j) {
    EXPECT_NEAR(tape.value(cause)(j, 0), want_cause[j], 1e-14);
    EXPECT_NEAR(tape.value(effect)(j, 0), want_effect[j], 1e-14);
  }
  Vector both(8);
  both << want_cause, want_effect;
  const Vector want = (Matrix(p.block(p.layout().causality_w)) * both + Matrix(p.block(p.layout().causality_b)))
                          .array()
                          .tanh()
                          .matrix();
  const Matrix got = tape.value(ctx.causality_vector(cause, effect));
  for (int j = 0; j < 4; ++j) EXPECT_NEAR(got(j, 0), want[j], 1e-14);
}

TEST(Projections, InvalidSpanRejected) {
  const ModelParams p = random_params(Ordering::kCauseFirst, 51);
  ad::Tape tape(p.values());
  DecoderContext ctx(tape, p, states_on(tape, random_states(4, 6, 52), 4));  // n = 3
  for (Span bad : {Span{0, 1}, Span{2, 1}, Span{3, 4}}) {
    try {
      ctx.span_vector(bad);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kInvalidSpan);
    }
  }
}

TEST(GenerationStep, DistributionsNormalizedAndMasked) {
  std::mt19937_64 rng(61);
  for (int trial = 0; trial < 50; ++trial) {
    const Ordering o = trial % 2 ? Ordering::kEffectFirst : Ordering::kCauseFirst;
    const ModelParams p = random_params(o, static_cast<unsigned>(100 + trial));
    const int n = 1 + static_cast<int>(rng() % 6);
    const int T = n + 1 + static_cast<int>(rng() % 3);
    ad::Tape tape(p.values());
    DecoderContext ctx(tape, p, states_on(tape, random_states(4, T, static_cast<unsigned>(trial)), n + 1));
    TupleMemory memory;
    const int s = 1 + static_cast<int>(rng() % n);
    const auto step = ctx.generation_step(ctx.initial_state(), memory, {s, s});
    const SpanDistributions first = step.first.distributions();
    const SpanDistributions second = step.second.distributions();
    EXPECT_NEAR(first.start.sum(), 1.0, 1e-12);
    EXPECT_NEAR(first.end.sum(), 1.0, 1e-12);
    EXPECT_NEAR(second.start.sum(), 1.0, 1e-12);
    EXPECT_NEAR(second.end.sum(), 1.0, 1e-12);
    EXPECT_GT(first.start[0], 0.0);
    EXPECT_EQ(first.end[0], 0.0);
    EXPECT_EQ(second.start[0], 0.0);
    EXPECT_EQ(second.end[0], 0.0);
    for (int t = n + 1; t < T; ++t) {
      EXPECT_EQ(first.start[t], 0.0);
      EXPECT_EQ(second.end[t], 0.0);
    }
  }
}

TEST(GenerationStep, ByRoleMapsExtractionOrder) {
  SpanDistributions a{Vector::Constant(2, 0.1), Vector::Constant(2, 0.2)};
  SpanDistributions b{Vector::Constant(2, 0.3), Vector::Constant(2, 0.4)};
  EXPECT_EQ(by_role(Ordering::kCauseFirst, a, b).cause.start, a.start);
  EXPECT_EQ(by_role(Ordering::kEffectFirst, a, b).cause.start, b.start);
  EXPECT_EQ(by_role(Ordering::kEffectFirst, a, b).effect.end, a.end);
}
