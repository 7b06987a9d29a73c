#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "causeptr/autodiff.hpp"
#include "causeptr/error.hpp"

using namespace causeptr;
using namespace causeptr::ad;

namespace {

// Scalar objective over a flat parameter vector, built on a fresh tape.
using Objective = std::function<Var(Tape&)>;

double value_at(const Vector& params, const Objective& f) {
  Tape tape(params);
  return tape.value(f(tape))(0, 0);
}

// Max relative error of the tape gradient against central differences.
double check(const Vector& params, const Objective& f) {
  Vector grad = Vector::Zero(params.size());
  {
    Tape tape(params, grad);
    tape.backward(f(tape));
  }
  double worst = 0.0;
  Vector probe = params;
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const double h = 1e-6;
    probe[i] = params[i] + h;
    const double up = value_at(probe, f);
    probe[i] = params[i] - h;
    const double down = value_at(probe, f);
    probe[i] = params[i];
    const double numeric = (up - down) / (2 * h);
    worst = std::max(worst, std::abs(numeric - grad[i]) / std::max(1e-8, std::abs(numeric) + std::abs(grad[i])));
  }
  return worst;
}

Vector random_vector(int n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Vector v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

// Weighted sum so every output entry gets a distinct upstream gradient.
Var reduce(Tape& tape, Var x) {
  Matrix w(x.cols(), 1);
  for (int i = 0; i < w.rows(); ++i) w(i, 0) = 0.3 + 0.17 * i;
  Matrix u(1, x.rows());
  for (int i = 0; i < u.cols(); ++i) u(0, i) = 0.7 - 0.11 * i;
  return matmul(matmul(tape.constant(u), x), tape.constant(w));
}

const ParamRef kA{0, 3, 4};
const ParamRef kB{12, 4, 2};
const ParamRef kC{20, 3, 4};
const ParamRef kCol{32, 3, 1};

}  // namespace

TEST(Autodiff, ElementwiseAndLinearOps) {
  const Vector p = random_vector(35, 1);
  EXPECT_LT(check(p, [](Tape& t) { return reduce(t, matmul(t.parameter(kA), t.parameter(kB))); }), 1e-7);
  EXPECT_LT(check(p, [](Tape& t) { return reduce(t, add(t.parameter(kA), t.parameter(kC))); }), 1e-7);
  EXPECT_LT(check(p, [](Tape& t) { return reduce(t, sub(t.parameter(kA), t.parameter(kC))); }), 1e-7);
  EXPECT_LT(check(p, [](Tape& t) { return reduce(t, add_column(t.parameter(kA), t.parameter(kCol))); }), 1e-7);
  EXPECT_LT(check(p, [](Tape& t) { return reduce(t, scale(t.parameter(kA), -2.5)); }), 1e-7);
  EXPECT_LT(check(p, [](Tape& t) { return reduce(t, cmul(t.parameter(kA), t.parameter(kC))); }), 1e-7);
  EXPECT_LT(check(p, [](Tape& t) { return reduce(t, tanh(t.parameter(kA))); }), 1e-7);
  EXPECT_LT(check(p, [](Tape& t) { return reduce(t, sigmoid(t.parameter(kA))); }), 1e-7);
  EXPECT_LT(check(p, [](Tape& t) { return reduce(t, transpose(t.parameter(kA))); }), 1e-7);
}

TEST(Autodiff, StructuralOps) {
  const Vector p = random_vector(35, 2);
  EXPECT_LT(check(p,
                  [](Tape& t) {
                    const Var parts[] = {t.parameter(kA), t.parameter(kC)};
                    return reduce(t, concat_rows(parts));
                  }),
            1e-7);
  EXPECT_LT(check(p, [](Tape& t) { return reduce(t, slice_rows(t.parameter(kA), 1, 2)); }), 1e-7);
  EXPECT_LT(check(p, [](Tape& t) { return reduce(t, slice_cols(t.parameter(kA), 1, 3)); }), 1e-7);
  EXPECT_LT(check(p, [](Tape& t) { return reduce(t, mean_cols(t.parameter(kA), 1, 2)); }), 1e-7);
  EXPECT_LT(check(p,
                  [](Tape& t) {
                    const Var terms[] = {pick(t.parameter(kA), 0, 1), pick(t.parameter(kC), 2, 3),
                                         pick(t.parameter(kA), 0, 1)};
                    return sum(terms);
                  }),
            1e-7);
}

TEST(Autodiff, SharedParameterAccumulates) {
  const Vector p = random_vector(35, 3);
  EXPECT_LT(check(p, [](Tape& t) { return reduce(t, cmul(t.parameter(kA), t.parameter(kA))); }), 1e-7);
}

TEST(Autodiff, MaskedSoftmaxValuesAndGradient) {
  const std::uint8_t mask[] = {1, 0, 1, 1};
  const Vector p = random_vector(35, 4);
  Tape tape(p);
  const Var row = slice_rows(tape.parameter(ParamRef{0, 1, 4}), 0, 1);
  const Matrix probs = tape.value(masked_softmax(row, mask));
  const Matrix logp = tape.value(masked_log_softmax(row, mask));
  EXPECT_NEAR(probs.sum(), 1.0, 1e-12);
  EXPECT_EQ(probs(0, 1), 0.0);
  EXPECT_TRUE(std::isinf(logp(0, 1)) && logp(0, 1) < 0);
  for (int j : {0, 2, 3}) EXPECT_NEAR(std::exp(logp(0, j)), probs(0, j), 1e-14);

  EXPECT_LT(check(p,
                  [&](Tape& t) {
                    const Var r = t.parameter(ParamRef{0, 1, 4});
                    const Var lp = masked_log_softmax(r, mask);
                    const Var terms[] = {pick(lp, 0, 2), scale(pick(lp, 0, 3), 0.5),
                                         pick(masked_softmax(r, mask), 0, 0)};
                    return sum(terms);
                  }),
            1e-7);
}

TEST(Autodiff, LstmSequenceMatchesStepwiseCell) {
  const int h = 2;
  const int T = 4;
  const ParamRef pre{0, 4 * h, T};
  const ParamRef whh{4 * h * T, 4 * h, h};
  const Vector p = random_vector(4 * h * T + 4 * h * h, 5);
  const std::uint8_t mask[] = {1, 1, 1, 1};

  for (bool reverse : {false, true}) {
    Tape tape(p);
    const Matrix out = tape.value(lstm_sequence(tape.parameter(pre), tape.parameter(whh), mask, reverse));
    // Plain cell loop.
    const Eigen::Map<const Matrix> x(p.data() + pre.offset, 4 * h, T);
    const Eigen::Map<const Matrix> w(p.data() + whh.offset, 4 * h, h);
    Vector hs = Vector::Zero(h), cs = Vector::Zero(h);
    auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    for (int k = 0; k < T; ++k) {
      const int t = reverse ? T - 1 - k : k;
      const Vector z = x.col(t) + w * hs;
      Vector next_c(h), next_h(h);
      for (int j = 0; j < h; ++j) {
        const double i = sig(z[j]), f = sig(z[h + j]), g = std::tanh(z[2 * h + j]), o = sig(z[3 * h + j]);
        next_c[j] = f * cs[j] + i * g;
        next_h[j] = o * std::tanh(next_c[j]);
      }
      cs = next_c;
      hs = next_h;
      for (int j = 0; j < h; ++j) EXPECT_NEAR(out(j, t), hs[j], 1e-14) << "t=" << t << " reverse=" << reverse;
    }
  }
}

TEST(Autodiff, LstmSequenceGradientWithMask) {
  const int h = 3;
  const int T = 5;
  const ParamRef pre{0, 4 * h, T};
  const ParamRef whh{4 * h * T, 4 * h, h};
  const Vector p = random_vector(4 * h * T + 4 * h * h, 6);
  const std::uint8_t mask[] = {1, 1, 1, 0, 0};
  for (bool reverse : {false, true}) {
    EXPECT_LT(check(p,
                    [&](Tape& t) {
                      return reduce(t, lstm_sequence(t.parameter(pre), t.parameter(whh), mask, reverse));
                    }),
              1e-6);
  }
}

TEST(Autodiff, LstmSequencePaddingLeavesValidColumnsUnchanged) {
  const int h = 2;
  const ParamRef long_pre{0, 4 * h, 5};
  const ParamRef whh{4 * h * 5, 4 * h, h};
  const Vector p = random_vector(4 * h * 5 + 4 * h * h, 7);
  const std::uint8_t short_mask[] = {1, 1, 1};
  const std::uint8_t long_mask[] = {1, 1, 1, 0, 0};
  for (bool reverse : {false, true}) {
    Tape tape(p);
    const Var short_pre = slice_cols(tape.parameter(long_pre), 0, 3);
    const Matrix a = tape.value(lstm_sequence(short_pre, tape.parameter(whh), short_mask, reverse));
    const Matrix b = tape.value(lstm_sequence(tape.parameter(long_pre), tape.parameter(whh), long_mask, reverse));
    EXPECT_EQ(a, b.leftCols(3));
    EXPECT_TRUE(b.rightCols(2).isZero(0.0));
  }
}

TEST(Autodiff, GatherColumnsScattersGradient) {
  const ParamRef table{0, 3, 5};
  const Vector p = random_vector(15, 8);
  const int ids[] = {4, 1, 4, 0};
  EXPECT_LT(check(p, [&](Tape& t) { return reduce(t, t.gather_columns(table, ids)); }), 1e-7);
}

TEST(Autodiff, ForwardOnlyTapeDoesNotRecordGradients) {
  const Vector p = random_vector(35, 9);
  Tape tape(p);
  EXPECT_FALSE(tape.recording());
}

TEST(Autodiff, BackwardNeedsScalarRoot) {
  const Vector p = random_vector(35, 10);
  Vector g = Vector::Zero(35);
  Tape tape(p, g);
  EXPECT_THROW(tape.backward(tape.parameter(kA)), Error);
}
