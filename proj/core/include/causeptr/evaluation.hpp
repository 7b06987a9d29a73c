#pragma once

// Span-level scoring.
//
// Token F1: gold and predicted tuples of an example are sorted by (c_s, e_s)
// and paired by index (the shorter side padded with "absent"). Every pair
// labels the segment's tokens C / E / O on both sides and the labels feed one
// corpus-wide 3x3 confusion matrix. An example with no tuples on either side
// contributes one all-O pair. The headline figure is the gold-support-weighted
// mean of the per-class F1 scores.
//
// Exact match: a predicted tuple matches when all four indices equal an
// unconsumed gold tuple; counts are micro-aggregated over the corpus.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "causeptr/corpus.hpp"
#include "causeptr/inference.hpp"
#include "causeptr/training.hpp"

namespace causeptr {

enum class TokenLabel : int { kCause = 0, kEffect = 1, kOther = 2 };

using Prediction = std::map<std::string, std::vector<Causality>>;

struct TuplePair {
  std::optional<Causality> gold;
  std::optional<Causality> pred;
};

std::vector<TuplePair> pair_tuples(std::vector<Causality> gold, std::vector<Causality> pred);

/// Labels over tokens 1..n (index 0 of the result is token 1). An absent
/// tuple labels everything O; a token claimed by both spans stays C.
std::vector<TokenLabel> token_labels(const std::optional<Causality>& tuple, int n);

struct ClassScores {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
  std::int64_t support = 0;  // gold count
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct TokenReport {
  /// confusion[gold][predicted]
  std::array<std::array<std::int64_t, 3>, 3> confusion{};
  std::array<ClassScores, 3> classes{};
  double weighted_precision = 0.0;
  double weighted_recall = 0.0;
  double weighted_f1 = 0.0;
};

struct ExactMatchReport {
  std::int64_t matches = 0;
  std::int64_t predicted = 0;
  std::int64_t gold = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct EvalReport {
  TokenReport token;
  ExactMatchReport exact;
  std::size_t examples = 0;
};

/// Missing prediction ids count as empty; ids absent from the corpus throw
/// kUnknownId.
TokenReport token_f1(const std::vector<Example>& examples, const Prediction& predictions);
ExactMatchReport exact_match_f1(const std::vector<Example>& examples, const Prediction& predictions);
EvalReport evaluate(const std::vector<Example>& examples, const Prediction& predictions);

/// Precision/recall/F1 from counts, 0 where a denominator vanishes.
double safe_ratio(double num, double den);
/// 2tp / (2tp + fp + fn): the harmonic mean of precision and recall, computed
/// from counts so simple ratios such as 4/7 come out exact.
double f1_score(std::int64_t tp, std::int64_t fp, std::int64_t fn);

struct SummaryStats {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation (n - 1)
};
SummaryStats summarize(const std::vector<double>& values);

struct FoldResult {
  int fold = 0;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  EvalReport report;
  double final_train_loss = 0.0;
};

struct CrossValReport {
  Ordering ordering = Ordering::kCauseFirst;
  std::vector<FoldResult> folds;
  SummaryStats token_f1;
  SummaryStats exact_f1;

  std::vector<double> fold_token_f1() const;
};

struct CrossValOptions {
  int k = 5;
  std::uint64_t seed = 1;
  TrainConfig train;
  DecodeConfig decode;
  /// Folds trained concurrently; results do not depend on this.
  int jobs = 1;
};

/// For each fold: vocabulary and model from the other k-1 folds (training
/// seed = master seed + fold index), evaluation on the held-out fold.
CrossValReport crossval(const std::vector<Example>& examples, const CrossValOptions& options);

struct SignificanceResult {
  double mean_difference = 0.0;
  double t_statistic = 0.0;
  double p_value = 0.0;  // two-tailed
  int degrees_of_freedom = 0;
};

/// Paired two-tailed t-test on a - b. Throws kDegenerateVariance when all
/// differences are equal and kInvalidArgument on bad lengths.
SignificanceResult paired_significance(const std::vector<double>& scores_a,
                                       const std::vector<double>& scores_b);

/// Structured (JSON) and flat tab-separated renderings.
std::string report_json(const EvalReport& report);
std::string report_tsv(const EvalReport& report);
std::string crossval_json(const std::vector<CrossValReport>& runs,
                          const std::optional<SignificanceResult>& significance);
std::string crossval_tsv(const std::vector<CrossValReport>& runs,
                         const std::optional<SignificanceResult>& significance);

}  // namespace causeptr
