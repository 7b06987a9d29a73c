#include "causeptr/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <future>
#include <set>

#include <boost/math/distributions/students_t.hpp>
#include <nlohmann/json.hpp>

#include "causeptr/encoder.hpp"
#include "causeptr/error.hpp"

namespace causeptr {
namespace {

bool pairing_order(const Causality& a, const Causality& b) {
  return std::tie(a.c_s, a.e_s, a.c_e, a.e_e) < std::tie(b.c_s, b.e_s, b.c_e, b.e_e);
}

const std::vector<Causality>& lookup(const Prediction& predictions, const std::string& id) {
  static const std::vector<Causality> kEmpty;
  auto it = predictions.find(id);
  return it == predictions.end() ? kEmpty : it->second;
}

void check_ids(const std::vector<Example>& examples, const Prediction& predictions) {
  std::set<std::string> ids;
  for (const auto& e : examples) ids.insert(e.segment.id);
  for (const auto& [id, tuples] : predictions) {
    if (!ids.contains(id)) throw Error(ErrorCode::kUnknownId, "prediction for unknown segment " + id);
  }
}

std::string fmt(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", value);
  return buf;
}

const char* kClassNames[3] = {"C", "E", "O"};

}  // namespace

double safe_ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }

double f1_score(std::int64_t tp, std::int64_t fp, std::int64_t fn) {
  return safe_ratio(2.0 * static_cast<double>(tp), static_cast<double>(2 * tp + fp + fn));
}

std::vector<TuplePair> pair_tuples(std::vector<Causality> gold, std::vector<Causality> pred) {
  std::sort(gold.begin(), gold.end(), pairing_order);
  std::sort(pred.begin(), pred.end(), pairing_order);
  std::vector<TuplePair> pairs(std::max(gold.size(), pred.size()));
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (i < gold.size()) pairs[i].gold = gold[i];
    if (i < pred.size()) pairs[i].pred = pred[i];
  }
  return pairs;
}

std::vector<TokenLabel> token_labels(const std::optional<Causality>& tuple, int n) {
  std::vector<TokenLabel> labels(static_cast<std::size_t>(n), TokenLabel::kOther);
  if (!tuple) return labels;
  auto paint = [&](int first, int last, TokenLabel label) {
    for (int t = std::max(first, 1); t <= std::min(last, n); ++t) {
      auto& slot = labels[static_cast<std::size_t>(t - 1)];
      if (slot == TokenLabel::kOther) slot = label;
    }
  };
  paint(tuple->c_s, tuple->c_e, TokenLabel::kCause);
  paint(tuple->e_s, tuple->e_e, TokenLabel::kEffect);
  return labels;
}

TokenReport token_f1(const std::vector<Example>& examples, const Prediction& predictions) {
  check_ids(examples, predictions);
  TokenReport report;
  for (const auto& example : examples) {
    const int n = example.segment.length();
    auto pairs = pair_tuples(example.gold, lookup(predictions, example.segment.id));
    if (pairs.empty()) pairs.push_back({});
    for (const auto& pair : pairs) {
      const auto gold = token_labels(pair.gold, n);
      const auto pred = token_labels(pair.pred, n);
      for (std::size_t t = 0; t < gold.size(); ++t) {
        ++report.confusion[static_cast<std::size_t>(gold[t])][static_cast<std::size_t>(pred[t])];
      }
    }
  }

  std::int64_t total_support = 0;
  for (std::size_t c = 0; c < 3; ++c) {
    ClassScores& s = report.classes[c];
    s.tp = report.confusion[c][c];
    for (std::size_t o = 0; o < 3; ++o) {
      if (o == c) continue;
      s.fp += report.confusion[o][c];
      s.fn += report.confusion[c][o];
    }
    s.support = s.tp + s.fn;
    s.precision = safe_ratio(static_cast<double>(s.tp), static_cast<double>(s.tp + s.fp));
    s.recall = safe_ratio(static_cast<double>(s.tp), static_cast<double>(s.tp + s.fn));
    s.f1 = f1_score(s.tp, s.fp, s.fn);
    total_support += s.support;
  }
  for (const ClassScores& s : report.classes) {
    const double w = safe_ratio(static_cast<double>(s.support), static_cast<double>(total_support));
    report.weighted_precision += w * s.precision;
    report.weighted_recall += w * s.recall;
    report.weighted_f1 += w * s.f1;
  }
  return report;
}

ExactMatchReport exact_match_f1(const std::vector<Example>& examples, const Prediction& predictions) {
  check_ids(examples, predictions);
  ExactMatchReport report;
  for (const auto& example : examples) {
    const auto& pred = lookup(predictions, example.segment.id);
    std::vector<bool> consumed(example.gold.size(), false);
    for (const auto& p : pred) {
      for (std::size_t g = 0; g < example.gold.size(); ++g) {
        if (!consumed[g] && example.gold[g] == p) {
          consumed[g] = true;
          ++report.matches;
          break;
        }
      }
    }
    report.predicted += static_cast<std::int64_t>(pred.size());
    report.gold += static_cast<std::int64_t>(example.gold.size());
  }
  report.precision = safe_ratio(static_cast<double>(report.matches), static_cast<double>(report.predicted));
  report.recall = safe_ratio(static_cast<double>(report.matches), static_cast<double>(report.gold));
  report.f1 = f1_score(report.matches, report.predicted - report.matches, report.gold - report.matches);
  return report;
}

EvalReport evaluate(const std::vector<Example>& examples, const Prediction& predictions) {
  return {token_f1(examples, predictions), exact_match_f1(examples, predictions), examples.size()};
}

SummaryStats summarize(const std::vector<double>& values) {
  SummaryStats s;
  if (values.empty()) return s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

std::vector<double> CrossValReport::fold_token_f1() const {
  std::vector<double> out;
  for (const auto& f : folds) out.push_back(f.report.token.weighted_f1);
  return out;
}

CrossValReport crossval(const std::vector<Example>& examples, const CrossValOptions& options) {
  const FoldSplit split = make_folds(examples, options.k, options.seed);

  auto run_fold = [&](int fold) {
    std::vector<Example> train_set;
    std::vector<Example> test_set;
    for (const auto& e : examples) {
      (split.assignments.at(e.segment.id) == fold ? test_set : train_set).push_back(e);
    }
    TrainConfig config = options.train;
    config.seed = options.seed + static_cast<std::uint64_t>(fold);
    const Vocabulary vocab = build_vocab(train_set, config.min_count);
    TrainResult trained = train(train_set, vocab, config);
    const ModelInputs model{trained.params, vocab, nullptr};
    const CorpusPredictions predicted = predict_corpus(test_set, model, options.decode);
    FoldResult result;
    result.fold = fold;
    result.train_size = train_set.size();
    result.test_size = test_set.size();
    result.report = evaluate(test_set, predicted.tuples);
    result.final_train_loss = trained.history.empty() ? 0.0 : trained.history.back().mean_loss;
    return result;
  };

  CrossValReport report;
  report.ordering = options.train.ordering;
  report.folds.resize(static_cast<std::size_t>(options.k));
  const int jobs = std::max(1, options.jobs);
  for (int begin = 0; begin < options.k; begin += jobs) {
    std::vector<std::future<FoldResult>> running;
    for (int fold = begin; fold < std::min(options.k, begin + jobs); ++fold) {
      running.push_back(std::async(jobs > 1 ? std::launch::async : std::launch::deferred, run_fold, fold));
    }
    for (auto& f : running) {
      FoldResult r = f.get();
      report.folds[static_cast<std::size_t>(r.fold)] = std::move(r);
    }
  }

  std::vector<double> token;
  std::vector<double> exact;
  for (const auto& f : report.folds) {
    token.push_back(f.report.token.weighted_f1);
    exact.push_back(f.report.exact.f1);
  }
  report.token_f1 = summarize(token);
  report.exact_f1 = summarize(exact);
  return report;
}

SignificanceResult paired_significance(const std::vector<double>& scores_a,
                                       const std::vector<double>& scores_b) {
  if (scores_a.size() != scores_b.size() || scores_a.size() < 2) {
    throw Error(ErrorCode::kInvalidArgument, "paired test needs two equal-length lists of >= 2 scores");
  }
  std::vector<double> diff(scores_a.size());
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = scores_a[i] - scores_b[i];
  if (std::all_of(diff.begin(), diff.end(), [&](double d) { return d == diff.front(); })) {
    throw Error(ErrorCode::kDegenerateVariance, "all paired differences are equal");
  }
  const SummaryStats stats = summarize(diff);
  if (!(stats.stddev > 0.0)) {
    throw Error(ErrorCode::kDegenerateVariance, "paired differences have zero variance");
  }
  SignificanceResult result;
  result.degrees_of_freedom = static_cast<int>(diff.size()) - 1;
  result.mean_difference = stats.mean;
  result.t_statistic = stats.mean / (stats.stddev / std::sqrt(static_cast<double>(diff.size())));
  const boost::math::students_t dist(static_cast<double>(result.degrees_of_freedom));
  result.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(result.t_statistic)));
  return result;
}

namespace {

nlohmann::ordered_json report_object(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["examples"] = report.examples;
  auto& token = j["token"];
  for (std::size_t c = 0; c < 3; ++c) {
    const ClassScores& s = report.token.classes[c];
    token["classes"][kClassNames[c]] = {{"tp", s.tp},          {"fp", s.fp},
                                         {"fn", s.fn},          {"support", s.support},
                                         {"precision", s.precision}, {"recall", s.recall},
                                         {"f1", s.f1}};
  }
  token["weighted_precision"] = report.token.weighted_precision;
  token["weighted_recall"] = report.token.weighted_recall;
  token["weighted_f1"] = report.token.weighted_f1;
  j["exact_match"] = {{"matches", report.exact.matches}, {"predicted", report.exact.predicted},
                      {"gold", report.exact.gold},       {"precision", report.exact.precision},
                      {"recall", report.exact.recall},   {"f1", report.exact.f1}};
  return j;
}

}  // namespace

std::string report_json(const EvalReport& report) { return report_object(report).dump(2) + "\n"; }

std::string report_tsv(const EvalReport& report) {
  std::string out = "metric\tclass\tprecision\trecall\tf1\tsupport\n";
  for (std::size_t c = 0; c < 3; ++c) {
    const ClassScores& s = report.token.classes[c];
    out += std::string("token\t") + kClassNames[c] + "\t" + fmt(s.precision) + "\t" + fmt(s.recall) +
           "\t" + fmt(s.f1) + "\t" + std::to_string(s.support) + "\n";
  }
  out += "token\tweighted\t" + fmt(report.token.weighted_precision) + "\t" +
         fmt(report.token.weighted_recall) + "\t" + fmt(report.token.weighted_f1) + "\t-\n";
  out += "exact_match\tall\t" + fmt(report.exact.precision) + "\t" + fmt(report.exact.recall) + "\t" +
         fmt(report.exact.f1) + "\t" + std::to_string(report.exact.gold) + "\n";
  return out;
}

std::string crossval_json(const std::vector<CrossValReport>& runs,
                          const std::optional<SignificanceResult>& significance) {
  nlohmann::ordered_json j;
  auto list = nlohmann::ordered_json::array();
  for (const auto& run : runs) {
    nlohmann::ordered_json r;
    r["ordering"] = ordering_name(run.ordering);
    auto folds = nlohmann::ordered_json::array();
    for (const auto& f : run.folds) {
      nlohmann::ordered_json fj = report_object(f.report);
      fj["fold"] = f.fold;
      fj["train_size"] = f.train_size;
      fj["test_size"] = f.test_size;
      fj["final_train_loss"] = f.final_train_loss;
      folds.push_back(std::move(fj));
    }
    r["folds"] = std::move(folds);
    r["token_f1"] = {{"mean", run.token_f1.mean}, {"std", run.token_f1.stddev}};
    r["exact_match_f1"] = {{"mean", run.exact_f1.mean}, {"std", run.exact_f1.stddev}};
    list.push_back(std::move(r));
  }
  j["runs"] = std::move(list);
  if (significance) {
    j["paired_t_test"] = {{"mean_difference", significance->mean_difference},
                          {"t", significance->t_statistic},
                          {"df", significance->degrees_of_freedom},
                          {"p_value", significance->p_value}};
  }
  return j.dump(2) + "\n";
}

std::string crossval_tsv(const std::vector<CrossValReport>& runs,
                         const std::optional<SignificanceResult>& significance) {
  std::string out = "ordering\trow\ttrain\ttest\ttoken_f1\tem_precision\tem_recall\tem_f1\n";
  for (const auto& run : runs) {
    const std::string o(ordering_name(run.ordering));
    for (const auto& f : run.folds) {
      out += o + "\tfold" + std::to_string(f.fold) + "\t" + std::to_string(f.train_size) + "\t" +
             std::to_string(f.test_size) + "\t" + fmt(f.report.token.weighted_f1) + "\t" +
             fmt(f.report.exact.precision) + "\t" + fmt(f.report.exact.recall) + "\t" +
             fmt(f.report.exact.f1) + "\n";
    }
    out += o + "\tmean\t-\t-\t" + fmt(run.token_f1.mean) + "\t-\t-\t" + fmt(run.exact_f1.mean) + "\n";
    out += o + "\tstd\t-\t-\t" + fmt(run.token_f1.stddev) + "\t-\t-\t" + fmt(run.exact_f1.stddev) + "\n";
  }
  if (significance) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "CF-EF\tpaired_t\tdf=%d\tmean_diff=%.6f\tt=%.6f\tp=%.6g\t-\t-\n",
                  significance->degrees_of_freedom, significance->mean_difference,
                  significance->t_statistic, significance->p_value);
    out += buf;
  }
  return out;
}

}  // namespace causeptr
