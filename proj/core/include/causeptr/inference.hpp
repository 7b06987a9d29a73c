#pragma once

// Greedy constrained decoding of causality tuples.

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "causeptr/corpus.hpp"
#include "causeptr/decoder.hpp"
#include "causeptr/training.hpp"

namespace causeptr {

struct DecodeConfig {
  int max_steps = 8;
  /// 0 means no limit within the segment.
  int max_span_len = 0;
  bool dedup = true;

  void validate() const;
};

struct ScoredSpan {
  Span span;
  double log_score = 0.0;
};

/// argmax over 1 <= s <= e <= n (and e - s + 1 <= max_span_len when positive)
/// of log start[s] + log end[e]; ties go to the smaller s, then smaller e.
/// Throws kNoValidSpan when every admissible pair has zero probability.
ScoredSpan constrained_span_argmax(const SpanDistributions& dist, int n, int max_span_len = 0);

/// Source of per-step distributions for decode(). The model-backed scorer
/// runs the network; tests substitute scripted scorers.
class StepScorer {
 public:
  virtual ~StepScorer() = default;
  /// Advances one step and returns the first-extracted role's distributions.
  virtual SpanDistributions first_head() = 0;
  /// Distributions of the other role, conditioned on the chosen first span.
  virtual SpanDistributions second_head(Span first_span) = 0;
  /// Records an emitted tuple in the scorer's tuple memory.
  virtual void commit(const Causality& tuple) = 0;
};

/// Step loop: stop when the unconstrained argmax of the first start head is
/// position 0; otherwise emit the tuple built from two constrained argmaxes.
/// With dedup a repeated tuple ends decoding without being emitted.
std::vector<Causality> decode(StepScorer& scorer, int n, Ordering ordering,
                              const DecodeConfig& config);

/// Runs the trained network on one segment with its predictions fed back.
class ModelScorer final : public StepScorer {
 public:
  ModelScorer(const ModelInputs& model, const Segment& segment);
  ~ModelScorer() override;

  SpanDistributions first_head() override;
  SpanDistributions second_head(Span first_span) override;
  void commit(const Causality& tuple) override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

std::vector<Causality> decode(const ModelInputs& model, const Segment& segment,
                              const DecodeConfig& config);

struct CorpusPredictions {
  std::map<std::string, std::vector<Causality>> tuples;  // keyed by segment id
  std::map<std::string, std::string> failures;
};

CorpusPredictions predict_corpus(const std::vector<Example>& examples, const ModelInputs& model,
                                 const DecodeConfig& config);

/// One JSON object per line: {id, tuples:[{c_s,c_e,e_s,e_e,cause_text,effect_text}]},
/// ordered by id. Span texts are sliced from the raw text by token offsets.
std::string write_predictions(const CorpusPredictions& predictions,
                              const std::vector<Example>& examples);
std::map<std::string, std::vector<Causality>> read_predictions(std::string_view content);

}  // namespace causeptr
