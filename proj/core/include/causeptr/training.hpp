#pragma once

// Teacher-forced maximum-likelihood training.
//
// Gold tuples are ordered by the first-extracted span and followed by the stop
// tuple (0,-1,-1,-1). A regular step costs the negative log-probability of the
// four gold indices; the stop step costs only -log P(position 0) under the
// first-extracted start head. An example's loss is the mean over its steps.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "causeptr/corpus.hpp"
#include "causeptr/decoder.hpp"
#include "causeptr/encoder.hpp"
#include "causeptr/model.hpp"

namespace causeptr {

struct TrainConfig {
  Ordering ordering = Ordering::kCauseFirst;
  double learning_rate = 1e-3;
  int epochs = 30;
  int batch_size = 8;
  double grad_clip_norm = 5.0;
  std::uint64_t seed = 1;
  /// Gold sequences are truncated to this many tuples before the stop step.
  int max_decode_steps = 8;
  EncoderConfig encoder;  // vocab_size is filled in from the vocabulary
  int min_count = 1;

  void validate() const;
};

/// CF sorts by (c_s, c_e, e_s, e_e), EF by (e_s, e_e, c_s, c_e); the stop
/// tuple is appended.
std::vector<Causality> order_gold(const std::vector<Causality>& gold, Ordering ordering);

/// Loss of one step from plain distributions. Throws kTargetOutOfRange.
double step_loss(const StepDistributions& distributions, const Causality& target, Ordering ordering);

/// Everything needed to run the model on a segment.
struct ModelInputs {
  const ModelParams& params;
  const Vocabulary& vocab;
  const PrecomputedVectors* precomputed = nullptr;
};

/// Records the teacher-forced loss of one example on the tape.
ad::Var example_loss(ad::Tape& tape, const ModelInputs& model, const Example& example,
                     int max_decode_steps = 8, int pad_to = 0);

double example_loss_value(const ModelInputs& model, const Example& example,
                          int max_decode_steps = 8, int pad_to = 0);

/// Loss of one example; its gradient times weight is added into grad.
double accumulate_gradient(const ModelInputs& model, const Example& example, double weight,
                           ad::Vector& grad, int max_decode_steps = 8, int pad_to = 0);

/// Mean example loss over a mini-batch, every example padded to the longest.
double batch_loss(const ModelInputs& model, const std::vector<const Example*>& batch,
                  int max_decode_steps = 8);

/// Scales grad in place so its L2 norm is at most max_norm; returns the
/// norm before clipping.
double clip_global_norm(ad::Vector& grad, double max_norm);

class AdamOptimizer {
 public:
  AdamOptimizer(std::size_t size, double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
                double epsilon = 1e-8);
  void step(ad::Vector& params, const ad::Vector& grad);
  long steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  ad::Vector m_, v_;
};

struct EpochRecord {
  int epoch = 0;
  double mean_loss = 0.0;
  double mean_grad_norm = 0.0;  // before clipping
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochRecord> history;
};

/// Called after each epoch; returning false stops training early.
using EpochCallback = std::function<bool(const EpochRecord&, const ModelParams&)>;

/// Mini-batch Adam with global-norm clipping and seeded per-epoch shuffling.
/// Starts from `initial` when given, else from a seed-initialized model.
/// Throws kNonFiniteLoss naming the epoch and example.
TrainResult train(const std::vector<Example>& dataset, const Vocabulary& vocab,
                  const TrainConfig& config, const PrecomputedVectors* precomputed = nullptr,
                  const ModelParams* initial = nullptr, const EpochCallback& on_epoch = {});

/// Model config implied by a training config and vocabulary.
ModelConfig model_config(const TrainConfig& config, const Vocabulary& vocab);

struct GradCheckOptions {
  int probe_count = 200;
  std::uint64_t seed = 0;
  double step = 1e-5;
  /// Explicit coordinates; when non-empty they replace random sampling.
  std::vector<std::size_t> coordinates;
  int max_decode_steps = 8;
};

struct GradProbe {
  std::size_t index = 0;
  std::string group;
  double analytic = 0.0;
  double numeric = 0.0;
  double relative_error = 0.0;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::vector<GradProbe> probes;
  std::map<std::string, double> max_error_by_group;
};

/// Compares the analytic gradient of example_loss (or `analytic` when given)
/// with central differences at sampled coordinates. Probes cycle through the
/// parameter groups so every group is exercised. The error of one probe is
/// |a - n| / max(1e-8, |a| + |n|).
GradCheckResult grad_check(const ModelInputs& model, const Example& example,
                           const GradCheckOptions& options = {},
                           const ad::Vector* analytic = nullptr);

/// Full analytic gradient of example_loss.
ad::Vector analytic_gradient(const ModelInputs& model, const Example& example,
                             int max_decode_steps = 8);

}  // namespace causeptr
