#pragma once

// One generation step of the tuple decoder:
//   e_t   = additive attention over encoder states, queried by h_{t-1}
//   h_t   = LSTM([e_t ; y_avg], h_{t-1})
//   first = pointer network of the first-extracted role over [h_i ; h_t]
//   second= pointer network of the other role over [h_i ; h_t ; span(first)]
// Each pointer network is a BiLSTM (d_p/2 per direction) with separate linear
// start and end scorers and a masked softmax over positions.

#include <optional>
#include <vector>

#include "causeptr/autodiff.hpp"
#include "causeptr/corpus.hpp"
#include "causeptr/encoder.hpp"
#include "causeptr/model.hpp"

namespace causeptr {

struct DecoderState {
  ad::Var hidden;  // d_h x 1
  ad::Var cell;    // d_h x 1
  int step = 0;
};

/// Representations of the tuples generated so far; y_avg is their mean, or
/// the zero vector (the start tuple) when empty.
class TupleMemory {
 public:
  void push(ad::Var vector) { vectors_.push_back(vector); }
  std::size_t size() const { return vectors_.size(); }
  bool empty() const { return vectors_.empty(); }
  const std::vector<ad::Var>& vectors() const { return vectors_; }

  ad::Var average(ad::Tape& tape, int width) const;

 private:
  std::vector<ad::Var> vectors_;
};

/// Probability vectors over positions 0..T-1.
struct SpanDistributions {
  ad::Vector start;
  ad::Vector end;
};

struct PointerOutput {
  ad::Var start_log_probs;  // 1 x T, -inf on masked positions
  ad::Var end_log_probs;

  SpanDistributions distributions() const;
};

/// Distributions of one step keyed by role rather than extraction order.
struct StepDistributions {
  SpanDistributions cause;
  SpanDistributions effect;
};

/// Per-segment decoding context. Projections of the encoder states that do
/// not depend on the step are computed once and reused.
class DecoderContext {
 public:
  DecoderContext(ad::Tape& tape, const ModelParams& params, EncoderStates encoder);

  ad::Tape& tape() const { return *tape_; }
  const ModelParams& params() const { return *params_; }
  const EncoderStates& encoder() const { return encoder_; }
  Ordering ordering() const { return params_->config().ordering; }
  int width() const { return params_->config().d_h(); }

  DecoderState initial_state() const;

  /// Additive attention e_t = sum_i softmax_i(v . tanh(W_enc h_i + W_dec q)) h_i.
  ad::Var attention(ad::Var query);
  /// Attention weights (1 x T) for the same query.
  ad::Var attention_weights(ad::Var query);

  /// LSTM cell on [context ; memory.y_avg]; gates ordered input, forget,
  /// candidate, output. Returns the next state with step + 1.
  DecoderState decode_step(const DecoderState& state, ad::Var context, const TupleMemory& memory);

  /// Pointer network of `role`. The conditioning vector must be given exactly
  /// when role is the second-extracted one. Position 0 is admitted only by the
  /// start head of the first-extracted role (it signals stop).
  PointerOutput pointer_scores(SpanRole role, ad::Var decoder_hidden,
                               std::optional<ad::Var> conditioning = std::nullopt);

  /// tanh(W_span * mean(h_start..h_end) + b_span). Throws kInvalidSpan.
  ad::Var span_vector(Span span);
  /// tanh(W_c [cause ; effect] + b_c).
  ad::Var causality_vector(ad::Var cause_vector, ad::Var effect_vector);

  struct FirstHalf {
    DecoderState state;
    PointerOutput first;
  };
  /// attention -> decode_step -> first-extracted pointer network.
  FirstHalf begin_step(const DecoderState& state, const TupleMemory& memory);

  struct SecondHalf {
    ad::Var first_span_vector;
    PointerOutput second;
  };
  /// span_vector(first_span) -> conditioned second pointer network.
  SecondHalf finish_step(const DecoderState& advanced, Span first_span);

  struct Step {
    DecoderState state;
    PointerOutput first;
    PointerOutput second;
    ad::Var conditioning;  // span_vector of the first span
  };
  /// Full step with a given (teacher-forced or already chosen) first span.
  Step generation_step(const DecoderState& state, const TupleMemory& memory, Span first_span);

 private:
  ad::Var pointer_encoder_projection(SpanRole role, int direction);
  std::vector<std::uint8_t> mask_without_sentinel() const;

  ad::Tape* tape_;
  const ModelParams* params_;
  EncoderStates encoder_;
  std::optional<ad::Var> attention_keys_;
  std::optional<ad::Var> pointer_projection_[2][2];
  std::vector<std::uint8_t> span_mask_;
};

/// Regroups first/second pointer outputs by role.
StepDistributions by_role(Ordering ordering, const SpanDistributions& first,
                          const SpanDistributions& second);

}  // namespace causeptr
