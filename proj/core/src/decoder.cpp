#include "causeptr/decoder.hpp"

#include <string>

#include "causeptr/error.hpp"

namespace causeptr {

ad::Var TupleMemory::average(ad::Tape& tape, int width) const {
  if (vectors_.empty()) return tape.zeros(width, 1);
  for (ad::Var v : vectors_) {
    if (v.rows() != width || v.cols() != 1) {
      throw Error(ErrorCode::kDimensionMismatch, "tuple vector width differs from d_h");
    }
  }
  return ad::scale(ad::sum(vectors_), 1.0 / static_cast<double>(vectors_.size()));
}

SpanDistributions PointerOutput::distributions() const {
  return {ad::exp_log_probs(start_log_probs.value().row(0).transpose()),
          ad::exp_log_probs(end_log_probs.value().row(0).transpose())};
}

StepDistributions by_role(Ordering ordering, const SpanDistributions& first,
                          const SpanDistributions& second) {
  if (ordering == Ordering::kCauseFirst) return {first, second};
  return {second, first};
}

DecoderContext::DecoderContext(ad::Tape& tape, const ModelParams& params, EncoderStates encoder)
    : tape_(&tape), params_(&params), encoder_(std::move(encoder)) {
  if (encoder_.states.tape != &tape) {
    throw Error(ErrorCode::kDimensionMismatch, "encoder states recorded on another tape");
  }
  if (encoder_.width() != params.config().d_h()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "encoder width " + std::to_string(encoder_.width()) + " differs from d_h " +
                    std::to_string(params.config().d_h()));
  }
  if (encoder_.mask.size() != static_cast<std::size_t>(encoder_.positions()) || encoder_.mask.empty() ||
      !encoder_.mask[0]) {
    throw Error(ErrorCode::kDimensionMismatch, "encoder mask must cover every position and admit 0");
  }
  span_mask_ = mask_without_sentinel();
}

std::vector<std::uint8_t> DecoderContext::mask_without_sentinel() const {
  std::vector<std::uint8_t> m = encoder_.mask;
  m[0] = 0;
  return m;
}

DecoderState DecoderContext::initial_state() const {
  return {tape_->zeros(width(), 1), tape_->zeros(width(), 1), 0};
}

ad::Var DecoderContext::attention_weights(ad::Var query) {
  if (query.rows() != width() || query.cols() != 1) {
    throw Error(ErrorCode::kDimensionMismatch, "attention query must be d_h x 1");
  }
  const ParamLayout& l = params_->layout();
  if (!attention_keys_) {
    attention_keys_ = ad::matmul(tape_->parameter(l.att_w_enc), encoder_.states);
  }
  const ad::Var hidden =
      ad::tanh(ad::add_column(*attention_keys_, ad::matmul(tape_->parameter(l.att_w_dec), query)));
  const ad::Var scores = ad::matmul(tape_->parameter(l.att_v), hidden);
  return ad::masked_softmax(scores, encoder_.mask);
}

ad::Var DecoderContext::attention(ad::Var query) {
  return ad::matmul(encoder_.states, ad::transpose(attention_weights(query)));
}

DecoderState DecoderContext::decode_step(const DecoderState& state, ad::Var context,
                                         const TupleMemory& memory) {
  const int d = width();
  if (context.rows() != d || context.cols() != 1 || state.hidden.rows() != d ||
      state.cell.rows() != d) {
    throw Error(ErrorCode::kDimensionMismatch, "decoder step inputs must be d_h x 1");
  }
  const ParamLayout& l = params_->layout();
  const ad::Var parts[] = {context, memory.average(*tape_, d)};
  const ad::Var input = ad::concat_rows(parts);
  const ad::Var pre = ad::add(ad::add(ad::matmul(tape_->parameter(l.dec_w_x), input),
                                      ad::matmul(tape_->parameter(l.decoder.w_hh), state.hidden)),
                              tape_->parameter(l.decoder.bias));
  const ad::Var i = ad::sigmoid(ad::slice_rows(pre, 0, d));
  const ad::Var f = ad::sigmoid(ad::slice_rows(pre, d, d));
  const ad::Var g = ad::tanh(ad::slice_rows(pre, 2 * d, d));
  const ad::Var o = ad::sigmoid(ad::slice_rows(pre, 3 * d, d));
  const ad::Var cell = ad::add(ad::cmul(f, state.cell), ad::cmul(i, g));
  const ad::Var hidden = ad::cmul(o, ad::tanh(cell));
  return {hidden, cell, state.step + 1};
}

ad::Var DecoderContext::pointer_encoder_projection(SpanRole role, int direction) {
  auto& slot = pointer_projection_[static_cast<int>(role)][direction];
  if (!slot) {
    const PointerBlocks& p = params_->layout().pointer[static_cast<int>(role)];
    const auto& dir = direction == 0 ? p.forward : p.backward;
    slot = ad::matmul(tape_->parameter(dir.w_enc), encoder_.states);
  }
  return *slot;
}

PointerOutput DecoderContext::pointer_scores(SpanRole role, ad::Var decoder_hidden,
                                             std::optional<ad::Var> conditioning) {
  const int d = width();
  const bool is_second = role == second_role(ordering());
  if (is_second != conditioning.has_value()) {
    throw Error(ErrorCode::kDimensionMismatch,
                is_second ? "second-extracted pointer needs a conditioning span vector"
                          : "first-extracted pointer takes no conditioning vector");
  }
  if (decoder_hidden.rows() != d || decoder_hidden.cols() != 1 ||
      (conditioning && (conditioning->rows() != d || conditioning->cols() != 1))) {
    throw Error(ErrorCode::kDimensionMismatch, "pointer inputs must be d_h x 1");
  }

  const PointerBlocks& p = params_->layout().pointer[static_cast<int>(role)];
  ad::Var outputs[2];
  for (int direction = 0; direction < 2; ++direction) {
    const auto& dir = direction == 0 ? p.forward : p.backward;
    ad::Var shared = ad::add(ad::matmul(tape_->parameter(dir.w_dec), decoder_hidden),
                             tape_->parameter(dir.lstm.bias));
    if (conditioning) {
      shared = ad::add(shared, ad::matmul(tape_->parameter(dir.w_cond), *conditioning));
    }
    const ad::Var pre = ad::add_column(pointer_encoder_projection(role, direction), shared);
    outputs[direction] =
        ad::lstm_sequence(pre, tape_->parameter(dir.lstm.w_hh), encoder_.mask, direction == 1);
  }
  const ad::Var features = ad::concat_rows(outputs);
  const ad::Var start_scores = ad::matmul(tape_->parameter(p.w_start), features);
  const ad::Var end_scores = ad::matmul(tape_->parameter(p.w_end), features);
  const auto& start_mask = is_second ? span_mask_ : encoder_.mask;
  return {ad::masked_log_softmax(start_scores, start_mask),
          ad::masked_log_softmax(end_scores, span_mask_)};
}

ad::Var DecoderContext::span_vector(Span span) {
  const int n = encoder_.length();
  if (span.start < 1 || span.start > span.end || span.end > n) {
    throw Error(ErrorCode::kInvalidSpan, "span [" + std::to_string(span.start) + "," +
                                             std::to_string(span.end) + "] outside 1.." +
                                             std::to_string(n));
  }
  const ParamLayout& l = params_->layout();
  const ad::Var mean = ad::mean_cols(encoder_.states, span.start, span.end);
  return ad::tanh(ad::add(ad::matmul(tape_->parameter(l.span_w), mean), tape_->parameter(l.span_b)));
}

ad::Var DecoderContext::causality_vector(ad::Var cause_vector, ad::Var effect_vector) {
  const int d = width();
  if (cause_vector.rows() != d || effect_vector.rows() != d || cause_vector.cols() != 1 ||
      effect_vector.cols() != 1) {
    throw Error(ErrorCode::kDimensionMismatch, "span vectors must be d_h x 1");
  }
  const ParamLayout& l = params_->layout();
  const ad::Var parts[] = {cause_vector, effect_vector};
  return ad::tanh(ad::add(ad::matmul(tape_->parameter(l.causality_w), ad::concat_rows(parts)),
                          tape_->parameter(l.causality_b)));
}

DecoderContext::FirstHalf DecoderContext::begin_step(const DecoderState& state,
                                                     const TupleMemory& memory) {
  const ad::Var context = attention(state.hidden);
  DecoderState next = decode_step(state, context, memory);
  PointerOutput first = pointer_scores(first_role(ordering()), next.hidden);
  return {next, first};
}

DecoderContext::SecondHalf DecoderContext::finish_step(const DecoderState& advanced,
                                                       Span first_span) {
  const ad::Var conditioning = span_vector(first_span);
  return {conditioning, pointer_scores(second_role(ordering()), advanced.hidden, conditioning)};
}

DecoderContext::Step DecoderContext::generation_step(const DecoderState& state,
                                                     const TupleMemory& memory, Span first_span) {
  FirstHalf a = begin_step(state, memory);
  SecondHalf b = finish_step(a.state, first_span);
  return {a.state, a.first, b.second, b.first_span_vector};
}

}  // namespace causeptr
