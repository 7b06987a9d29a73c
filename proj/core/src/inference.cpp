#include "causeptr/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

#include "causeptr/error.hpp"

namespace causeptr {

void DecodeConfig::validate() const {
  if (max_steps < 1 || max_span_len < 0) {
    throw Error(ErrorCode::kInvalidArgument, "decode config needs max_steps >= 1, max_span_len >= 0");
  }
}

ScoredSpan constrained_span_argmax(const SpanDistributions& dist, int n, int max_span_len) {
  if (dist.start.size() <= n || dist.end.size() <= n) {
    throw Error(ErrorCode::kDimensionMismatch, "distributions shorter than n + 1");
  }
  ScoredSpan best{{0, 0}, -std::numeric_limits<double>::infinity()};
  bool found = false;
  for (int s = 1; s <= n; ++s) {
    const double ls = std::log(dist.start[s]);
    if (!(ls > -std::numeric_limits<double>::infinity())) continue;
    const int last = max_span_len > 0 ? std::min(n, s + max_span_len - 1) : n;
    for (int e = s; e <= last; ++e) {
      const double score = ls + std::log(dist.end[e]);
      if (!(score > -std::numeric_limits<double>::infinity())) continue;
      if (!found || score > best.log_score) {
        best = {{s, e}, score};
        found = true;
      }
    }
  }
  if (!found) throw Error(ErrorCode::kNoValidSpan, "no admissible span has positive probability");
  return best;
}

std::vector<Causality> decode(StepScorer& scorer, int n, Ordering ordering,
                              const DecodeConfig& config) {
  config.validate();
  std::vector<Causality> emitted;
  for (int step = 0; step < config.max_steps; ++step) {
    const SpanDistributions first = scorer.first_head();
    Eigen::Index top = 0;
    first.start.maxCoeff(&top);  // first maximum wins, so ties favour stop
    if (top == 0) break;

    Span first_span;
    Span second_span;
    try {
      first_span = constrained_span_argmax(first, n, config.max_span_len).span;
      const SpanDistributions second = scorer.second_head(first_span);
      second_span = constrained_span_argmax(second, n, config.max_span_len).span;
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kNoValidSpan) break;
      throw;
    }
    const Causality tuple = ordering == Ordering::kCauseFirst
                                ? Causality::from_spans(first_span, second_span)
                                : Causality::from_spans(second_span, first_span);
    if (config.dedup && std::find(emitted.begin(), emitted.end(), tuple) != emitted.end()) break;
    emitted.push_back(tuple);
    scorer.commit(tuple);
  }
  return emitted;
}

struct ModelScorer::Impl {
  Impl(const ModelInputs& m, const Segment& segment)
      : model(m),
        tape(m.params.values()),
        context(tape, m.params, encode(tape, m.params, segment, m.vocab, m.precomputed)) {
    state = context.initial_state();
  }

  const ModelInputs& model;
  ad::Tape tape;
  DecoderContext context;
  DecoderState state;
  TupleMemory memory;
};

ModelScorer::ModelScorer(const ModelInputs& model, const Segment& segment)
    : impl_(std::make_unique<Impl>(model, segment)) {}

ModelScorer::~ModelScorer() = default;

SpanDistributions ModelScorer::first_head() {
  auto [next, first] = impl_->context.begin_step(impl_->state, impl_->memory);
  impl_->state = next;
  return first.distributions();
}

SpanDistributions ModelScorer::second_head(Span first_span) {
  return impl_->context.finish_step(impl_->state, first_span).second.distributions();
}

void ModelScorer::commit(const Causality& tuple) {
  DecoderContext& ctx = impl_->context;
  impl_->memory.push(ctx.causality_vector(ctx.span_vector(tuple.cause()), ctx.span_vector(tuple.effect())));
}

std::vector<Causality> decode(const ModelInputs& model, const Segment& segment,
                              const DecodeConfig& config) {
  ModelScorer scorer(model, segment);
  return decode(scorer, segment.length(), model.params.config().ordering, config);
}

CorpusPredictions predict_corpus(const std::vector<Example>& examples, const ModelInputs& model,
                                 const DecodeConfig& config) {
  CorpusPredictions out;
  for (const auto& example : examples) {
    try {
      out.tuples[example.segment.id] = decode(model, example.segment, config);
    } catch (const Error& e) {
      out.failures[example.segment.id] = e.what();
    }
  }
  return out;
}

std::string write_predictions(const CorpusPredictions& predictions,
                              const std::vector<Example>& examples) {
  std::map<std::string, const Segment*> segments;
  for (const auto& e : examples) segments[e.segment.id] = &e.segment;
  std::string out;
  for (const auto& [id, tuples] : predictions.tuples) {
    auto it = segments.find(id);
    if (it == segments.end()) throw Error(ErrorCode::kUnknownId, "prediction for unknown segment " + id);
    const Segment& segment = *it->second;
    nlohmann::ordered_json record;
    record["id"] = id;
    auto list = nlohmann::ordered_json::array();
    for (const auto& c : tuples) {
      list.push_back({{"c_s", c.c_s},
                      {"c_e", c.c_e},
                      {"e_s", c.e_s},
                      {"e_e", c.e_e},
                      {"cause_text", segment.span_text(c.c_s, c.c_e)},
                      {"effect_text", segment.span_text(c.e_s, c.e_e)}});
    }
    record["tuples"] = std::move(list);
    out += record.dump();
    out += '\n';
  }
  return out;
}

std::map<std::string, std::vector<Causality>> read_predictions(std::string_view content) {
  std::map<std::string, std::vector<Causality>> out;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < content.size()) {
    auto nl = content.find('\n', pos);
    if (nl == std::string_view::npos) nl = content.size();
    const std::string line(content.substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto record = nlohmann::json::parse(line);
      auto& tuples = out[record.at("id").get<std::string>()];
      for (const auto& t : record.at("tuples")) {
        tuples.push_back({t.at("c_s").get<int>(), t.at("c_e").get<int>(), t.at("e_s").get<int>(),
                          t.at("e_e").get<int>()});
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kFormatError,
                  "prediction line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace causeptr
