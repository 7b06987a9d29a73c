#include "causeptr/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "causeptr/error.hpp"

namespace causeptr {
namespace {

void check_target(const SpanDistributions& d, int start, int end, const char* role) {
  const int positions = static_cast<int>(d.start.size());
  if (start < 0 || start >= positions || end < 0 || end >= static_cast<int>(d.end.size())) {
    throw Error(ErrorCode::kTargetOutOfRange,
                std::string(role) + " target (" + std::to_string(start) + "," +
                    std::to_string(end) + ") outside 0.." + std::to_string(positions - 1));
  }
}

void check_gold_indices(const Causality& c, int n, const std::string& id) {
  if (!c.valid_for(n)) {
    throw Error(ErrorCode::kTargetOutOfRange, "gold tuple outside 1.." + std::to_string(n) +
                                                  " in segment " + id);
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || epochs < 0 || batch_size < 1 || !(grad_clip_norm > 0.0) ||
      max_decode_steps < 1 || min_count < 1) {
    throw Error(ErrorCode::kInvalidArgument, "training configuration values out of range");
  }
}

std::vector<Causality> order_gold(const std::vector<Causality>& gold, Ordering ordering) {
  std::vector<Causality> out = gold;
  if (ordering == Ordering::kCauseFirst) {
    std::sort(out.begin(), out.end());
  } else {
    std::sort(out.begin(), out.end(), [](const Causality& a, const Causality& b) {
      return std::tie(a.e_s, a.e_e, a.c_s, a.c_e) < std::tie(b.e_s, b.e_e, b.c_s, b.c_e);
    });
  }
  out.push_back(Causality::stop());
  return out;
}

double step_loss(const StepDistributions& d, const Causality& target, Ordering ordering) {
  if (target.is_stop()) {
    const SpanDistributions& first =
        first_role(ordering) == SpanRole::kCause ? d.cause : d.effect;
    if (first.start.size() == 0) {
      throw Error(ErrorCode::kTargetOutOfRange, "empty start distribution");
    }
    return -std::log(first.start[0]);
  }
  check_target(d.cause, target.c_s, target.c_e, "cause");
  check_target(d.effect, target.e_s, target.e_e, "effect");
  return -(std::log(d.cause.start[target.c_s]) + std::log(d.cause.end[target.c_e]) +
           std::log(d.effect.start[target.e_s]) + std::log(d.effect.end[target.e_e]));
}

ad::Var example_loss(ad::Tape& tape, const ModelInputs& model, const Example& example,
                     int max_decode_steps, int pad_to) {
  const Segment& segment = example.segment;
  const Ordering ordering = model.params.config().ordering;
  for (const auto& c : example.gold) check_gold_indices(c, segment.length(), segment.id);

  std::vector<Causality> targets = order_gold(example.gold, ordering);
  if (targets.size() > static_cast<std::size_t>(max_decode_steps) + 1) {
    targets.erase(targets.begin() + max_decode_steps, targets.end() - 1);
  }

  DecoderContext ctx(tape, model.params,
                     encode(tape, model.params, segment, model.vocab, model.precomputed, pad_to));
  DecoderState state = ctx.initial_state();
  TupleMemory memory;
  std::vector<ad::Var> terms;
  terms.reserve(targets.size());

  for (const Causality& target : targets) {
    auto [next, first] = ctx.begin_step(state, memory);
    state = next;
    if (target.is_stop()) {
      terms.push_back(ad::scale(ad::pick(first.start_log_probs, 0, 0), -1.0));
      break;
    }
    const Span first_span = ordering == Ordering::kCauseFirst ? target.cause() : target.effect();
    const Span second_span = ordering == Ordering::kCauseFirst ? target.effect() : target.cause();
    auto [first_vector, second] = ctx.finish_step(state, first_span);

    const PointerOutput& cause = ordering == Ordering::kCauseFirst ? first : second;
    const PointerOutput& effect = ordering == Ordering::kCauseFirst ? second : first;
    const ad::Var picks[] = {ad::pick(cause.start_log_probs, 0, target.c_s),
                             ad::pick(cause.end_log_probs, 0, target.c_e),
                             ad::pick(effect.start_log_probs, 0, target.e_s),
                             ad::pick(effect.end_log_probs, 0, target.e_e)};
    terms.push_back(ad::scale(ad::sum(picks), -1.0));

    const ad::Var second_vector = ctx.span_vector(second_span);
    const ad::Var cause_vector = ordering == Ordering::kCauseFirst ? first_vector : second_vector;
    const ad::Var effect_vector = ordering == Ordering::kCauseFirst ? second_vector : first_vector;
    memory.push(ctx.causality_vector(cause_vector, effect_vector));
  }
  return ad::scale(ad::sum(terms), 1.0 / static_cast<double>(terms.size()));
}

double example_loss_value(const ModelInputs& model, const Example& example, int max_decode_steps,
                          int pad_to) {
  ad::Tape tape(model.params.values());
  return example_loss(tape, model, example, max_decode_steps, pad_to).value()(0, 0);
}

double accumulate_gradient(const ModelInputs& model, const Example& example, double weight,
                           ad::Vector& grad, int max_decode_steps, int pad_to) {
  ad::Tape tape(model.params.values(), grad);
  const ad::Var loss = example_loss(tape, model, example, max_decode_steps, pad_to);
  tape.backward(ad::scale(loss, weight));
  return loss.value()(0, 0);
}

double batch_loss(const ModelInputs& model, const std::vector<const Example*>& batch,
                  int max_decode_steps) {
  if (batch.empty()) return 0.0;
  int longest = 0;
  for (const Example* e : batch) longest = std::max(longest, e->segment.length() + 1);
  double total = 0.0;
  for (const Example* e : batch) total += example_loss_value(model, *e, max_decode_steps, longest);
  return total / static_cast<double>(batch.size());
}

double clip_global_norm(ad::Vector& grad, double max_norm) {
  const double norm = grad.norm();
  if (norm > max_norm) grad *= max_norm / norm;
  return norm;
}

AdamOptimizer::AdamOptimizer(std::size_t size, double learning_rate, double beta1, double beta2,
                             double epsilon)
    : lr_(learning_rate),
      beta1_(beta1),
      beta2_(beta2),
      eps_(epsilon),
      m_(ad::Vector::Zero(static_cast<Eigen::Index>(size))),
      v_(ad::Vector::Zero(static_cast<Eigen::Index>(size))) {}

void AdamOptimizer::step(ad::Vector& params, const ad::Vector& grad) {
  ++t_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
  v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

ModelConfig model_config(const TrainConfig& config, const Vocabulary& vocab) {
  ModelConfig mc;
  mc.encoder = config.encoder;
  mc.encoder.vocab_size = vocab.size();
  mc.ordering = config.ordering;
  return mc;
}

TrainResult train(const std::vector<Example>& dataset, const Vocabulary& vocab,
                  const TrainConfig& config, const PrecomputedVectors* precomputed,
                  const ModelParams* initial, const EpochCallback& on_epoch) {
  config.validate();
  if (dataset.empty()) throw Error(ErrorCode::kInvalidArgument, "training set is empty");

  TrainResult result;
  if (initial) {
    result.params = *initial;
  } else {
    result.params = ModelParams(model_config(config, vocab));
    result.params.initialize(config.seed);
  }
  ModelParams& params = result.params;
  if (params.config().ordering != config.ordering) {
    throw Error(ErrorCode::kInvalidArgument, "initial parameters were built for another ordering");
  }

  const ModelInputs model{params, vocab, precomputed};
  AdamOptimizer adam(params.size(), config.learning_rate);
  std::mt19937_64 shuffler(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(dataset.size());
  ad::Vector grad(static_cast<Eigen::Index>(params.size()));
  const auto batch = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), shuffler);
    double loss_total = 0.0;
    double norm_total = 0.0;
    std::size_t updates = 0;

    for (std::size_t begin = 0; begin < order.size(); begin += batch) {
      const std::size_t end = std::min(order.size(), begin + batch);
      int longest = 0;
      for (std::size_t i = begin; i < end; ++i) {
        longest = std::max(longest, dataset[order[i]].segment.length() + 1);
      }
      grad.setZero();
      const double weight = 1.0 / static_cast<double>(end - begin);
      for (std::size_t i = begin; i < end; ++i) {
        const Example& example = dataset[order[i]];
        const double loss =
            accumulate_gradient(model, example, weight, grad, config.max_decode_steps, longest);
        if (!std::isfinite(loss)) {
          throw Error(ErrorCode::kNonFiniteLoss, "epoch " + std::to_string(epoch) + ", segment " +
                                                     example.segment.id + ": loss " +
                                                     std::to_string(loss));
        }
        loss_total += loss;
      }
      if (!grad.allFinite()) {
        throw Error(ErrorCode::kNonFiniteLoss,
                    "epoch " + std::to_string(epoch) + ": non-finite gradient in batch starting at " +
                        dataset[order[begin]].segment.id);
      }
      norm_total += clip_global_norm(grad, config.grad_clip_norm);
      ++updates;
      adam.step(params.values(), grad);
    }
    EpochRecord record{epoch, loss_total / static_cast<double>(dataset.size()),
                       norm_total / static_cast<double>(std::max<std::size_t>(updates, 1))};
    result.history.push_back(record);
    if (on_epoch && !on_epoch(record, params)) break;
  }
  return result;
}

ad::Vector analytic_gradient(const ModelInputs& model, const Example& example, int max_decode_steps) {
  ad::Vector grad = ad::Vector::Zero(static_cast<Eigen::Index>(model.params.size()));
  accumulate_gradient(model, example, 1.0, grad, max_decode_steps);
  return grad;
}

GradCheckResult grad_check(const ModelInputs& model, const Example& example,
                           const GradCheckOptions& options, const ad::Vector* analytic) {
  const ModelParams& params = model.params;
  const ad::Vector computed =
      analytic ? ad::Vector() : analytic_gradient(model, example, options.max_decode_steps);
  const ad::Vector& gradient = analytic ? *analytic : computed;
  if (static_cast<std::size_t>(gradient.size()) != params.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "analytic gradient has the wrong length");
  }

  auto group_of = [&](std::size_t index) -> const std::string& {
    for (const auto& block : params.blocks()) {
      if (index >= block.ref.offset && index < block.ref.offset + block.ref.size()) return block.group;
    }
    throw Error(ErrorCode::kInvalidArgument, "coordinate outside the parameter vector");
  };

  std::vector<std::size_t> coordinates = options.coordinates;
  if (coordinates.empty()) {
    std::mt19937_64 rng(options.seed);
    const auto groups = params.groups();
    for (int k = 0; k < options.probe_count; ++k) {
      const std::string& group = groups[static_cast<std::size_t>(k) % groups.size()];
      std::size_t group_size = 0;
      for (const auto& block : params.blocks()) {
        if (block.group == group) group_size += block.ref.size();
      }
      std::size_t pick = std::uniform_int_distribution<std::size_t>(0, group_size - 1)(rng);
      for (const auto& block : params.blocks()) {
        if (block.group != group) continue;
        if (pick < block.ref.size()) {
          coordinates.push_back(block.ref.offset + pick);
          break;
        }
        pick -= block.ref.size();
      }
    }
  }

  GradCheckResult result;
  ModelParams probe = params;
  const ModelInputs shifted{probe, model.vocab, model.precomputed};
  for (std::size_t index : coordinates) {
    const auto i = static_cast<Eigen::Index>(index);
    const double original = probe.values()[i];
    probe.values()[i] = original + options.step;
    const double plus = example_loss_value(shifted, example, options.max_decode_steps);
    probe.values()[i] = original - options.step;
    const double minus = example_loss_value(shifted, example, options.max_decode_steps);
    probe.values()[i] = original;

    GradProbe p;
    p.index = index;
    p.group = group_of(index);
    p.analytic = gradient[i];
    p.numeric = (plus - minus) / (2.0 * options.step);
    p.relative_error =
        std::abs(p.analytic - p.numeric) / std::max(1e-8, std::abs(p.analytic) + std::abs(p.numeric));
    result.max_relative_error = std::max(result.max_relative_error, p.relative_error);
    auto& group_max = result.max_error_by_group[p.group];
    group_max = std::max(group_max, p.relative_error);
    result.probes.push_back(std::move(p));
  }
  return result;
}

}  // namespace causeptr
