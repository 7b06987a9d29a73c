#include "causeptr_cli/commands.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "causeptr/error.hpp"
#include "causeptr/evaluation.hpp"

namespace causeptr::cli {
namespace fs = std::filesystem;
namespace {

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

const std::string& require(const RunConfig& config, std::string_view key) {
  const std::string& v = config.get(key);
  if (v.empty()) throw Error(ErrorCode::kInvalidArgument, "missing required setting '" + std::string(key) + "'");
  return v;
}

fs::path directory_of(const fs::path& file) {
  return file.has_parent_path() ? file.parent_path() : fs::path(".");
}

void snapshot(const RunConfig& config, const fs::path& dir, std::string_view command) {
  write_atomic(dir / (std::string(command) + ".resolved.cfg"), config.render());
}

std::vector<Example> load_examples(const fs::path& path, bool allow_empty) {
  if (allow_empty && read_text(path).find_first_not_of(" \t\r\n") == std::string::npos) return {};
  return load_corpus_file(path).examples;
}

std::optional<PrecomputedVectors> load_precomputed(const RunConfig& config) {
  if (!config.has_value("precomputed")) return std::nullopt;
  return PrecomputedVectors::load(config.get("precomputed"));
}

int exit_code_for(ErrorCode code) {
  switch (error_class(code)) {
    case ErrorClass::kUsage: return kExitUsage;
    case ErrorClass::kNumeric: return kExitNumeric;
    case ErrorClass::kData: return kExitData;
  }
  return kExitData;
}

}  // namespace

void write_atomic(const fs::path& path, std::string_view content) {
  const fs::path dir = directory_of(path);
  std::error_code ec;
  fs::create_directories(dir, ec);
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIoError, "cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out.flush()) throw Error(ErrorCode::kIoError, "short write to " + tmp.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::kIoError, "cannot rename onto " + path.string() + ": " + ec.message());
}

void cmd_prepare(const RunConfig& config, std::ostream& out) {
  const fs::path input = require(config, "input");
  const fs::path output = require(config, "output");
  const ParsedCorpus parsed = load_corpus_file(input);
  if (parsed.examples.empty()) throw Error(ErrorCode::kTooFewExamples, "no usable examples in " + input.string());

  const IngestReport& r = parsed.report;
  nlohmann::ordered_json report = {{"rows", r.rows},
                                   {"segments", r.segments},
                                   {"tuples", r.tuples},
                                   {"skipped_rows", r.skipped_rows},
                                   {"alignment_failures", r.alignment_failures},
                                   {"overlap_violations", r.overlap_violations},
                                   {"warnings", r.warnings}};
  write_atomic(output, write_canonical(parsed.examples));
  fs::path report_path = output;
  report_path += ".report.json";
  write_atomic(report_path, report.dump(2) + "\n");
  snapshot(config, directory_of(output), "prepare");
  out << "prepared " << r.segments << " segments, " << r.tuples << " tuples from " << r.rows << " rows ("
      << r.skipped_rows << " skipped)\n";
  for (const auto& w : r.warnings) out << "warning: " << w << "\n";
}

void cmd_train(const RunConfig& config, std::ostream& out) {
  const TrainConfig tc = config.train_config();
  const auto examples = load_examples(require(config, "train_file"), false);
  if (examples.empty()) throw Error(ErrorCode::kTooFewExamples, "training corpus is empty");
  const auto precomputed = load_precomputed(config);
  const fs::path dir = config.get("output_dir");
  const fs::path checkpoint = config.has_value("checkpoint") ? fs::path(config.get("checkpoint")) : dir / "model.ckpt";
  const std::string format = config.get("checkpoint_format");
  if (format != "text" && format != "binary") {
    throw Error(ErrorCode::kInvalidArgument, "checkpoint_format must be text or binary");
  }

  const Vocabulary vocab = build_vocab(examples, tc.min_count);
  const TrainResult result = train(examples, vocab, tc, precomputed ? &*precomputed : nullptr);

  std::string history = "epoch\tmean_loss\tmean_grad_norm\n";
  for (const auto& h : result.history) {
    char line[96];
    std::snprintf(line, sizeof line, "%d\t%.10g\t%.10g\n", h.epoch, h.mean_loss, h.mean_grad_norm);
    history += line;
  }
  write_atomic(checkpoint, checkpoint_bytes(result.params, {result.params.config(), vocab.hash(), tc.seed},
                                            format == "text" ? CheckpointFormat::kText
                                                             : CheckpointFormat::kBinary));
  write_atomic(directory_of(checkpoint) / "vocab.txt", vocab.serialize());
  write_atomic(dir / "history.tsv", history);
  snapshot(config, dir, "train");
  out << "trained " << ordering_name(tc.ordering) << " model on " << examples.size() << " examples for "
      << result.history.size() << " epochs";
  if (!result.history.empty()) out << ", final loss " << result.history.back().mean_loss;
  out << "\ncheckpoint " << checkpoint.string() << " (checksum " << std::hex << result.params.checksum()
      << std::dec << ")\n";
}

void cmd_predict(const RunConfig& config, std::ostream& out) {
  const fs::path checkpoint = require(config, "checkpoint");
  const fs::path output = require(config, "output");
  const LoadedCheckpoint loaded = read_checkpoint(checkpoint);
  const fs::path vocab_path =
      config.has_value("vocab") ? fs::path(config.get("vocab")) : directory_of(checkpoint) / "vocab.txt";
  const Vocabulary vocab = Vocabulary::parse(read_text(vocab_path));
  if (vocab.hash() != loaded.header.vocab_hash) {
    throw Error(ErrorCode::kFormatError, "vocabulary " + vocab_path.string() + " does not match the checkpoint");
  }
  const auto precomputed = load_precomputed(config);
  if (loaded.header.config.encoder.precomputed && !precomputed) {
    throw Error(ErrorCode::kInvalidArgument, "checkpoint expects precomputed vectors; set 'precomputed'");
  }
  const auto examples = load_examples(require(config, "input"), true);
  const ModelInputs model{loaded.params, vocab, precomputed ? &*precomputed : nullptr};
  const CorpusPredictions predictions = predict_corpus(examples, model, config.decode_config());
  if (!predictions.failures.empty()) {
    const auto& [id, message] = *predictions.failures.begin();
    throw Error(ErrorCode::kFormatError, std::to_string(predictions.failures.size()) +
                                             " segment(s) failed, first " + id + ": " + message);
  }
  write_atomic(output, write_predictions(predictions, examples));
  snapshot(config, directory_of(output), "predict");
  std::size_t tuples = 0;
  for (const auto& [id, list] : predictions.tuples) tuples += list.size();
  out << "predicted " << tuples << " tuples for " << examples.size() << " segments\n";
}

void cmd_eval(const RunConfig& config, std::ostream& out) {
  const auto gold = load_examples(require(config, "gold"), false);
  const auto predictions = read_predictions(read_text(require(config, "predictions")));
  const EvalReport report = evaluate(gold, predictions);
  const fs::path dir = config.get("output_dir");
  write_atomic(dir / "eval.json", report_json(report));
  write_atomic(dir / "eval.tsv", report_tsv(report));
  snapshot(config, dir, "eval");
  out << report_tsv(report);
}

void cmd_crossval(const RunConfig& config, std::ostream& out) {
  const auto examples = load_examples(require(config, "train_file"), false);
  if (config.has_value("precomputed")) {
    throw Error(ErrorCode::kInvalidArgument, "crossval trains its own encoders; unset 'precomputed'");
  }
  CrossValOptions options;
  options.k = config.get_int("k");
  options.seed = config.get_u64("seed");
  options.jobs = config.get_int("jobs");
  options.train = config.train_config();
  options.decode = config.decode_config();
  if (options.jobs < 1) throw Error(ErrorCode::kInvalidArgument, "jobs must be >= 1");

  std::vector<CrossValReport> runs;
  for (Ordering o : config.orderings()) {
    options.train.ordering = o;
    runs.push_back(crossval(examples, options));
  }
  std::optional<SignificanceResult> significance;
  if (runs.size() == 2) {
    try {
      significance = paired_significance(runs[0].fold_token_f1(), runs[1].fold_token_f1());
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kDegenerateVariance) throw;
      // Identical differences on every fold: the statistic is undefined.
      const double nan = std::numeric_limits<double>::quiet_NaN();
      SignificanceResult s;
      s.mean_difference = summarize(runs[0].fold_token_f1()).mean - summarize(runs[1].fold_token_f1()).mean;
      s.t_statistic = nan;
      s.p_value = nan;
      s.degrees_of_freedom = options.k - 1;
      significance = s;
    }
  }
  const fs::path dir = config.get("output_dir");
  write_atomic(dir / "crossval.json", crossval_json(runs, significance));
  write_atomic(dir / "crossval.tsv", crossval_tsv(runs, significance));
  snapshot(config, dir, "crossval");
  out << crossval_tsv(runs, significance);
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Cause/effect span extraction with pointer networks", "causeptr"};
  app.require_subcommand(1);

  using Handler = void (*)(const RunConfig&, std::ostream&);
  struct Sub {
    const char* name;
    const char* help;
    Handler handler;
  };
  const Sub subs[] = {
      {"prepare", "convert a FinCausal csv into the canonical corpus", cmd_prepare},
      {"train", "train a model and write checkpoint, vocabulary and history", cmd_train},
      {"predict", "decode causality tuples with a trained checkpoint", cmd_predict},
      {"eval", "score predictions against gold tuples", cmd_eval},
      {"crossval", "k-fold cross-validation, optionally comparing CF and EF", cmd_crossval},
  };

  std::string config_file;
  std::map<std::string, std::string> overrides;
  std::vector<std::string> positionals;
  Handler chosen = nullptr;
  std::string chosen_name;
  for (const Sub& s : subs) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    sub->add_option("-c,--config", config_file, "key = value configuration file");
    for (const auto& info : RunConfig::keys()) {
      sub->add_option_function<std::string>(
          "--" + info.name, [&overrides, name = info.name](const std::string& v) { overrides[name] = v; },
          info.help + " [" + info.default_value + "]");
    }
    if (std::string_view(s.name) == "prepare") {
      sub->add_option("paths", positionals, "INPUT OUTPUT")->expected(0, 2);
    }
    sub->callback([&chosen, &chosen_name, s] {
      chosen = s.handler;
      chosen_name = s.name;
    });
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  try {
    RunConfig config;
    if (!config_file.empty()) config.merge_file(config_file);
    if (positionals.size() >= 1) config.set("input", positionals[0]);
    if (positionals.size() >= 2) config.set("output", positionals[1]);
    for (const auto& [k, v] : overrides) config.set(k, v);
    chosen(config, out);
    return kExitOk;
  } catch (const Error& e) {
    err << "causeptr " << chosen_name << ": " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "causeptr " << chosen_name << ": " << e.what() << "\n";
    return kExitData;
  }
}

}  // namespace causeptr::cli
