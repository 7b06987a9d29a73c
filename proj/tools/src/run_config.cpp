#include "causeptr_cli/run_config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "causeptr/error.hpp"

namespace causeptr::cli {
namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

[[noreturn]] void bad_value(std::string_view key, const std::string& value, const char* want) {
  throw Error(ErrorCode::kInvalidArgument,
              "config key '" + std::string(key) + "' expects " + want + ", got '" + value + "'");
}

template <typename T>
T parse_number(std::string_view key, const std::string& value, const char* want) {
  T out{};
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) bad_value(key, value, want);
  return out;
}

}  // namespace

const std::vector<KeyInfo>& RunConfig::keys() {
  static const std::vector<KeyInfo> kKeys = {
      {"train_file", "", "training corpus (FinCausal csv or canonical jsonl)"},
      {"input", "", "input corpus for prepare/predict"},
      {"output", "", "output file for prepare/predict"},
      {"gold", "", "gold corpus for eval"},
      {"predictions", "", "prediction file for eval"},
      {"precomputed", "", "precomputed contextual vectors"},
      {"checkpoint", "", "checkpoint path (train writes output_dir/model.ckpt if empty)"},
      {"vocab", "", "vocabulary path (defaults to vocab.txt beside the checkpoint)"},
      {"output_dir", ".", "directory for train/eval/crossval outputs"},
      {"checkpoint_format", "text", "text|binary"},
      {"ordering", "CF", "CF|EF for train"},
      {"orderings", "CF,EF", "comma-separated orderings for crossval"},
      {"context_dim", "64", "contextual width"},
      {"pos_dim", "32", "POS embedding width"},
      {"recurrent", "true", "BiLSTM over token embeddings"},
      {"learning_rate", "0.001", "Adam step size"},
      {"epochs", "30", "training epochs"},
      {"batch_size", "8", "examples per update"},
      {"grad_clip_norm", "5", "global gradient norm cap"},
      {"max_decode_steps", "8", "gold tuples kept per example during training"},
      {"min_count", "1", "vocabulary frequency cutoff"},
      {"max_steps", "8", "decoding step limit"},
      {"max_span_len", "0", "longest decoded span, 0 = unlimited"},
      {"dedup", "true", "stop decoding on a repeated tuple"},
      {"k", "5", "cross-validation folds"},
      {"seed", "1", "master seed"},
      {"jobs", "1", "concurrent folds in crossval"},
  };
  return kKeys;
}

bool RunConfig::known(std::string_view key) {
  for (const auto& info : keys()) {
    if (info.name == key) return true;
  }
  return false;
}

RunConfig::RunConfig() {
  for (const auto& info : keys()) values_[info.name] = info.default_value;
}

void RunConfig::set(std::string_view key, std::string value) {
  if (!known(key)) throw Error(ErrorCode::kInvalidArgument, "unknown config key '" + std::string(key) + "'");
  values_[std::string(key)] = std::move(value);
}

void RunConfig::merge_text(std::string_view text, std::string_view origin) {
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string body = trim(line.substr(0, line.find('#')));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::kInvalidArgument,
                  std::string(origin) + ":" + std::to_string(line_no) + ": expected key = value");
    }
    set(trim(body.substr(0, eq)), trim(body.substr(eq + 1)));
  }
}

void RunConfig::merge_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot read config " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  merge_text(buf.str(), path);
}

const std::string& RunConfig::get(std::string_view key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw Error(ErrorCode::kInvalidArgument, "unknown config key '" + std::string(key) + "'");
  return it->second;
}

int RunConfig::get_int(std::string_view key) const { return parse_number<int>(key, get(key), "an integer"); }

double RunConfig::get_double(std::string_view key) const {
  const std::string& v = get(key);
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used == v.size()) return out;
  } catch (const std::exception&) {
  }
  bad_value(key, v, "a number");
}

bool RunConfig::get_bool(std::string_view key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(key, v, "true|false");
}

std::uint64_t RunConfig::get_u64(std::string_view key) const {
  return parse_number<std::uint64_t>(key, get(key), "a non-negative integer");
}

std::string RunConfig::render() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig c;
  c.ordering = parse_ordering(get("ordering"));
  c.learning_rate = get_double("learning_rate");
  c.epochs = get_int("epochs");
  c.batch_size = get_int("batch_size");
  c.grad_clip_norm = get_double("grad_clip_norm");
  c.seed = get_u64("seed");
  c.max_decode_steps = get_int("max_decode_steps");
  c.min_count = get_int("min_count");
  c.encoder.context_dim = get_int("context_dim");
  c.encoder.pos_dim = get_int("pos_dim");
  c.encoder.recurrent = get_bool("recurrent");
  c.encoder.precomputed = has_value("precomputed");
  c.validate();
  return c;
}

DecodeConfig RunConfig::decode_config() const {
  DecodeConfig c;
  c.max_steps = get_int("max_steps");
  c.max_span_len = get_int("max_span_len");
  c.dedup = get_bool("dedup");
  c.validate();
  return c;
}

std::vector<Ordering> RunConfig::orderings() const {
  std::vector<Ordering> out;
  std::istringstream in(get("orderings"));
  std::string item;
  while (std::getline(in, item, ',')) {
    const std::string name = trim(item);
    if (!name.empty()) out.push_back(parse_ordering(name));
  }
  if (out.empty() || out.size() > 2 || (out.size() == 2 && out[0] == out[1])) {
    throw Error(ErrorCode::kInvalidArgument, "orderings must be CF, EF or CF,EF");
  }
  return out;
}

}  // namespace causeptr::cli
