#include "causeptr/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "causeptr/error.hpp"

namespace causeptr {
namespace {

class LayoutBuilder {
 public:
  explicit LayoutBuilder(std::vector<ParamBlock>& blocks) : blocks_(blocks) {}

  ad::ParamRef add(std::string name, std::string group, int rows, int cols) {
    ad::ParamRef ref{offset_, rows, cols};
    offset_ += ref.size();
    blocks_.push_back({std::move(name), std::move(group), ref});
    return ref;
  }

  std::size_t total() const { return offset_; }

 private:
  std::vector<ParamBlock>& blocks_;
  std::size_t offset_ = 0;
};

bool is_bias(const ParamBlock& b) { return b.ref.cols == 1 && b.name.ends_with("bias"); }
bool is_lstm_bias(const ParamBlock& b) {
  return b.name.ends_with(".lstm.bias");
}
bool is_embedding(const ParamBlock& b) {
  return b.group == "embeddings" || b.group == "pos_embeddings";
}

}  // namespace

std::string_view ordering_name(Ordering ordering) {
  return ordering == Ordering::kCauseFirst ? "CF" : "EF";
}

Ordering parse_ordering(std::string_view name) {
  if (name == "CF" || name == "cf") return Ordering::kCauseFirst;
  if (name == "EF" || name == "ef") return Ordering::kEffectFirst;
  throw Error(ErrorCode::kInvalidArgument, "ordering must be CF or EF, got " + std::string(name));
}

void EncoderConfig::validate() const {
  if (context_dim <= 0 || pos_dim <= 0 || vocab_size <= 0) {
    throw Error(ErrorCode::kInvalidArgument, "encoder dimensions must be positive");
  }
  if (recurrent && !precomputed && context_dim % 2 != 0) {
    throw Error(ErrorCode::kInvalidArgument,
                "recurrent encoder needs an even context_dim (split across two directions)");
  }
}

void ModelConfig::validate() const {
  encoder.validate();
  if (d_p() % 2 != 0) {
    throw Error(ErrorCode::kInvalidArgument, "d_h must be even so the pointer BiLSTM can split it");
  }
}

ModelParams::ModelParams(const ModelConfig& config) : config_(config) {
  config_.validate();
  LayoutBuilder b(blocks_);
  const EncoderConfig& enc = config_.encoder;
  const int d_h = config_.d_h();
  const int hp = config_.d_p() / 2;

  if (!enc.precomputed) {
    layout_.token_embedding = b.add("token_embedding", "embeddings", enc.context_dim, enc.vocab_size);
  }
  layout_.pos_embedding = b.add("pos_embedding", "pos_embeddings", enc.pos_dim, kPosTagCount);
  if (!enc.precomputed && enc.recurrent) {
    const int he = enc.context_dim / 2;
    for (auto [dir, name] : {std::pair{&layout_.encoder_forward, "encoder.forward"},
                             std::pair{&layout_.encoder_backward, "encoder.backward"}}) {
      const std::string n(name);
      dir->w_x = b.add(n + ".w_x", "encoder_recurrent", 4 * he, enc.context_dim);
      dir->lstm.w_hh = b.add(n + ".lstm.w_hh", "encoder_recurrent", 4 * he, he);
      dir->lstm.bias = b.add(n + ".lstm.bias", "encoder_recurrent", 4 * he, 1);
    }
  }
  layout_.att_w_enc = b.add("attention.w_enc", "attention", d_h, d_h);
  layout_.att_w_dec = b.add("attention.w_dec", "attention", d_h, d_h);
  layout_.att_v = b.add("attention.v", "attention", 1, d_h);

  layout_.dec_w_x = b.add("decoder.w_x", "decoder_cell", 4 * d_h, 2 * d_h);
  layout_.decoder.w_hh = b.add("decoder.lstm.w_hh", "decoder_cell", 4 * d_h, d_h);
  layout_.decoder.bias = b.add("decoder.lstm.bias", "decoder_cell", 4 * d_h, 1);

  for (SpanRole role : {SpanRole::kCause, SpanRole::kEffect}) {
    const std::string group = role == SpanRole::kCause ? "cause_pointer" : "effect_pointer";
    const bool conditioned = role == second_role(config_.ordering);
    PointerBlocks& p = layout_.pointer[static_cast<int>(role)];
    for (auto [dir, suffix] : {std::pair{&p.forward, ".forward"}, std::pair{&p.backward, ".backward"}}) {
      const std::string n = group + suffix;
      dir->w_enc = b.add(n + ".w_enc", group, 4 * hp, d_h);
      dir->w_dec = b.add(n + ".w_dec", group, 4 * hp, d_h);
      if (conditioned) dir->w_cond = b.add(n + ".w_cond", group, 4 * hp, d_h);
      dir->lstm.w_hh = b.add(n + ".lstm.w_hh", group, 4 * hp, hp);
      dir->lstm.bias = b.add(n + ".lstm.bias", group, 4 * hp, 1);
    }
    p.w_start = b.add(group + ".w_start", group, 1, config_.d_p());
    p.w_end = b.add(group + ".w_end", group, 1, config_.d_p());
  }

  layout_.span_w = b.add("span.w", "span_projection", d_h, d_h);
  layout_.span_b = b.add("span.bias", "span_projection", d_h, 1);
  layout_.causality_w = b.add("causality.w", "causality_projection", d_h, 2 * d_h);
  layout_.causality_b = b.add("causality.bias", "causality_projection", d_h, 1);

  values_ = ad::Vector::Zero(static_cast<Eigen::Index>(b.total()));
}

std::vector<std::string> ModelParams::groups() const {
  std::vector<std::string> out;
  for (const auto& block : blocks_) {
    if (out.empty() || out.back() != block.group) out.push_back(block.group);
  }
  return out;
}

const ParamBlock& ModelParams::find(std::string_view name) const {
  for (const auto& block : blocks_) {
    if (block.name == name) return block;
  }
  throw Error(ErrorCode::kInvalidArgument, "no parameter block named " + std::string(name));
}

void ModelParams::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (const auto& block : blocks_) {
    auto m = this->block(block.ref);
    if (is_bias(block)) {
      m.setZero();
      if (is_lstm_bias(block)) {
        const int h = block.ref.rows / 4;
        m.middleRows(h, h).setConstant(1.0);
      }
      continue;
    }
    const double bound = is_embedding(block) ? 0.1 : 1.0 / std::sqrt(static_cast<double>(block.ref.cols));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = dist(rng);
    }
  }
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t ModelParams::checksum() const {
  return fnv1a(std::string_view(reinterpret_cast<const char*>(values_.data()),
                                static_cast<std::size_t>(values_.size()) * sizeof(double)));
}

std::string checkpoint_bytes(const ModelParams& params, const CheckpointHeader& header,
                             CheckpointFormat format) {
  static_assert(std::endian::native == std::endian::little,
                "binary checkpoints assume a little-endian host");
  const ModelConfig& c = params.config();
  std::ostringstream out;
  out << "causeptr-checkpoint 1\n"
      << "context_dim " << c.encoder.context_dim << "\n"
      << "pos_dim " << c.encoder.pos_dim << "\n"
      << "vocab_size " << c.encoder.vocab_size << "\n"
      << "recurrent " << (c.encoder.recurrent ? 1 : 0) << "\n"
      << "precomputed " << (c.encoder.precomputed ? 1 : 0) << "\n"
      << "ordering " << ordering_name(c.ordering) << "\n"
      << "seed " << header.seed << "\n"
      << "vocab_hash " << std::hex << header.vocab_hash << std::dec << "\n"
      << "param_count " << params.size() << "\n";
  if (format == CheckpointFormat::kText) {
    out << "data text\n";
    char buf[40];
    for (Eigen::Index i = 0; i < params.values().size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g\n", params.values()[i]);
      out << buf;
    }
  } else {
    out << "data binary\n";
    out.write(reinterpret_cast<const char*>(params.values().data()),
              static_cast<std::streamsize>(params.size() * sizeof(double)));
  }
  return out.str();
}

void write_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                      const CheckpointHeader& header, CheckpointFormat format) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  const std::string bytes = checkpoint_bytes(params, header, format);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIoError, "short write to " + path.string());
}

LoadedCheckpoint parse_checkpoint(std::string_view bytes) {
  std::map<std::string, std::string> fields;
  std::size_t pos = 0;
  std::string data_mode;
  bool first = true;
  while (pos < bytes.size()) {
    const auto nl = bytes.find('\n', pos);
    if (nl == std::string_view::npos) break;
    const std::string line(bytes.substr(pos, nl - pos));
    pos = nl + 1;
    if (first) {
      if (line != "causeptr-checkpoint 1") {
        throw Error(ErrorCode::kFormatError, "not a checkpoint file");
      }
      first = false;
      continue;
    }
    const auto space = line.find(' ');
    if (space == std::string::npos) throw Error(ErrorCode::kFormatError, "bad header line: " + line);
    const std::string key = line.substr(0, space);
    const std::string value = line.substr(space + 1);
    if (key == "data") {
      data_mode = value;
      break;
    }
    fields[key] = value;
  }
  auto get = [&](const char* key) -> const std::string& {
    auto it = fields.find(key);
    if (it == fields.end()) throw Error(ErrorCode::kFormatError, std::string("missing header ") + key);
    return it->second;
  };
  LoadedCheckpoint loaded;
  try {
    ModelConfig& c = loaded.header.config;
    c.encoder.context_dim = std::stoi(get("context_dim"));
    c.encoder.pos_dim = std::stoi(get("pos_dim"));
    c.encoder.vocab_size = std::stoi(get("vocab_size"));
    c.encoder.recurrent = get("recurrent") == "1";
    c.encoder.precomputed = get("precomputed") == "1";
    c.ordering = parse_ordering(get("ordering"));
    loaded.header.seed = std::stoull(get("seed"));
    loaded.header.vocab_hash = std::stoull(get("vocab_hash"), nullptr, 16);
  } catch (const std::logic_error& e) {
    throw Error(ErrorCode::kFormatError, std::string("bad checkpoint header: ") + e.what());
  }
  loaded.params = ModelParams(loaded.header.config);
  const std::size_t count = std::stoull(get("param_count"));
  if (count != loaded.params.size()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "checkpoint holds " + std::to_string(count) + " values, layout needs " +
                    std::to_string(loaded.params.size()));
  }
  auto& values = loaded.params.values();
  if (data_mode == "binary") {
    if (bytes.size() - pos != count * sizeof(double)) {
      throw Error(ErrorCode::kFormatError, "binary payload has wrong length");
    }
    std::memcpy(values.data(), bytes.data() + pos, count * sizeof(double));
  } else if (data_mode == "text") {
    std::istringstream in{std::string(bytes.substr(pos))};
    for (std::size_t i = 0; i < count; ++i) {
      std::string token;
      if (!(in >> token)) throw Error(ErrorCode::kFormatError, "text payload too short");
      values[static_cast<Eigen::Index>(i)] = std::strtod(token.c_str(), nullptr);
    }
    std::string extra;
    if (in >> extra) throw Error(ErrorCode::kFormatError, "text payload too long");
  } else {
    throw Error(ErrorCode::kFormatError, "unknown data mode '" + data_mode + "'");
  }
  return loaded;
}

LoadedCheckpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_checkpoint(buffer.str());
}

}  // namespace causeptr
