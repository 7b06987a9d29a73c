#include "causeptr/encoder.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "causeptr/error.hpp"

namespace causeptr {

Vocabulary::Vocabulary() {
  add(std::string(kSentinelText));
  add("[UNK]");
  add("[PAD]");
}

int Vocabulary::add(const std::string& token) {
  auto [it, inserted] = ids_.emplace(token, static_cast<int>(tokens_.size()));
  if (inserted) tokens_.push_back(token);
  return it->second;
}

int Vocabulary::id(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnkId : it->second;
}

std::uint64_t Vocabulary::hash() const { return fnv1a(serialize()); }

std::string Vocabulary::serialize() const {
  std::string out;
  for (const auto& t : tokens_) {
    out += t;
    out += '\n';
  }
  return out;
}

Vocabulary Vocabulary::parse(std::string_view text) {
  Vocabulary vocab;
  std::vector<std::string> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    lines.emplace_back(text.substr(pos, nl - pos));
    pos = nl + 1;
  }
  if (lines.size() < 3 || lines[0] != vocab.token(0) || lines[1] != vocab.token(1) ||
      lines[2] != vocab.token(2)) {
    throw Error(ErrorCode::kFormatError, "vocabulary file lacks the reserved entries");
  }
  for (std::size_t i = 3; i < lines.size(); ++i) {
    if (vocab.add(lines[i]) != static_cast<int>(i)) {
      throw Error(ErrorCode::kFormatError, "duplicate vocabulary entry " + lines[i]);
    }
  }
  return vocab;
}

Vocabulary build_vocab(const std::vector<Example>& corpus, int min_count) {
  std::map<std::string, int> counts;
  for (const auto& example : corpus) {
    for (int t = 1; t <= example.segment.length(); ++t) {
      ++counts[example.segment.tokens[static_cast<std::size_t>(t)].text];
    }
  }
  std::vector<std::pair<std::string, int>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary vocab;
  for (const auto& [token, count] : ranked) {
    if (count >= min_count) vocab.add(token);
  }
  return vocab;
}

std::vector<int> token_ids(const Vocabulary& vocab, const Segment& segment) {
  std::vector<int> ids;
  ids.reserve(segment.tokens.size());
  ids.push_back(Vocabulary::kSentinelId);
  for (int t = 1; t <= segment.length(); ++t) {
    ids.push_back(vocab.id(segment.tokens[static_cast<std::size_t>(t)].text));
  }
  return ids;
}

int EncoderStates::length() const {
  return static_cast<int>(std::count(mask.begin(), mask.end(), std::uint8_t{1})) - 1;
}

PrecomputedVectors PrecomputedVectors::parse(std::string_view text) {
  PrecomputedVectors out;
  std::string current;
  std::vector<std::vector<double>> rows;
  bool open = false;
  auto flush = [&] {
    if (!open) return;
    const std::size_t width = rows.empty() ? 0 : rows.front().size();
    ad::Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != width) {
        throw Error(ErrorCode::kWidthMismatch,
                    "segment " + current + " has rows of differing width");
      }
      for (std::size_t c = 0; c < width; ++c) {
        m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
      }
    }
    out.insert(current, std::move(m));
    rows.clear();
  };

  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    if (line.front() == '>') {
      flush();
      std::istringstream header(line.substr(1));
      if (!(header >> current)) {
        throw Error(ErrorCode::kFormatError, "line " + std::to_string(line_no) + ": record without id");
      }
      open = true;
      continue;
    }
    if (!open) {
      throw Error(ErrorCode::kFormatError, "line " + std::to_string(line_no) + ": vector before any record header");
    }
    std::istringstream values(line);
    std::vector<double> row;
    std::string token;
    while (values >> token) {
      char* end = nullptr;
      const double v = std::strtod(token.c_str(), &end);
      if (end != token.c_str() + token.size()) {
        throw Error(ErrorCode::kFormatError, "line " + std::to_string(line_no) + ": bad number " + token);
      }
      row.push_back(v);
    }
    rows.push_back(std::move(row));
  }
  flush();
  return out;
}

PrecomputedVectors PrecomputedVectors::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str());
}

void PrecomputedVectors::insert(std::string id, ad::Matrix rows_by_position) {
  vectors_[std::move(id)] = std::move(rows_by_position);
}

std::string PrecomputedVectors::serialize() const {
  std::string out;
  char buf[40];
  for (const auto& [id, m] : vectors_) {
    out += "> " + id + "\n";
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        std::snprintf(buf, sizeof buf, c == 0 ? "%.17g" : " %.17g", m(r, c));
        out += buf;
      }
      out += '\n';
    }
  }
  return out;
}

ad::Matrix PrecomputedVectors::contextual(const Segment& segment, int context_dim) const {
  auto it = vectors_.find(segment.id);
  if (it == vectors_.end()) {
    throw Error(ErrorCode::kMissingSegment, "no precomputed vectors for segment " + segment.id);
  }
  const ad::Matrix& m = it->second;
  if (m.rows() != segment.length() + 1) {
    throw Error(ErrorCode::kRowCountMismatch,
                "segment " + segment.id + " has " + std::to_string(m.rows()) + " vectors, needs " +
                    std::to_string(segment.length() + 1) + " (sentinel row included)");
  }
  if (m.cols() != context_dim) {
    throw Error(ErrorCode::kWidthMismatch, "segment " + segment.id + " vectors have width " +
                                               std::to_string(m.cols()) + ", expected " +
                                               std::to_string(context_dim));
  }
  return m.transpose();
}

EncoderStates encode(ad::Tape& tape, const ModelParams& params, const Segment& segment,
                     const Vocabulary& vocab, const PrecomputedVectors* precomputed, int pad_to) {
  const ModelConfig& config = params.config();
  const EncoderConfig& enc = config.encoder;
  const ParamLayout& layout = params.layout();
  const int valid = segment.length() + 1;
  const int positions = std::max(valid, pad_to);

  if (enc.precomputed != (precomputed != nullptr)) {
    throw Error(ErrorCode::kDimensionMismatch,
                enc.precomputed ? "model expects precomputed vectors but none were given"
                                : "precomputed vectors given to a model with trainable embeddings");
  }
  if (!enc.precomputed && vocab.size() != enc.vocab_size) {
    throw Error(ErrorCode::kDimensionMismatch,
                "vocabulary has " + std::to_string(vocab.size()) + " entries, model expects " +
                    std::to_string(enc.vocab_size));
  }

  EncoderStates out;
  out.mask.assign(static_cast<std::size_t>(positions), 0);
  std::fill(out.mask.begin(), out.mask.begin() + valid, std::uint8_t{1});

  std::vector<int> tags;
  tags.reserve(static_cast<std::size_t>(positions));
  for (const Token& token : segment.tokens) tags.push_back(static_cast<int>(token.pos));
  tags.resize(static_cast<std::size_t>(positions), static_cast<int>(PosTag::kOther));
  const ad::Var pos_part = tape.gather_columns(layout.pos_embedding, tags);

  ad::Var contextual;
  if (precomputed) {
    ad::Matrix m = ad::Matrix::Zero(enc.context_dim, positions);
    m.leftCols(valid) = precomputed->contextual(segment, enc.context_dim);
    contextual = tape.constant(std::move(m));
  } else {
    std::vector<int> ids = token_ids(vocab, segment);
    ids.resize(static_cast<std::size_t>(positions), Vocabulary::kPadId);
    const ad::Var embedded = tape.gather_columns(layout.token_embedding, ids);
    if (enc.recurrent) {
      ad::Var directions[2];
      int d = 0;
      for (const auto* dir : {&layout.encoder_forward, &layout.encoder_backward}) {
        const ad::Var pre = ad::add_column(ad::matmul(tape.parameter(dir->w_x), embedded),
                                           tape.parameter(dir->lstm.bias));
        directions[d] = ad::lstm_sequence(pre, tape.parameter(dir->lstm.w_hh), out.mask, d == 1);
        ++d;
      }
      contextual = ad::concat_rows(directions);
    } else {
      contextual = embedded;
    }
  }
  const ad::Var parts[] = {contextual, pos_part};
  out.states = ad::concat_rows(parts);
  return out;
}

ad::Matrix encode_rows(const ModelParams& params, const Segment& segment, const Vocabulary& vocab,
                       const PrecomputedVectors* precomputed) {
  ad::Tape tape(params.values());
  return encode(tape, params, segment, vocab, precomputed).states.value().transpose();
}

}  // namespace causeptr
