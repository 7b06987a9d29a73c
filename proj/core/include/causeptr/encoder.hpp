#pragma once

// Encoder: per-token hidden states h_i = [contextual_i ; pos_embedding(tag_i)].
// The contextual part is either a trainable token embedding (optionally run
// through a BiLSTM) or a precomputed vector adopted verbatim.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "causeptr/autodiff.hpp"
#include "causeptr/corpus.hpp"
#include "causeptr/model.hpp"

namespace causeptr {

class Vocabulary {
 public:
  static constexpr int kSentinelId = 0;
  static constexpr int kUnkId = 1;
  static constexpr int kPadId = 2;

  /// Only the reserved entries.
  Vocabulary();

  /// Appends a token if absent; returns its id.
  int add(const std::string& token);
  /// Id of token, or kUnkId.
  int id(std::string_view token) const;
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  int size() const { return static_cast<int>(tokens_.size()); }

  std::uint64_t hash() const;
  /// One token per line, in id order (reserved entries included).
  std::string serialize() const;
  static Vocabulary parse(std::string_view text);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

/// Tokens with frequency >= min_count, ordered by descending frequency then
/// lexicographically.
Vocabulary build_vocab(const std::vector<Example>& corpus, int min_count);

/// Per-position ids; position 0 maps to the sentinel id.
std::vector<int> token_ids(const Vocabulary& vocab, const Segment& segment);

/// Encoder output: a d_h x T matrix (one column per position, column 0 is the
/// sentinel) plus per-position validity. Padded positions are invalid.
struct EncoderStates {
  ad::Var states;
  std::vector<std::uint8_t> mask;

  int positions() const { return states.cols(); }
  int width() const { return states.rows(); }
  /// Number of valid positions minus the sentinel.
  int length() const;
};

/// Externally produced contextual vectors keyed by segment id. File format:
/// a "> <id>" line opening each record, followed by one line of
/// whitespace-separated decimals per position (sentinel first).
class PrecomputedVectors {
 public:
  static PrecomputedVectors parse(std::string_view text);
  static PrecomputedVectors load(const std::filesystem::path& path);

  /// context_dim x (n+1) matrix for the segment. Throws kMissingSegment,
  /// kWidthMismatch or kRowCountMismatch.
  ad::Matrix contextual(const Segment& segment, int context_dim) const;

  std::size_t size() const { return vectors_.size(); }
  std::string serialize() const;
  void insert(std::string id, ad::Matrix rows_by_position);

 private:
  std::map<std::string, ad::Matrix> vectors_;  // (n+1) x width, row per position
};

/// Encodes one segment. pad_to > n+1 appends masked padding columns.
EncoderStates encode(ad::Tape& tape, const ModelParams& params, const Segment& segment,
                     const Vocabulary& vocab, const PrecomputedVectors* precomputed = nullptr,
                     int pad_to = 0);

/// Forward-only convenience: (n+1) x d_h matrix, row i = h_i.
ad::Matrix encode_rows(const ModelParams& params, const Segment& segment, const Vocabulary& vocab,
                       const PrecomputedVectors* precomputed = nullptr);

}  // namespace causeptr
