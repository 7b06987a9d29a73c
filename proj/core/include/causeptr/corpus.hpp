#pragma once

// Corpus model: tokenized segments with a stop sentinel at index 0, gold
// cause/effect tuples over token indices, FinCausal-style ingestion and
// k-fold splitting.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "causeptr/pos_tagger.hpp"

namespace causeptr {

inline constexpr std::string_view kSentinelText = "[unused0]";

struct Token {
  std::string text;
  std::size_t char_start = 0;  // byte offset into Segment::raw_text, inclusive
  std::size_t char_end = 0;    // exclusive
  PosTag pos = PosTag::kOther;

  friend bool operator==(const Token&, const Token&) = default;
};

Token sentinel_token();

struct Segment {
  std::string id;
  std::string raw_text;
  std::vector<Token> tokens;  // tokens[0] is the sentinel

  /// Number of real (non-sentinel) tokens.
  int length() const { return static_cast<int>(tokens.size()) - 1; }

  /// Raw text covered by tokens [first, last] (inclusive), sliced by offsets.
  std::string span_text(int first, int last) const;

  friend bool operator==(const Segment&, const Segment&) = default;
};

/// Inclusive token range [start, end].
struct Span {
  int start = 0;
  int end = 0;

  friend bool operator==(const Span&, const Span&) = default;
  friend auto operator<=>(const Span&, const Span&) = default;
};

/// One causality y_t = (c_s, c_e, e_s, e_e). The stop tuple is (0,-1,-1,-1).
struct Causality {
  int c_s = 0;
  int c_e = -1;
  int e_s = -1;
  int e_e = -1;

  static constexpr Causality stop() { return {0, -1, -1, -1}; }
  static Causality from_spans(Span cause, Span effect) {
    return {cause.start, cause.end, effect.start, effect.end};
  }

  bool is_stop() const { return c_s == 0; }
  Span cause() const { return {c_s, c_e}; }
  Span effect() const { return {e_s, e_e}; }

  /// True if both spans lie in [1, n] and the two spans are disjoint.
  bool valid_for(int n) const;

  friend bool operator==(const Causality&, const Causality&) = default;
  friend auto operator<=>(const Causality&, const Causality&) = default;
};

struct Example {
  Segment segment;
  std::vector<Causality> gold;

  friend bool operator==(const Example&, const Example&) = default;
};

struct FoldSplit {
  int k = 0;
  std::map<std::string, int> assignments;

  std::vector<int> fold_sizes() const;
};

/// Whitespace split, then leading/trailing punctuation peeled off one
/// character per token. Offsets index into raw_text. Throws kEmptyText.
std::vector<Token> tokenize(std::string_view raw_text);

/// Builds a Segment (sentinel + tagged tokens) from raw text.
Segment make_segment(std::string id, std::string raw_text);

/// Smallest token range [ts, te] covering the span's character extent. With no
/// hint the leftmost occurrence of span_text is used. Boundaries may fall
/// inside a token by at most kAlignSlack bytes on either side.
inline constexpr std::size_t kAlignSlack = 2;
Span align_span(const Segment& segment, std::string_view span_text,
                std::optional<std::pair<std::size_t, std::size_t>> char_hint = std::nullopt);

struct IngestReport {
  std::size_t rows = 0;
  std::size_t segments = 0;
  std::size_t tuples = 0;
  std::size_t skipped_rows = 0;
  std::size_t alignment_failures = 0;
  std::size_t overlap_violations = 0;
  std::vector<std::string> warnings;
};

struct ParsedCorpus {
  std::vector<Example> examples;
  IngestReport report;
};

/// Semicolon-delimited FinCausal layout: Index; Text; Cause; Effect with
/// optional Cause_Start/Cause_End/Effect_Start/Effect_End (code point offsets)
/// and an optional POS column (whitespace separated tag names, one per token).
/// Rows whose Index shares the prefix before the final '.' and whose Text is
/// identical are merged into one Example. Alignment and overlap failures skip
/// the row; a wrong column count throws kMalformedRow.
ParsedCorpus parse_fincausal(std::string_view content);
ParsedCorpus parse_fincausal_file(const std::filesystem::path& path);

/// Writes examples back out in the FinCausal layout with offset columns, one
/// row per gold tuple (examples without gold get one row with empty spans).
std::string write_fincausal(const std::vector<Example>& examples);

/// Canonical corpus: one JSON object per line,
/// {id, raw_text, tokens:[{text,start,end,pos}], gold:[{c_s,c_e,e_s,e_e}]}.
std::string write_canonical(const std::vector<Example>& examples);
std::vector<Example> read_canonical(std::string_view content);

/// Loads either a canonical JSON-lines corpus or a FinCausal file, detected by
/// the first non-blank character.
ParsedCorpus load_corpus_file(const std::filesystem::path& path);

/// Checks every Segment/Example invariant; throws kFormatError on violation.
void validate_example(const Example& example);

/// Seeded shuffle of example ids then round-robin fold assignment.
FoldSplit make_folds(const std::vector<Example>& examples, int k, std::uint64_t seed);

}  // namespace causeptr
