#include "causeptr/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "causeptr/error.hpp"

namespace causeptr {
namespace {

constexpr std::string_view kPunctuation = ".,;:!?\"'()[]%$";

bool is_split_punct(char c) { return kPunctuation.find(c) != std::string_view::npos; }

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

// Byte offset of the given code point index in UTF-8 text (clamped to size).
std::size_t codepoint_to_byte(std::string_view text, std::size_t codepoint) {
  std::size_t seen = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if ((static_cast<unsigned char>(text[i]) & 0xC0) == 0x80) continue;
    if (seen == codepoint) return i;
    ++seen;
  }
  return text.size();
}

std::size_t byte_to_codepoint(std::string_view text, std::size_t byte) {
  std::size_t count = 0;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if ((static_cast<unsigned char>(text[i]) & 0xC0) != 0x80) ++count;
  }
  return count;
}

// Semicolon-delimited records with double-quote escaping. Quoted fields may
// span lines. Returns records with their 1-based starting line number.
std::vector<std::pair<std::size_t, std::vector<std::string>>> split_records(
    std::string_view content) {
  std::vector<std::pair<std::size_t, std::vector<std::string>>> records;
  std::vector<std::string> fields;
  std::string field;
  bool in_quotes = false;
  bool field_quoted = false;
  std::size_t line = 1;
  std::size_t record_line = 1;
  bool record_has_content = false;

  auto end_field = [&] {
    fields.push_back(field_quoted ? field : std::string(trim(field)));
    field.clear();
    field_quoted = false;
  };
  auto end_record = [&] {
    end_field();
    if (record_has_content) records.emplace_back(record_line, std::move(fields));
    fields.clear();
    record_has_content = false;
  };

  for (std::size_t i = 0; i < content.size(); ++i) {
    const char c = content[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < content.size() && content[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    if (c == '"' && trim(field).empty()) {
      field.clear();
      in_quotes = true;
      field_quoted = true;
      record_has_content = true;
    } else if (c == ';') {
      end_field();
      record_has_content = true;
    } else if (c == '\n') {
      end_record();
      ++line;
      record_line = line;
    } else if (c == '\r') {
      // tolerate CRLF
    } else {
      if (!field_quoted) field.push_back(c);
      if (!is_space(c)) record_has_content = true;
    }
  }
  if (in_quotes) {
    throw Error(ErrorCode::kMalformedRow,
                "unterminated quoted field starting on line " + std::to_string(record_line));
  }
  end_record();
  return records;
}

std::string quote_field(std::string_view field) {
  const bool needs_quotes = field.find_first_of(";\"\n\r") != std::string_view::npos ||
                            (!field.empty() && (is_space(field.front()) || is_space(field.back())));
  if (!needs_quotes) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += '"';
  return out;
}

std::optional<std::size_t> parse_offset(const std::string& s) {
  const std::string_view t = trim(s);
  if (t.empty()) return std::nullopt;
  std::size_t value = 0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (ec != std::errc() || ptr != t.data() + t.size()) return std::nullopt;
  return value;
}

std::string group_prefix(std::string_view index) {
  const auto dot = index.rfind('.');
  if (dot == std::string_view::npos || dot == 0) return std::string(index);
  return std::string(index.substr(0, dot));
}

bool spans_overlap(Span a, Span b) { return a.start <= b.end && b.start <= a.end; }

}  // namespace

Token sentinel_token() { return Token{std::string(kSentinelText), 0, 0, PosTag::kSentinel}; }

std::string Segment::span_text(int first, int last) const {
  if (first < 1 || last < first || last >= static_cast<int>(tokens.size())) {
    throw Error(ErrorCode::kInvalidSpan, "span [" + std::to_string(first) + "," +
                                             std::to_string(last) + "] outside segment " + id);
  }
  const std::size_t begin = tokens[static_cast<std::size_t>(first)].char_start;
  const std::size_t end = tokens[static_cast<std::size_t>(last)].char_end;
  return raw_text.substr(begin, end - begin);
}

bool Causality::valid_for(int n) const {
  if (c_s < 1 || c_s > c_e || c_e > n) return false;
  if (e_s < 1 || e_s > e_e || e_e > n) return false;
  return !spans_overlap(cause(), effect());
}

std::vector<int> FoldSplit::fold_sizes() const {
  std::vector<int> sizes(static_cast<std::size_t>(std::max(k, 0)), 0);
  for (const auto& [id, fold] : assignments) ++sizes.at(static_cast<std::size_t>(fold));
  return sizes;
}

std::vector<Token> tokenize(std::string_view raw_text) {
  std::vector<Token> tokens;
  std::size_t i = 0;
  while (i < raw_text.size()) {
    while (i < raw_text.size() && is_space(raw_text[i])) ++i;
    if (i >= raw_text.size()) break;
    std::size_t word_end = i;
    while (word_end < raw_text.size() && !is_space(raw_text[word_end])) ++word_end;

    std::size_t lo = i;
    std::size_t hi = word_end;
    std::vector<Token> trailing;
    while (lo < hi && is_split_punct(raw_text[lo])) {
      tokens.push_back({std::string(1, raw_text[lo]), lo, lo + 1, PosTag::kOther});
      ++lo;
    }
    while (hi > lo && is_split_punct(raw_text[hi - 1])) {
      trailing.push_back({std::string(1, raw_text[hi - 1]), hi - 1, hi, PosTag::kOther});
      --hi;
    }
    if (lo < hi) tokens.push_back({std::string(raw_text.substr(lo, hi - lo)), lo, hi, PosTag::kOther});
    tokens.insert(tokens.end(), trailing.rbegin(), trailing.rend());
    i = word_end;
  }
  if (tokens.empty()) throw Error(ErrorCode::kEmptyText, "text has no tokens");
  return tokens;
}

Segment make_segment(std::string id, std::string raw_text) {
  Segment segment{std::move(id), std::move(raw_text), {}};
  auto words = tokenize(segment.raw_text);
  segment.tokens.reserve(words.size() + 1);
  segment.tokens.push_back(sentinel_token());
  for (auto& token : words) {
    token.pos = tag_word(token.text);
    segment.tokens.push_back(std::move(token));
  }
  return segment;
}

Span align_span(const Segment& segment, std::string_view span_text,
                std::optional<std::pair<std::size_t, std::size_t>> char_hint) {
  std::size_t begin = 0;
  std::size_t end = 0;
  if (char_hint) {
    std::tie(begin, end) = *char_hint;
    if (begin >= end || end > segment.raw_text.size()) {
      throw Error(ErrorCode::kAlignmentFailure,
                  "offset hint out of range in segment " + segment.id);
    }
    // Offsets sometimes include surrounding blanks.
    while (begin < end && is_space(segment.raw_text[begin])) ++begin;
    while (end > begin && is_space(segment.raw_text[end - 1])) --end;
  } else {
    const std::string_view needle = trim(span_text);
    if (needle.empty()) {
      throw Error(ErrorCode::kAlignmentFailure, "empty span text in segment " + segment.id);
    }
    const auto pos = segment.raw_text.find(needle);
    if (pos == std::string::npos) {
      throw Error(ErrorCode::kAlignmentFailure,
                  "span \"" + std::string(needle) + "\" not found in segment " + segment.id);
    }
    begin = pos;
    end = pos + needle.size();
  }

  int first = -1;
  int last = -1;
  for (int t = 1; t <= segment.length(); ++t) {
    const Token& token = segment.tokens[static_cast<std::size_t>(t)];
    if (token.char_end > begin && token.char_start < end) {
      if (first < 0) first = t;
      last = t;
    }
  }
  if (first < 0) {
    throw Error(ErrorCode::kAlignmentFailure, "span covers no token in segment " + segment.id);
  }
  const Token& head = segment.tokens[static_cast<std::size_t>(first)];
  const Token& tail = segment.tokens[static_cast<std::size_t>(last)];
  const std::size_t left_slack = begin > head.char_start ? begin - head.char_start : 0;
  const std::size_t right_slack = tail.char_end > end ? tail.char_end - end : 0;
  if (left_slack > kAlignSlack || right_slack > kAlignSlack) {
    throw Error(ErrorCode::kAlignmentFailure,
                "span boundary falls inside a token (slack " + std::to_string(left_slack) + "/" +
                    std::to_string(right_slack) + ") in segment " + segment.id);
  }
  return {first, last};
}

ParsedCorpus parse_fincausal(std::string_view content) {
  auto records = split_records(content);
  if (records.empty()) throw Error(ErrorCode::kMalformedRow, "file has no header");

  const auto& header = records.front().second;
  std::unordered_map<std::string, std::size_t> column;
  for (std::size_t i = 0; i < header.size(); ++i) column[lower(trim(header[i]))] = i;
  auto require = [&](const char* name) {
    auto it = column.find(name);
    if (it == column.end()) {
      throw Error(ErrorCode::kMalformedRow, std::string("header lacks column ") + name);
    }
    return it->second;
  };
  auto optional_col = [&](const char* name) -> std::optional<std::size_t> {
    auto it = column.find(name);
    if (it == column.end()) return std::nullopt;
    return it->second;
  };
  const std::size_t c_index = require("index");
  const std::size_t c_text = require("text");
  const std::size_t c_cause = require("cause");
  const std::size_t c_effect = require("effect");
  const auto c_cause_start = optional_col("cause_start");
  const auto c_cause_end = optional_col("cause_end");
  const auto c_effect_start = optional_col("effect_start");
  const auto c_effect_end = optional_col("effect_end");
  const auto c_pos = optional_col("pos");

  struct Group {
    std::string prefix;
    std::string first_index;
    Example example;
    std::set<Causality> seen;
    bool any_row = false;
  };
  std::vector<Group> groups;
  std::map<std::pair<std::string, std::string>, std::size_t> group_of;

  ParsedCorpus out;
  auto& report = out.report;

  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& [line, fields] = records[r];
    ++report.rows;
    if (fields.size() != header.size()) {
      throw Error(ErrorCode::kMalformedRow, "line " + std::to_string(line) + ": expected " +
                                                std::to_string(header.size()) + " columns, got " +
                                                std::to_string(fields.size()));
    }
    const std::string index(trim(fields[c_index]));
    const std::string& text = fields[c_text];
    if (trim(text).empty()) {
      throw Error(ErrorCode::kMalformedRow, "line " + std::to_string(line) + ": empty Text");
    }
    const std::string prefix = group_prefix(index);
    auto key = std::make_pair(prefix, text);
    auto found = group_of.find(key);
    if (found == group_of.end()) {
      Group g;
      g.prefix = prefix;
      g.first_index = index;
      g.example.segment = make_segment(prefix, text);
      if (c_pos && !trim(fields[*c_pos]).empty()) {
        std::istringstream tags{fields[*c_pos]};
        std::vector<PosTag> parsed;
        std::string name;
        while (tags >> name) {
          auto tag = parse_pos_tag(name);
          if (!tag) {
            throw Error(ErrorCode::kMalformedRow,
                        "line " + std::to_string(line) + ": unknown POS tag " + name);
          }
          parsed.push_back(*tag);
        }
        if (static_cast<int>(parsed.size()) != g.example.segment.length()) {
          throw Error(ErrorCode::kMalformedRow,
                      "line " + std::to_string(line) + ": POS column has " +
                          std::to_string(parsed.size()) + " tags for " +
                          std::to_string(g.example.segment.length()) + " tokens");
        }
        for (std::size_t t = 0; t < parsed.size(); ++t) g.example.segment.tokens[t + 1].pos = parsed[t];
      }
      found = group_of.emplace(key, groups.size()).first;
      groups.push_back(std::move(g));
    }
    Group& group = groups[found->second];
    const Segment& segment = group.example.segment;

    const std::string& cause_text = fields[c_cause];
    const std::string& effect_text = fields[c_effect];
    if (trim(cause_text).empty() && trim(effect_text).empty()) {
      group.any_row = true;
      continue;
    }

    auto hint = [&](std::optional<std::size_t> start_col, std::optional<std::size_t> end_col)
        -> std::optional<std::pair<std::size_t, std::size_t>> {
      if (!start_col || !end_col) return std::nullopt;
      auto s = parse_offset(fields[*start_col]);
      auto e = parse_offset(fields[*end_col]);
      if (!s || !e) return std::nullopt;
      return std::make_pair(codepoint_to_byte(segment.raw_text, *s),
                            codepoint_to_byte(segment.raw_text, *e));
    };

    try {
      const Span cause = align_span(segment, cause_text, hint(c_cause_start, c_cause_end));
      const Span effect = align_span(segment, effect_text, hint(c_effect_start, c_effect_end));
      if (spans_overlap(cause, effect)) {
        ++report.overlap_violations;
        ++report.skipped_rows;
        report.warnings.push_back("line " + std::to_string(line) +
                                  ": cause and effect overlap; row skipped");
        continue;
      }
      const Causality tuple = Causality::from_spans(cause, effect);
      group.any_row = true;
      if (!group.seen.insert(tuple).second) {
        report.warnings.push_back("line " + std::to_string(line) + ": duplicate tuple dropped");
        continue;
      }
      group.example.gold.push_back(tuple);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kAlignmentFailure) throw;
      ++report.alignment_failures;
      ++report.skipped_rows;
      report.warnings.push_back("line " + std::to_string(line) + ": " + e.what());
    }
  }

  std::map<std::string, int> texts_per_prefix;
  for (const auto& g : groups) {
    if (g.any_row) ++texts_per_prefix[g.prefix];
  }
  for (auto& g : groups) {
    if (!g.any_row) continue;
    if (texts_per_prefix[g.prefix] > 1) g.example.segment.id = g.first_index;
    report.tuples += g.example.gold.size();
    out.examples.push_back(std::move(g.example));
  }
  report.segments = out.examples.size();
  return out;
}

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace

ParsedCorpus parse_fincausal_file(const std::filesystem::path& path) {
  return parse_fincausal(read_file(path));
}

std::string write_fincausal(const std::vector<Example>& examples) {
  std::ostringstream out;
  out << "Index; Text; Cause; Effect; Cause_Start; Cause_End; Effect_Start; Effect_End; POS\n";
  for (const auto& example : examples) {
    const Segment& seg = example.segment;
    std::string pos;
    for (int t = 1; t <= seg.length(); ++t) {
      if (t > 1) pos += ' ';
      pos += pos_tag_name(seg.tokens[static_cast<std::size_t>(t)].pos);
    }
    auto row = [&](std::size_t ordinal, const std::string& cause, const std::string& effect,
                   std::string offsets) {
      out << quote_field(seg.id + "." + std::to_string(ordinal)) << "; " << quote_field(seg.raw_text)
          << "; " << quote_field(cause) << "; " << quote_field(effect) << "; " << offsets << "; "
          << pos << "\n";
    };
    if (example.gold.empty()) {
      row(1, "", "", " ;  ;  ; ");
      continue;
    }
    for (std::size_t i = 0; i < example.gold.size(); ++i) {
      const Causality& c = example.gold[i];
      auto cp = [&](int token, bool end) {
        const Token& tk = seg.tokens[static_cast<std::size_t>(token)];
        return std::to_string(byte_to_codepoint(seg.raw_text, end ? tk.char_end : tk.char_start));
      };
      row(i + 1, seg.span_text(c.c_s, c.c_e), seg.span_text(c.e_s, c.e_e),
          cp(c.c_s, false) + "; " + cp(c.c_e, true) + "; " + cp(c.e_s, false) + "; " +
              cp(c.e_e, true));
    }
  }
  return out.str();
}

std::string write_canonical(const std::vector<Example>& examples) {
  std::string out;
  for (const auto& example : examples) {
    nlohmann::ordered_json record;
    record["id"] = example.segment.id;
    record["raw_text"] = example.segment.raw_text;
    auto tokens = nlohmann::ordered_json::array();
    for (const auto& token : example.segment.tokens) {
      tokens.push_back({{"text", token.text},
                        {"start", token.char_start},
                        {"end", token.char_end},
                        {"pos", pos_tag_name(token.pos)}});
    }
    record["tokens"] = std::move(tokens);
    auto gold = nlohmann::ordered_json::array();
    for (const auto& c : example.gold) {
      gold.push_back({{"c_s", c.c_s}, {"c_e", c.c_e}, {"e_s", c.e_s}, {"e_e", c.e_e}});
    }
    record["gold"] = std::move(gold);
    out += record.dump();
    out += '\n';
  }
  return out;
}

std::vector<Example> read_canonical(std::string_view content) {
  std::vector<Example> examples;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < content.size()) {
    auto nl = content.find('\n', pos);
    if (nl == std::string_view::npos) nl = content.size();
    const std::string_view line = trim(content.substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto record = nlohmann::json::parse(line);
      Example example;
      example.segment.id = record.at("id").get<std::string>();
      example.segment.raw_text = record.at("raw_text").get<std::string>();
      for (const auto& t : record.at("tokens")) {
        auto tag = parse_pos_tag(t.at("pos").get<std::string>());
        if (!tag) throw Error(ErrorCode::kFormatError, "unknown POS tag");
        example.segment.tokens.push_back({t.at("text").get<std::string>(),
                                          t.at("start").get<std::size_t>(),
                                          t.at("end").get<std::size_t>(), *tag});
      }
      for (const auto& g : record.at("gold")) {
        example.gold.push_back(
            {g.at("c_s").get<int>(), g.at("c_e").get<int>(), g.at("e_s").get<int>(),
             g.at("e_e").get<int>()});
      }
      validate_example(example);
      examples.push_back(std::move(example));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kFormatError,
                  "canonical corpus line " + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(ErrorCode::kFormatError,
                  "canonical corpus line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return examples;
}

ParsedCorpus load_corpus_file(const std::filesystem::path& path) {
  const std::string content = read_file(path);
  const auto first = content.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && content[first] == '{') {
    ParsedCorpus parsed;
    parsed.examples = read_canonical(content);
    parsed.report.rows = parsed.examples.size();
    parsed.report.segments = parsed.examples.size();
    for (const auto& e : parsed.examples) parsed.report.tuples += e.gold.size();
    return parsed;
  }
  return parse_fincausal(content);
}

void validate_example(const Example& example) {
  const Segment& seg = example.segment;
  auto fail = [&](const std::string& what) {
    throw Error(ErrorCode::kFormatError, "segment " + seg.id + ": " + what);
  };
  if (seg.tokens.empty() || !(seg.tokens.front() == sentinel_token())) fail("missing sentinel");
  if (seg.length() < 1) fail("no tokens");
  std::size_t previous_end = 0;
  for (int t = 1; t <= seg.length(); ++t) {
    const Token& token = seg.tokens[static_cast<std::size_t>(t)];
    if (token.char_start >= token.char_end || token.char_end > seg.raw_text.size()) {
      fail("token " + std::to_string(t) + " has bad offsets");
    }
    if (t > 1 && token.char_start < previous_end) fail("tokens overlap or are out of order");
    if (seg.raw_text.compare(token.char_start, token.char_end - token.char_start, token.text) != 0) {
      fail("token " + std::to_string(t) + " text does not match offsets");
    }
    if (token.pos == PosTag::kSentinel) fail("sentinel tag on a real token");
    previous_end = token.char_end;
  }
  for (const auto& c : example.gold) {
    if (!c.valid_for(seg.length())) fail("invalid gold tuple");
  }
}

FoldSplit make_folds(const std::vector<Example>& examples, int k, std::uint64_t seed) {
  if (k < 2) throw Error(ErrorCode::kInvalidArgument, "fold count must be at least 2");
  if (examples.size() < static_cast<std::size_t>(k)) {
    throw Error(ErrorCode::kTooFewExamples, std::to_string(examples.size()) +
                                                " examples cannot fill " + std::to_string(k) +
                                                " folds");
  }
  std::vector<std::string> ids;
  ids.reserve(examples.size());
  for (const auto& e : examples) ids.push_back(e.segment.id);
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
    throw Error(ErrorCode::kInvalidArgument, "duplicate example ids");
  }
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);

  FoldSplit split;
  split.k = k;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    split.assignments.emplace(ids[i], static_cast<int>(i % static_cast<std::size_t>(k)));
  }
  return split;
}

}  // namespace causeptr
