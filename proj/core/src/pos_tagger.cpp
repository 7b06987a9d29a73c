#include "causeptr/pos_tagger.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <regex>
#include <string>
#include <unordered_map>

namespace causeptr {
namespace {

constexpr std::array<std::string_view, kPosTagCount> kTagNames = {
    "SENTINEL", "NOUN", "VERB", "ADJ",  "ADV",   "PRON", "DET",
    "ADP",      "NUM",  "CONJ", "PRT",  "PUNCT", "OTHER"};

const std::unordered_map<std::string, PosTag>& lexicon() {
  static const auto* table = [] {
    auto* m = new std::unordered_map<std::string, PosTag>();
    auto add = [m](PosTag tag, std::initializer_list<const char*> words) {
      for (const char* w : words) m->emplace(w, tag);
    };
    add(PosTag::kDet, {"the", "a", "an", "this", "that", "these", "those", "each", "every",
                       "some", "any", "no", "all", "both", "another", "such", "either",
                       "neither"});
    add(PosTag::kPron, {"i", "you", "he", "she", "it", "we", "they", "me", "him", "her",
                        "us", "them", "its", "their", "our", "his", "my", "your", "who",
                        "whom", "whose", "which", "what", "itself", "themselves"});
    add(PosTag::kAdp, {"in", "on", "at", "by", "for", "with", "from", "of", "into", "onto",
                       "over", "under", "after", "before", "during", "since", "despite",
                       "amid", "against", "between", "through", "about", "above", "below",
                       "per", "than", "via", "across", "toward", "towards", "within",
                       "without", "following", "amongst", "among"});
    add(PosTag::kConj, {"and", "or", "but", "nor", "yet", "because", "although", "while",
                        "whereas", "if", "though", "unless", "so", "thus", "hence",
                        "therefore"});
    add(PosTag::kPrt, {"to", "not", "up", "off", "out", "'s", "n't", "as"});
    add(PosTag::kAdv, {"very", "also", "however", "still", "too", "already", "just", "now",
                       "then", "soon", "again", "further", "more", "most", "less", "least",
                       "almost", "nearly", "here", "there"});
    add(PosTag::kVerb, {"is", "are", "was", "were", "be", "been", "being", "am", "has",
                        "have", "had", "will", "would", "could", "should", "may", "might",
                        "can", "must", "do", "does", "did", "rose", "fell", "said", "grew",
                        "led", "cut", "saw", "made", "hit", "rise", "fall", "rises", "falls",
                        "drove", "caused", "causes", "cause", "boost", "boosted", "hurt",
                        "lost", "gained", "won", "sold", "paid", "spent", "became", "took"});
    add(PosTag::kNum, {"one", "two", "three", "four", "five", "six", "seven", "eight",
                       "nine", "ten", "hundred", "thousand", "million", "billion",
                       "trillion"});
    return m;
  }();
  return *table;
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() > suffix.size() + 1 &&
         s.substr(s.size() - suffix.size()) == suffix;
}

}  // namespace

std::string_view pos_tag_name(PosTag tag) {
  return kTagNames.at(static_cast<std::size_t>(tag));
}

std::optional<PosTag> parse_pos_tag(std::string_view name) {
  for (std::size_t i = 0; i < kTagNames.size(); ++i) {
    if (kTagNames[i] == name) return static_cast<PosTag>(i);
  }
  return std::nullopt;
}

PosTag tag_word(std::string_view word) {
  if (word.empty()) return PosTag::kOther;

  const bool all_punct = std::all_of(word.begin(), word.end(), [](unsigned char c) {
    return c < 0x80 && std::ispunct(c);
  });
  if (all_punct) return PosTag::kPunct;

  static const std::regex number(R"([$€£]?[+-]?[0-9][0-9,.]*(%|bn|mn|m|k|x)?)");
  if (std::regex_match(word.begin(), word.end(), number)) return PosTag::kNum;

  std::string lower(word);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (auto it = lexicon().find(lower); it != lexicon().end()) return it->second;

  const bool alphabetic = std::all_of(lower.begin(), lower.end(), [](unsigned char c) {
    return std::isalpha(c) || c == '-' || c == '\'' || c >= 0x80;
  });
  if (!alphabetic) return PosTag::kOther;

  if (ends_with(lower, "ly")) return PosTag::kAdv;
  if (ends_with(lower, "ed") || ends_with(lower, "ing") || ends_with(lower, "ize") ||
      ends_with(lower, "ise")) {
    return PosTag::kVerb;
  }
  for (std::string_view suffix : {"ous", "ful", "able", "ible", "ive", "ic", "less", "al"}) {
    if (ends_with(lower, suffix)) return PosTag::kAdj;
  }
  return PosTag::kNoun;
}

}  // namespace causeptr
