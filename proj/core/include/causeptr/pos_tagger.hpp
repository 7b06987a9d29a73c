#pragma once

#include <optional>
#include <string_view>

namespace causeptr {

// Universal-style tagset plus the sentinel tag. Values are embedding rows.
enum class PosTag : int {
  kSentinel = 0,
  kNoun,
  kVerb,
  kAdj,
  kAdv,
  kPron,
  kDet,
  kAdp,
  kNum,
  kConj,
  kPrt,
  kPunct,
  kOther,
};

inline constexpr int kPosTagCount = 13;

std::string_view pos_tag_name(PosTag tag);
std::optional<PosTag> parse_pos_tag(std::string_view name);

/// Deterministic rule tagger: punctuation and number patterns first, then a
/// closed-class lexicon, then suffix rules; alphabetic words default to NOUN
/// and anything else to OTHER.
PosTag tag_word(std::string_view word);

}  // namespace causeptr
