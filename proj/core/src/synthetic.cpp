#include "causeptr/synthetic.hpp"

#include <array>
#include <random>
#include <string>

namespace causeptr {
namespace {

constexpr std::array kCauses = {
    "higher oil prices",     "weak demand in asia",    "the new tax rules",
    "a strong dollar",       "rising interest rates",  "the failed merger",
    "lower freight costs",   "cheaper raw materials",  "a profit warning",
    "heavy rainfall",        "the product recall",     "strong holiday sales",
};

constexpr std::array kEffects = {
    "profits fell 5 %",      "shares rose sharply",    "margins improved",
    "revenue dropped",       "the stock slumped",      "costs increased",
    "dividends were cut",    "output declined",        "earnings beat forecasts",
    "the bank cut jobs",     "sales doubled",          "bond yields climbed",
};

constexpr std::array kFillers = {
    "the board met on monday .", "analysts were cautious .", "trading was quiet .",
    "the report came out late .",
};

enum class Part { kText, kCause, kEffect };

struct Builder {
  std::string text;
  std::vector<std::pair<int, int>> causes;
  std::vector<std::pair<int, int>> effects;
  int count = 0;

  void add(const std::string& piece, Part part) {
    if (!text.empty()) text += ' ';
    text += piece;
    const int first = count + 1;
    count += static_cast<int>(tokenize(piece).size());
    if (part == Part::kCause) causes.emplace_back(first, count);
    if (part == Part::kEffect) effects.emplace_back(first, count);
  }
};

}  // namespace

std::vector<Example> synthetic_corpus(std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto pick = [&](std::size_t n) { return static_cast<std::size_t>(rng() % n); };

  std::vector<Example> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Builder b;
    const std::string cause = kCauses[pick(kCauses.size())];
    const std::string effect = kEffects[pick(kEffects.size())];
    switch (i % 5) {
      case 0:
        b.add(cause, Part::kCause);
        b.add("led to", Part::kText);
        b.add(effect, Part::kEffect);
        b.add(".", Part::kText);
        break;
      case 1:
        b.add(effect, Part::kEffect);
        b.add("because of", Part::kText);
        b.add(cause, Part::kCause);
        b.add(".", Part::kText);
        break;
      case 2: {
        std::string effect2 = kEffects[pick(kEffects.size())];
        while (effect2 == effect) effect2 = kEffects[pick(kEffects.size())];
        b.add(cause, Part::kCause);
        b.add("meant", Part::kText);
        b.add(effect, Part::kEffect);
        b.add("and", Part::kText);
        b.add(effect2, Part::kEffect);
        b.add(".", Part::kText);
        b.causes.push_back(b.causes.front());
        break;
      }
      case 3: {
        std::string cause2 = kCauses[pick(kCauses.size())];
        while (cause2 == cause) cause2 = kCauses[pick(kCauses.size())];
        b.add("after", Part::kText);
        b.add(cause, Part::kCause);
        b.add(",", Part::kText);
        b.add(effect, Part::kEffect);
        b.add("; separately", Part::kText);
        b.add(cause2, Part::kCause);
        b.add("so", Part::kText);
        std::string effect2 = kEffects[pick(kEffects.size())];
        while (effect2 == effect) effect2 = kEffects[pick(kEffects.size())];
        b.add(effect2, Part::kEffect);
        b.add(".", Part::kText);
        break;
      }
      default:
        b.add(kFillers[pick(kFillers.size())], Part::kText);
        break;
    }
    Example ex;
    ex.segment = make_segment("syn" + std::to_string(1000 + i), b.text);
    for (std::size_t t = 0; t < b.causes.size(); ++t) {
      ex.gold.push_back(Causality::from_spans({b.causes[t].first, b.causes[t].second},
                                              {b.effects[t].first, b.effects[t].second}));
    }
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace causeptr
