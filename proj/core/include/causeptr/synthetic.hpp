#pragma once

// Deterministic templated causal corpus for smoke tests, overfit checks and
// benchmarks. Sentences mix cause-first and effect-first surface orders, and
// a share of them carry two tuples or none.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "causeptr/corpus.hpp"

namespace causeptr {

std::vector<Example> synthetic_corpus(std::size_t count = 50, std::uint64_t seed = 7);

}  // namespace causeptr
