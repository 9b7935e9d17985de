#pragma once

#include <cstddef>
#include <string_view>

namespace sigtriage {

/// Per-operation weights for the edit distance. Unit costs by default.
struct EditCosts {
    std::size_t insert = 1;
    std::size_t remove = 1;
    std::size_t substitute = 1;
    std::size_t transpose = 1;
};

/// Restricted Damerau-Levenshtein (optimal string alignment) distance over
/// 8-bit code units: insert, delete, substitute and adjacent transpose, with
/// no substring edited more than once.
std::size_t dl_distance(std::string_view a, std::string_view b, const EditCosts& costs = {});

/// floor(100 * (1 - D / max(|a|, |b|))) with unit-cost D. Two empty strings
/// are identical (100).
int similarity_pct(std::string_view a, std::string_view b);

}  // namespace sigtriage
