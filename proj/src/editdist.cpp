#include "sigtriage/editdist.hpp"

#include <algorithm>
#include <vector>

namespace sigtriage {

std::size_t dl_distance(std::string_view a, std::string_view b, const EditCosts& costs) {
    const std::size_t n = a.size();
    const std::size_t m = b.size();

    // Three rolling rows: i-2, i-1, i.
    std::vector<std::size_t> prev2(m + 1), prev(m + 1), cur(m + 1);
    for (std::size_t j = 0; j <= m; ++j) prev[j] = j * costs.insert;

    for (std::size_t i = 1; i <= n; ++i) {
        cur[0] = i * costs.remove;
        for (std::size_t j = 1; j <= m; ++j) {
            const bool same = a[i - 1] == b[j - 1];
            std::size_t best = std::min({
                prev[j] + costs.remove,
                cur[j - 1] + costs.insert,
                prev[j - 1] + (same ? 0 : costs.substitute),
            });
            if (i > 1 && j > 1 && a[i - 1] == b[j - 2] && a[i - 2] == b[j - 1])
                best = std::min(best, prev2[j - 2] + costs.transpose);
            cur[j] = best;
        }
        std::swap(prev2, prev);
        std::swap(prev, cur);
    }
    return prev[m];
}

int similarity_pct(std::string_view a, std::string_view b) {
    const std::size_t longest = std::max(a.size(), b.size());
    if (longest == 0) return 100;
    const std::size_t d = std::min(dl_distance(a, b), longest);
    return static_cast<int>((100 * (longest - d)) / longest);
}

}  // namespace sigtriage
