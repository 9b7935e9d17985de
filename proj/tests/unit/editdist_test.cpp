#include <gtest/gtest.h>

#include <random>
#include <string>

#include "oracles.hpp"
#include "sigtriage/editdist.hpp"

namespace {

using sigtriage::dl_distance;
using sigtriage::EditCosts;
using sigtriage::similarity_pct;

std::string random_string(std::mt19937_64& rng, std::size_t max_len, std::string_view alphabet) {
    std::string s(rng() % (max_len + 1), ' ');
    for (auto& c : s) c = alphabet[rng() % alphabet.size()];
    return s;
}

TEST(DlDistance, KnownValues) {
    EXPECT_EQ(dl_distance("", "abc"), 3u);
    EXPECT_EQ(dl_distance("abc", ""), 3u);
    EXPECT_EQ(dl_distance("ab", "ba"), 1u);
    EXPECT_EQ(dl_distance("kitten", "sitting"), 3u);
    EXPECT_EQ(dl_distance("", ""), 0u);
}

TEST(DlDistance, RestrictedVariantDoesNotEditTwice) {
    // Unrestricted DL gives 2 here (ca -> ac -> abc); OSA cannot insert into
    // a transposed pair.
    EXPECT_EQ(dl_distance("ca", "abc"), 3u);
    EXPECT_EQ(oracle::osa("ca", "abc"), 3u);
}

TEST(DlDistance, WeightedCosts) {
    const EditCosts costly_sub{1, 1, 5, 1};
    EXPECT_EQ(dl_distance("a", "b", costly_sub), 2u);  // delete + insert beats substitute
    const EditCosts costly_swap{1, 1, 1, 9};
    EXPECT_EQ(dl_distance("ab", "ba", costly_swap), 2u);
    EXPECT_EQ(dl_distance("", "xyz", EditCosts{4, 1, 1, 1}), 12u);
    EXPECT_EQ(dl_distance("xyz", "", EditCosts{1, 4, 1, 1}), 12u);
}

TEST(DlDistance, MatchesOracleOnRandomWeightedPairs) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 2000; ++trial) {
        const EditCosts c{1 + rng() % 4, 1 + rng() % 4, 1 + rng() % 4, 1 + rng() % 4};
        const std::string a = random_string(rng, 9, "abcd");
        const std::string b = random_string(rng, 9, "abcd");
        ASSERT_EQ(dl_distance(a, b, c), oracle::osa(a, b, c)) << a << " / " << b;
    }
}

TEST(DlDistance, UnitCostProperties) {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 2000; ++trial) {
        const std::string a = random_string(rng, 12, "abc\xff");
        const std::string b = random_string(rng, 12, "abc\xff");
        const std::string c = random_string(rng, 12, "abc\xff");
        const auto ab = dl_distance(a, b);
        EXPECT_EQ(dl_distance(a, a), 0u);
        EXPECT_EQ(ab, dl_distance(b, a));
        EXPECT_EQ(ab == 0, a == b);
        EXPECT_LE(ab, std::max(a.size(), b.size()));
        EXPECT_GE(ab, a.size() > b.size() ? a.size() - b.size() : b.size() - a.size());
        EXPECT_LE(dl_distance(a, c), ab + dl_distance(b, c));
    }
}

TEST(DlDistance, LongInputsUseLinearMemory) {
    const std::string a(20000, 'a');
    std::string b = a;
    b[7] = 'b';
    b.insert(b.begin() + 100, 'c');
    EXPECT_EQ(dl_distance(a, b), 2u);
}

TEST(SimilarityPct, KnownValues) {
    EXPECT_EQ(similarity_pct("AAAA", "AAAA"), 100);
    EXPECT_EQ(similarity_pct("AAAA", "AAAB"), 75);
    EXPECT_EQ(similarity_pct("abcd", "wxyz"), 0);
    EXPECT_EQ(similarity_pct("", ""), 100);
    EXPECT_EQ(similarity_pct("", "a"), 0);
    EXPECT_EQ(similarity_pct("abc", "abd"), 66);  // floor(66.66...)
}

TEST(SimilarityPct, RangeAndIdentity) {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 2000; ++trial) {
        const std::string a = random_string(rng, 10, "ab");
        const std::string b = random_string(rng, 10, "ab");
        const int s = similarity_pct(a, b);
        EXPECT_GE(s, 0);
        EXPECT_LE(s, 100);
        EXPECT_EQ(s == 100, a == b);
        EXPECT_EQ(s, similarity_pct(b, a));
    }
}

}  // namespace
