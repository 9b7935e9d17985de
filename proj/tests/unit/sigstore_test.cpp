#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "generators.hpp"
#include "sigtriage/errors.hpp"
#include "sigtriage/sigstore.hpp"

namespace {

using namespace sigtriage;

const std::string kAbc = "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad";
const std::string kEmpty = "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855";

std::string hex_of(std::uint64_t n) {
    return digest_bytes(std::to_string(n)).hex();
}

TEST(Import, CountsValidRows) {
    SignatureStore s;
    const std::string csv = "value,family,source,first_seen\n" + kAbc + ",alpha,feed,2021-01-02\n" + kEmpty +
                            ",bravo,feed,2021-01-03\n" + hex_of(1) + ",charlie,feed,\n";
    const ImportResult r = s.import_csv(csv, SignatureKind::Exact, "db.csv");
    EXPECT_EQ(r.accepted, 3u);
    EXPECT_TRUE(r.warnings.empty());
    EXPECT_EQ(s.exact_count(), 3u);
}

TEST(Import, EmptyFileLoadsNothing) {
    SignatureStore s;
    EXPECT_EQ(s.import_csv("", SignatureKind::Exact, "x").accepted, 0u);
    EXPECT_EQ(s.import_csv("value,family,source,first_seen\n# nothing\n", SignatureKind::Fuzzy, "x").accepted, 0u);
    EXPECT_EQ(s.size(), 0u);
}

TEST(Import, BadRowIsSkippedWithWarning) {
    SignatureStore s;
    const ImportResult r = s.import_csv(kAbc + ",alpha,feed,2021-01-02\nzz" + kAbc.substr(2) + ",alpha,feed,\n",
                                        SignatureKind::Exact, "db.csv");
    EXPECT_EQ(r.accepted, 1u);
    ASSERT_EQ(r.warnings.size(), 1u);
    EXPECT_EQ(r.warnings[0].rfind("db.csv:2: ", 0), 0u) << r.warnings[0];
}

TEST(Import, MostlyMalformedIsRejectedWholesale) {
    SignatureStore s;
    try {
        s.import_csv(kAbc + ",alpha,,\nnot-a-digest,x,,\nalso bad\n", SignatureKind::Exact, "db.csv");
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_EQ(e.field(), "db.csv");
    }
    EXPECT_EQ(s.size(), 0u);
}

TEST(Import, RowValidation) {
    SignatureStore s;
    const std::string csv = kAbc + ",,feed,\n"                     // empty family
                            + kAbc + ",a,feed,2021-13-01\n"         // bad month
                            + kAbc + ",a,feed\n"                    // 3 fields
                            + "3:ABC:DE,a,feed,\n"                 // fuzzy value in exact DB
                            + kAbc.substr(0, 63) + ",a,,\n"        // short digest
                            + "\"" + kAbc + "\",\"a, b\",feed,2021-01-01T10:00\n"
                            + kEmpty + ",\"q\"\"uote\",,\n"
                            + hex_of(1) + ",a,,\n" + hex_of(2) + ",a,,\n" + hex_of(3) + ",a,,\n";
    const ImportResult r = s.import_csv(csv, SignatureKind::Exact, "db");
    EXPECT_EQ(r.accepted, 5u);
    EXPECT_EQ(r.warnings.size(), 5u);
    EXPECT_EQ(s.lookup_exact(Digest::from_hex(kAbc))->family, "a, b");
    EXPECT_EQ(s.lookup_exact(Digest::from_hex(kEmpty))->family, "q\"uote");
}

TEST(Import, UppercaseDigestsAreCanonicalised) {
    SignatureStore s;
    std::string upper = kAbc;
    for (char& c : upper) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    s.import_csv(upper + ",alpha,,\n", SignatureKind::Exact, "x");
    ASSERT_TRUE(s.lookup_exact(Digest::from_hex(kAbc)));
    EXPECT_EQ(s.lookup_exact(Digest::from_hex(kAbc))->value, kAbc);
}

TEST(Import, IdempotentAndLastWins) {
    SignatureStore s;
    const std::string csv = kAbc + ",alpha,,\n3:ABCDEFGH:ABC,fam,,\n";
    s.import_csv(csv, SignatureKind::Exact, "x");
    s.import_csv("3:ABCDEFGH:ABC,fam,,\n", SignatureKind::Fuzzy, "y");
    const std::size_t n = s.size();
    s.import_csv("3:ABCDEFGH:ABC,fam,,\n", SignatureKind::Fuzzy, "y");
    EXPECT_EQ(s.size(), n);
    const ImportResult again = s.import_csv(kAbc + ",bravo,,\n", SignatureKind::Exact, "z");
    EXPECT_EQ(s.size(), n);
    EXPECT_EQ(s.lookup_exact(Digest::from_hex(kAbc))->family, "bravo");
    EXPECT_EQ(again.warnings.size(), 1u);
}

TEST(ImportFile, UnreadableFileIsInputError) {
    SignatureStore s;
    EXPECT_THROW(s.import_signatures("/nonexistent/db.csv", SignatureKind::Exact), InputError);
}

TEST(ImportFile, ReadsCsvFromDisk) {
    const auto path = std::filesystem::temp_directory_path() / "sigstore_test_db.csv";
    std::ofstream(path) << to_csv({{SignatureKind::Fuzzy, "6:ABCDEFGHIJ:ABCD", "alpha", "feed", "2021-11-08"}});
    SignatureStore s;
    EXPECT_EQ(s.import_signatures(path.string(), SignatureKind::Fuzzy).accepted, 1u);
    EXPECT_EQ(s.fuzzy_records()[0].source, "feed");
    std::filesystem::remove(path);
}

TEST(LookupExact, Examples) {
    SignatureStore s;
    EXPECT_FALSE(s.lookup_exact(Digest::from_hex(kAbc)));
    s.add({SignatureKind::Exact, kAbc, "alpha", "feed", ""});
    ASSERT_TRUE(s.lookup_exact(Digest::from_hex(kAbc)));
    EXPECT_EQ(s.lookup_exact(Digest::from_hex(kAbc))->family, "alpha");
    std::string near = kAbc;
    near.back() = 'c';
    EXPECT_FALSE(s.lookup_exact(Digest::from_hex(near)));
}

TEST(QueryFuzzy, SelfMatchScoresHundred) {
    std::mt19937_64 rng(71);
    SignatureStore s;
    const FuzzySignature sig = fuzzy_hash(gen::bytes(rng, 50000));
    EXPECT_TRUE(s.query_fuzzy(sig, 50, 10).empty());
    s.add({SignatureKind::Fuzzy, sig.render(), "alpha", "", ""});
    for (int i = 0; i < 20; ++i) s.add({SignatureKind::Fuzzy, fuzzy_hash(gen::bytes(rng, 50000)).render(), "noise", "", ""});
    const auto hits = s.query_fuzzy(sig, 50, 10);
    ASSERT_FALSE(hits.empty());
    EXPECT_EQ(hits[0].score, 100);
    EXPECT_EQ(hits[0].record.family, "alpha");
}

TEST(QueryFuzzy, IncompatibleBlocksizesAreNotCandidates) {
    SignatureStore s;
    s.add({SignatureKind::Fuzzy, "3:ABCDEFGHIJKL:ABCDEFG", "a", "", ""});
    s.add({SignatureKind::Fuzzy, "48:ABCDEFGHIJKL:ABCDEFG", "b", "", ""});
    EXPECT_TRUE(s.query_fuzzy(parse_signature("12:ABCDEFGHIJKL:ABCDEFG"), 0, 10).empty());
    EXPECT_EQ(s.query_fuzzy(parse_signature("24:ABCDEFGHIJKL:ABCDEFG"), 0, 10).size(), 1u);
}

TEST(QueryFuzzy, TiesBreakByFamilyThenValue) {
    SignatureStore s;
    s.add({SignatureKind::Fuzzy, "3:ABCDEFGHIJ:ZZZ", "zeta", "", ""});
    s.add({SignatureKind::Fuzzy, "3:ABCDEFGHIJ:YYY", "alpha", "", ""});
    s.add({SignatureKind::Fuzzy, "3:ABCDEFGHIJ:XXX", "alpha", "", ""});
    const auto hits = s.query_fuzzy(parse_signature("3:ABCDEFGHIJ:QQQ"), 1, 10);
    ASSERT_EQ(hits.size(), 3u);
    EXPECT_EQ(hits[0].score, hits[2].score);
    EXPECT_EQ(hits[0].record.value, "3:ABCDEFGHIJ:XXX");
    EXPECT_EQ(hits[1].record.value, "3:ABCDEFGHIJ:YYY");
    EXPECT_EQ(hits[2].record.family, "zeta");
    EXPECT_EQ(s.query_fuzzy(parse_signature("3:ABCDEFGHIJ:QQQ"), 1, 2).size(), 2u);
}

std::string random_part(gen::Rng& rng, std::size_t max_len) {
    static constexpr std::string_view kChars = "ABCD";
    std::string s(7 + gen::below(rng, max_len - 6), 'A');
    for (char& c : s) c = kChars[gen::below(rng, kChars.size())];
    return s;
}

FuzzySignature random_signature(gen::Rng& rng) {
    return {3ull << gen::below(rng, 8), random_part(rng, 64), random_part(rng, 32)};
}

// Bucket pruning must agree with scoring every record.
TEST(QueryFuzzy, PruningMatchesBruteForce) {
    gen::Rng rng(72);
    for (int round = 0; round < 5; ++round) {
        SignatureStore s;
        for (int i = 0; i < 1000; ++i)
            s.add({SignatureKind::Fuzzy, random_signature(rng).render(), "f" + std::to_string(i % 7), "", ""});
        const auto all = s.fuzzy_records();
        for (int q = 0; q < 40; ++q) {
            const FuzzySignature sig = random_signature(rng);
            const int threshold = static_cast<int>(gen::below(rng, 60));
            std::vector<FuzzyHit> want;
            for (const auto& r : all) {
                const int score = fuzzy_compare(sig, parse_signature(r.value));
                if (score > 0 && score >= threshold) want.push_back({score, r});
            }
            auto got = s.query_fuzzy(sig, std::max(threshold, 1), all.size());
            auto by_value = [](const FuzzyHit& a, const FuzzyHit& b) { return a.record.value < b.record.value; };
            for (std::size_t i = 1; i < got.size(); ++i) {
                ASSERT_GE(got[i - 1].score, got[i].score);
                ASSERT_NE(got[i - 1].record.value, got[i].record.value);
            }
            std::sort(want.begin(), want.end(), by_value);
            std::sort(got.begin(), got.end(), by_value);
            ASSERT_EQ(got, want) << sig.render();
        }
    }
}

TEST(Csv, RoundTripsThroughImport) {
    gen::Rng rng(73);
    std::vector<SignatureRecord> records;
    for (int i = 0; i < 50; ++i)
        records.push_back({SignatureKind::Exact, hex_of(rng()), gen::text_bytes(rng, 8, false) + ",\"x",
                           "src", "2021-11-08"});
    for (auto& r : records)
        for (char& c : r.family)
            if (c == '\0' || c == ' ') c = '_';
    SignatureStore s;
    EXPECT_EQ(s.import_csv(to_csv(records), SignatureKind::Exact, "x").accepted, records.size());
    for (const auto& r : records) {
        const auto got = s.lookup_exact(Digest::from_hex(r.value));
        ASSERT_TRUE(got);
        EXPECT_EQ(got->family, r.family);
    }
}

}  // namespace
