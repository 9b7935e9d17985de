#include <gtest/gtest.h>

#include <random>
#include <string>
#include <thread>

#include "generators.hpp"
#include "oracles.hpp"
#include "sigtriage/engine.hpp"
#include "sigtriage/errors.hpp"

namespace {

using namespace sigtriage;

std::span<const std::uint8_t> as_bytes(std::string_view s) {
    return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

MatchResult run(std::string_view rules, std::string_view data) {
    return scan(compile(parse_rules(rules)), data);
}

TEST(Scan, SpecExamples) {
    const MatchResult m = run(R"(rule r { strings: $a = "aa" condition: #a == 2 })", "aaa");
    ASSERT_EQ(m.rules.size(), 1u);
    EXPECT_TRUE(m.rules[0].matched);
    EXPECT_EQ(m.rules[0].patterns[0].offsets, (std::vector<std::uint64_t>{0, 1}));

    EXPECT_TRUE(run("rule r { condition: uint16(0) == 0x5A4D }", "MZ\x90").rules[0].matched);
    EXPECT_FALSE(run(R"(rule r { strings: $a = "xyz" condition: $a })", "abc").rules[0].matched);
    EXPECT_TRUE(scan(compile(RuleSet{}), "anything").rules.empty());
}

TEST(Scan, EmptyDataStillEvaluatesConditions) {
    const MatchResult m = run(R"(rule r { strings: $a = "x" condition: filesize == 0 and not $a }
                                 rule f { condition: fuzzy_sim("3:ABCDEFG:") < 50 })",
                              "");
    EXPECT_TRUE(m.rules[0].matched);
    EXPECT_FALSE(m.rules[1].matched);  // no signature for empty data
    EXPECT_FALSE(m.fuzzy.has_value());
}

TEST(Scan, HexAtomUsesLowestOffsetOnTies) {
    const CompiledRuleSet c = compile(parse_rules("rule r { strings: $a = { 4D ?? 5A [2-4] 90 } condition: $a }"));
    ASSERT_EQ(c.atoms().size(), 1u);
    EXPECT_EQ(c.atoms()[0].bytes, "m");  // 0x4D, case-folded
    EXPECT_EQ(c.atoms()[0].offset, 0u);
    EXPECT_EQ(c.atoms()[0].segment, 0u);

    const CompiledRuleSet longest = compile(parse_rules("rule r { strings: $a = { 01 ?? 02 03 04 } condition: $a }"));
    EXPECT_EQ(longest.atoms()[0].bytes, std::string("\x02\x03\x04"));
}

TEST(Scan, RegexWithoutLiteralRunsUnanchored) {
    const CompiledRuleSet c = compile(parse_rules("rule r { strings: $a = /[ab][cd]/ $b = /xy+z/ condition: $a }"));
    EXPECT_EQ(c.full_scan_patterns(), (std::vector<std::string>{"r/$a"}));
    const MatchResult m = scan(c, "zzbdac");
    EXPECT_EQ(m.rules[0].patterns[0].offsets, (std::vector<std::uint64_t>{2, 4}));
}

TEST(Scan, WideAndFullword) {
    const std::string rules =
        R"(rule r { strings: $w = "Key" wide fullword $a = "key" nocase fullword condition: $w and #a == 1 })";
    const std::string data("-\0K\0e\0y\0 \0Key keyboard", 22);
    const MatchResult m = run(rules, data);
    EXPECT_EQ(m.rules[0].patterns[0].offsets, (std::vector<std::uint64_t>{2}));
    EXPECT_EQ(m.rules[0].patterns[1].offsets, (std::vector<std::uint64_t>{10}));
    EXPECT_TRUE(m.rules[0].matched);

    // "x\0" before the wide match is an alphanumeric UTF-16 unit.
    const MatchResult joined = run(rules, std::string("x\0K\0e\0y\0", 8));
    EXPECT_TRUE(joined.rules[0].patterns[0].offsets.empty());
    EXPECT_FALSE(joined.rules[0].matched);
}

TEST(Scan, OffsetsCapAtOneMillion) {
    const std::string data(kMaxOffsetsPerPattern + 500, 'a');
    const MatchResult m = run(R"(rule r { strings: $a = "a" $r = /a/ condition: #a > 5 })", data);
    for (const auto& p : m.rules[0].patterns) {
        EXPECT_TRUE(p.truncated) << p.id;
        ASSERT_EQ(p.offsets.size(), kMaxOffsetsPerPattern) << p.id;
        EXPECT_EQ(p.offsets.front(), 0u);
        EXPECT_EQ(p.offsets.back(), kMaxOffsetsPerPattern - 1);
    }
    EXPECT_TRUE(m.rules[0].matched);
}

TEST(Scan, FuzzyPredicateSelfSimilarity) {
    std::mt19937_64 rng(61);
    const auto data = gen::bytes(rng, 20000);
    const FuzzySignature sig = fuzzy_hash(data);
    const CompiledRuleSet c = compile(parse_rules("rule f { condition: fuzzy_sim(\"" + sig.render() + "\") >= 50 }"));
    EXPECT_TRUE(c.fuzzy_needed());
    const MatchResult m = c.scan(data);
    EXPECT_TRUE(m.rules[0].matched);
    ASSERT_TRUE(m.fuzzy.has_value());
    EXPECT_EQ(*m.fuzzy, sig);
    EXPECT_FALSE(c.scan(gen::bytes(rng, 20000)).rules[0].matched);
}

TEST(Scan, FuzzyOnlyComputedWhenNeeded) {
    EXPECT_FALSE(run("rule r { condition: true }", "abc").fuzzy.has_value());
}

TEST(Scan, AgreesWithNaiveScanner) {
    std::mt19937_64 rng(62);
    for (int trial = 0; trial < 1000; ++trial) {
        const RuleSet rs = gen::ruleset(rng, 3, false);
        const CompiledRuleSet c = compile(rs);
        const auto data = gen::sample(rng, 256);
        const MatchResult m = c.scan(data);
        ASSERT_EQ(m.rules.size(), rs.rules.size());
        for (std::size_t i = 0; i < rs.rules.size(); ++i) {
            const Rule& r = rs.rules[i];
            oracle::Env env{{}, data, std::nullopt};
            for (std::size_t k = 0; k < r.patterns.size(); ++k) {
                const auto want = oracle::pattern_offsets(r.patterns[k], data);
                ASSERT_EQ(m.rules[i].patterns[k].offsets, want)
                    << "trial " << trial << "\n" << render_rules(RuleSet{{r}});
                env.offsets[r.patterns[k].id] = want;
            }
            ASSERT_EQ(m.rules[i].matched, oracle::eval(r.condition, env))
                << "trial " << trial << "\n" << render_rules(RuleSet{{r}});
        }
    }
}

TEST(Scan, LongLiteralAtomsAreTruncatedButVerified) {
    const std::string needle(80, 'q');
    std::string data = "xx" + needle.substr(0, 40) + "yy" + needle + "zz";
    const MatchResult m = run("rule r { strings: $a = \"" + needle + "\" condition: $a }", data);
    EXPECT_EQ(m.rules[0].patterns[0].offsets, (std::vector<std::uint64_t>{44}));
}

TEST(Scan, ConcurrentScansAgree) {
    std::mt19937_64 rng(63);
    const RuleSet rs = gen::ruleset(rng, 3, false);
    const CompiledRuleSet c = compile(rs);
    std::vector<std::vector<std::uint8_t>> inputs;
    for (int i = 0; i < 16; ++i) inputs.push_back(gen::sample(rng, 256));
    std::vector<MatchResult> serial;
    for (const auto& d : inputs) serial.push_back(c.scan(d));
    std::vector<std::vector<bool>> threaded(inputs.size());
    {
        std::vector<std::jthread> pool;
        for (std::size_t i = 0; i < inputs.size(); ++i)
            pool.emplace_back([&, i] {
                for (const auto& r : c.scan(inputs[i]).rules) threaded[i].push_back(r.matched);
            });
    }
    for (std::size_t i = 0; i < inputs.size(); ++i)
        for (std::size_t k = 0; k < serial[i].rules.size(); ++k)
            EXPECT_EQ(threaded[i][k], serial[i].rules[k].matched);
}

TEST(Compile, RejectsNullableRegexBuiltDirectly) {
    Rule r;
    r.name = "r";
    r.patterns.push_back({"$a", RegexPattern{"a*", false}});
    r.condition = Expr::string_ref("$a");
    try {
        compile(RuleSet{{r}});
        FAIL();
    } catch (const CompileError& e) {
        EXPECT_NE(std::string(e.what()).find("r/$a"), std::string::npos);
    }
}

// ConditionProgram (bytecode) against direct recursive interpretation.
TEST(ConditionProgram, AgreesWithRecursiveInterpreter) {
    std::mt19937_64 rng(64);
    const std::vector<std::string> ids{"$a", "$b", "$c1", "$c2"};
    const std::vector<std::vector<std::uint64_t>> choices{{}, {0}, {3}, {0, 3, 5}, {1, 2, 3, 4}};
    const std::vector<FuzzySignature> sigs{{3, "ABCDEFGH", "ABC"}, {6, "ABCDEFGHIJ", "ABCD"}};
    const std::vector<std::string> datas{"", "MZ", std::string("MZ\x90\x00\x03\x00\x00\x00 abc", 12)};
    for (int trial = 0; trial < 300; ++trial) {
        const Expr e = gen::condition(rng, gen::ExprOptions{ids, sigs, 6}, 4);
        const ConditionProgram prog(e, ids);
        for (int ctx = 0; ctx < 40; ++ctx) {
            MatchContext mc;
            mc.ids = ids;
            oracle::Env env;
            for (const auto& id : ids) {
                const auto& o = choices[rng() % choices.size()];
                mc.offsets.push_back(o);
                env.offsets[id] = o;
            }
            const std::string& d = datas[rng() % datas.size()];
            mc.data = as_bytes(d);
            env.data = mc.data;
            if (!d.empty() && rng() % 2) {
                mc.fuzzy = FuzzySignature{3, "ABCDEFGH", rng() % 2 ? "ABC" : "XYZ"};
                env.fuzzy = mc.fuzzy;
            }
            const bool want = oracle::eval(e, env);
            ASSERT_EQ(prog.run(mc.offsets, mc.data, mc.fuzzy), want) << render_condition(e);
            ASSERT_EQ(eval_condition(e, mc), want) << render_condition(e);
        }
    }
}

TEST(EvalCondition, Examples) {
    MatchContext mc;
    EXPECT_FALSE(eval_condition(Expr::negate(Expr::boolean(true)), mc));
    mc.ids = {"$a", "$b", "$c"};
    mc.offsets = {{}, {4}, {}};
    EXPECT_TRUE(eval_condition(Expr::of(Quantifier::Any, 0, "them"), mc));
    EXPECT_FALSE(eval_condition(Expr::of(Quantifier::All, 0, "them"), mc));
    EXPECT_TRUE(eval_condition(Expr::at("$b", 4), mc));
    EXPECT_FALSE(eval_condition(Expr::uint_read(32, 0, Comparator::Eq, 0), mc));  // out of range
}

}  // namespace
