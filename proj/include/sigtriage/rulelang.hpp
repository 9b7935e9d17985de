#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "sigtriage/ctph.hpp"

namespace sigtriage {

enum class Comparator { Eq, Ne, Lt, Le, Gt, Ge };

std::string_view to_string(Comparator c);
bool compare(std::int64_t lhs, Comparator c, std::int64_t rhs);

// ---------------------------------------------------------------------------
// Patterns

enum TextModifier : unsigned {
    kNocase = 1u << 0,
    kAscii = 1u << 1,
    kWide = 1u << 2,
    kFullword = 1u << 3,
};

struct TextPattern {
    std::string bytes;
    unsigned modifiers = 0;

    friend bool operator==(const TextPattern&, const TextPattern&) = default;
};

/// One hex-string token. Bytes carry a nibble mask (0xFF literal, 0xF0 "X?",
/// 0x0F "?X", 0x00 "??"); jumps skip between min and max arbitrary bytes.
struct HexToken {
    enum class Kind { Byte, Jump };

    Kind kind = Kind::Byte;
    std::uint8_t value = 0;
    std::uint8_t mask = 0xFF;
    std::uint16_t min = 0;
    std::uint16_t max = 0;

    static HexToken byte(std::uint8_t v, std::uint8_t m = 0xFF) {
        return {Kind::Byte, static_cast<std::uint8_t>(v & m), m, 0, 0};
    }
    static HexToken jump(std::uint16_t lo, std::uint16_t hi) { return {Kind::Jump, 0, 0, lo, hi}; }

    friend bool operator==(const HexToken&, const HexToken&) = default;
};

inline constexpr std::uint16_t kMaxJump = 256;

struct HexPattern {
    std::vector<HexToken> tokens;

    friend bool operator==(const HexPattern&, const HexPattern&) = default;
};

struct RegexPattern {
    std::string source;  // body between the slashes, escapes kept verbatim
    bool nocase = false;

    friend bool operator==(const RegexPattern&, const RegexPattern&) = default;
};

struct PatternDef {
    std::string id;  // includes the leading '$'
    std::variant<TextPattern, HexPattern, RegexPattern> body;

    friend bool operator==(const PatternDef&, const PatternDef&) = default;
};

// ---------------------------------------------------------------------------
// Conditions

enum class Quantifier { Any, All, Count };

/// Condition tree node. Only the fields relevant to `kind` are meaningful;
/// unused ones keep their defaults so defaulted equality is structural.
struct Expr {
    enum class Kind {
        And,        // children[0] and children[1]
        Or,         // children[0] or children[1]
        Not,        // children[0]
        StringRef,  // $id
        CountCmp,   // #id cmp value
        At,         // $id at offset
        Of,         // quantifier of set
        Filesize,   // filesize cmp value
        UintRead,   // uintW(offset) cmp value
        FuzzySim,   // fuzzy_sim("sig") cmp value
        IntLiteral, // value != 0
        BoolLiteral,
    };

    Kind kind = Kind::BoolLiteral;
    std::vector<Expr> children;
    std::string ident;  // "$a" for StringRef/At, "#a" for CountCmp, "them" or "$a*" for Of
    Comparator cmp = Comparator::Eq;
    std::int64_t value = 0;
    std::int64_t offset = 0;
    int width = 0;  // 8, 16, 32
    Quantifier quantifier = Quantifier::Any;
    std::int64_t quantity = 0;  // N for Quantifier::Count
    bool truth = false;
    FuzzySignature signature;

    friend bool operator==(const Expr&, const Expr&) = default;

    static Expr boolean(bool b);
    static Expr integer(std::int64_t v);
    static Expr string_ref(std::string id);
    static Expr at(std::string id, std::int64_t offset);
    static Expr count(std::string id, Comparator c, std::int64_t v);
    static Expr of(Quantifier q, std::int64_t n, std::string set);
    static Expr filesize(Comparator c, std::int64_t v);
    static Expr uint_read(int width, std::int64_t offset, Comparator c, std::int64_t v);
    static Expr fuzzy_sim(FuzzySignature sig, Comparator c, std::int64_t v);
    static Expr conj(Expr a, Expr b);
    static Expr disj(Expr a, Expr b);
    static Expr negate(Expr a);
};

/// True if `id` ("$abc") is selected by an Of-set ("them", "$ab*", "$abc").
bool set_selects(std::string_view set, std::string_view id);

// ---------------------------------------------------------------------------
// Rules

using MetaValue = std::variant<std::string, std::int64_t, bool>;

enum class Severity { Info, Suspicious, Malicious };

std::string_view to_string(Severity s);

struct Rule {
    std::string name;
    std::vector<std::string> tags;
    std::vector<std::pair<std::string, MetaValue>> meta;
    std::vector<PatternDef> patterns;
    Expr condition;

    /// "severity" meta, Info when absent.
    Severity severity() const;
    /// "family" meta, empty when absent.
    std::string family() const;
    std::string description() const;

    friend bool operator==(const Rule&, const Rule&) = default;
};

struct RuleSet {
    std::vector<Rule> rules;

    friend bool operator==(const RuleSet&, const RuleSet&) = default;
};

/// Parses rule text. Throws ParseError with the line/column of the
/// offending token.
RuleSet parse_rules(std::string_view text);

/// Reads every `.yar` path given (files in lexicographic order) and parses
/// them as one rule set. ParseError messages are prefixed with the file name.
RuleSet load_rule_files(const std::vector<std::string>& paths);

/// Canonical text form; parse_rules(render_rules(rs)) == rs.
std::string render_rules(const RuleSet& rs);
std::string render_condition(const Expr& e);

}  // namespace sigtriage
