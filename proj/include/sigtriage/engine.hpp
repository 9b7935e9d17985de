#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sigtriage/ctph.hpp"
#include "sigtriage/regex.hpp"
#include "sigtriage/rulelang.hpp"

namespace sigtriage {

/// Per-pattern offset lists stop growing here; `truncated` is set instead.
inline constexpr std::size_t kMaxOffsetsPerPattern = 1'000'000;

/// Atoms are the first bytes of the chosen literal run, up to this length.
inline constexpr std::size_t kMaxAtomLength = 32;

struct PatternMatches {
    std::string id;
    std::vector<std::uint64_t> offsets;  // ascending, unique
    bool truncated = false;
};

struct RuleMatch {
    std::string name;
    std::vector<std::string> tags;
    Severity severity = Severity::Info;
    std::string family;
    bool matched = false;
    std::vector<PatternMatches> patterns;
};

struct MatchResult {
    std::vector<RuleMatch> rules;  // rule-set order
    std::uint64_t filesize = 0;
    std::optional<FuzzySignature> fuzzy;

    std::vector<const RuleMatch*> matched() const;
};

/// Inputs for evaluating one condition: offsets per pattern id, the data
/// itself and, when available, its fuzzy signature.
struct MatchContext {
    std::vector<std::string> ids;
    std::vector<std::vector<std::uint64_t>> offsets;  // parallel to ids
    std::span<const std::uint8_t> data;
    std::optional<FuzzySignature> fuzzy;
};

/// Condition lowered to a short-circuiting stack program over pattern slots.
class ConditionProgram {
public:
    ConditionProgram() = default;
    ConditionProgram(const Expr& expr, std::span<const std::string> ids);

    bool run(std::span<const std::vector<std::uint64_t>> offsets, std::span<const std::uint8_t> data,
             const std::optional<FuzzySignature>& fuzzy) const;

    bool uses_fuzzy() const noexcept { return uses_fuzzy_; }
    std::size_t size() const noexcept { return code_.size(); }

private:
    struct Instr {
        enum class Op {
            Bool,
            Str,
            StrAt,
            Count,
            Of,
            Filesize,
            Uint,
            Fuzzy,
            Not,
            JumpIfFalse,  // keep top and jump when false, else pop
            JumpIfTrue,
        } op;
        int slot = -1;  // pattern slot / signature index / set index / jump target
        Comparator cmp = Comparator::Eq;
        std::int64_t a = 0;
        std::int64_t b = 0;
        int width = 0;
        Quantifier quantifier = Quantifier::Any;
    };
    void emit(const Expr& e, std::span<const std::string> ids);

    std::vector<Instr> code_;
    std::vector<FuzzySignature> signatures_;
    std::vector<std::vector<int>> sets_;
    bool uses_fuzzy_ = false;
};

bool eval_condition(const Expr& expr, const MatchContext& ctx);

/// Literal substring driving the multi-pattern search for one pattern variant.
struct Atom {
    std::string bytes;          // case-folded
    std::size_t variant = 0;    // index into the compiled variant list
    std::size_t segment = 0;    // hex: segment holding the atom
    std::size_t offset = 0;     // offset of the atom inside its variant/segment
};

/// Scan-ready, immutable form of a RuleSet. Safe to share across threads.
class CompiledRuleSet {
public:
    CompiledRuleSet();
    ~CompiledRuleSet();
    CompiledRuleSet(CompiledRuleSet&&) noexcept;
    CompiledRuleSet& operator=(CompiledRuleSet&&) noexcept;

    MatchResult scan(std::span<const std::uint8_t> data) const;

    bool fuzzy_needed() const noexcept;
    std::size_t rule_count() const noexcept;
    const std::vector<Atom>& atoms() const noexcept;
    /// Pattern ids (in "rule/$id" form) that run without an atom.
    std::vector<std::string> full_scan_patterns() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;

    friend CompiledRuleSet compile(const RuleSet& rs);
};

/// Throws CompileError naming the offending pattern.
CompiledRuleSet compile(const RuleSet& rs);

MatchResult scan(const CompiledRuleSet& c, std::span<const std::uint8_t> data);
MatchResult scan(const CompiledRuleSet& c, std::string_view data);

}  // namespace sigtriage
