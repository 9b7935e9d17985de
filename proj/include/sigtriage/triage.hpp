#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sigtriage/ctph.hpp"
#include "sigtriage/engine.hpp"
#include "sigtriage/exacthash.hpp"
#include "sigtriage/sigstore.hpp"

namespace sigtriage {

inline constexpr std::uint64_t kDefaultMaxFileSize = 256ull * 1024 * 1024;

struct TriageConfig {
    int fuzzy_threshold = 50;             // detection cut-off, 0..100
    std::size_t max_fuzzy_matches = 10;
    int fuzzy_evidence_min = 1;           // weakest fuzzy score still reported
    std::uint64_t max_file_size = kDefaultMaxFileSize;
};

/// Ordered weakest to strongest.
enum class Verdict { Unknown, Suspicious, LikelyMalicious, KnownMalicious };

std::string_view to_string(Verdict v);
Verdict verdict_from_string(std::string_view s);

enum class Provenance { Exact, Fuzzy, Rule };

std::string_view to_string(Provenance p);

struct ClassificationLabel {
    std::string family;
    Provenance provenance = Provenance::Rule;
    bool primary = false;

    friend bool operator==(const ClassificationLabel&, const ClassificationLabel&) = default;
};

struct RuleEvidence {
    std::string rule;
    std::vector<std::string> tags;
    Severity severity = Severity::Info;
    std::string family;

    friend bool operator==(const RuleEvidence&, const RuleEvidence&) = default;
};

struct TriageReport {
    std::string file;
    Digest digest;
    std::optional<FuzzySignature> fuzzy;  // absent for empty files
    Verdict verdict = Verdict::Unknown;
    std::vector<ClassificationLabel> classification;
    std::vector<std::string> capabilities;  // matched rule names and tags, sorted
    std::optional<SignatureRecord> exact;
    std::vector<FuzzyHit> fuzzy_matches;
    std::vector<RuleEvidence> rules;  // matched rules, rule-set order

    const ClassificationLabel* primary() const;

    friend bool operator==(const TriageReport&, const TriageReport&) = default;
};

/// Reads `path` (refusing files above cfg.max_file_size) and triages it.
TriageReport triage_file(const std::string& path, const SignatureStore& store,
                         const CompiledRuleSet& rules, const TriageConfig& cfg = {});

TriageReport triage_bytes(std::string name, std::span<const std::uint8_t> data,
                          const SignatureStore& store, const CompiledRuleSet& rules,
                          const TriageConfig& cfg = {});

enum class ReportFormat { Json, Text };

std::string render_report(const TriageReport& r, ReportFormat format);
TriageReport parse_report_json(std::string_view json);

/// Rule listing for one file: "-<name>:" then one matched rule per line.
std::string render_rule_listing(std::string_view name, const std::vector<std::string>& rule_names);

std::string render_match_json(std::string_view name, const MatchResult& m);

/// Whole-file read with the size cap applied first. Throws InputError.
std::vector<std::uint8_t> read_file_capped(const std::string& path, std::uint64_t max_size);

}  // namespace sigtriage
