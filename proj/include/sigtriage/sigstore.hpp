#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sigtriage/ctph.hpp"
#include "sigtriage/exacthash.hpp"

namespace sigtriage {

enum class SignatureKind { Exact, Fuzzy };

std::string_view to_string(SignatureKind k);

/// One known-malware signature. `value` is a lowercase SHA-256 hex digest
/// or a canonical fuzzy signature rendering.
struct SignatureRecord {
    SignatureKind kind = SignatureKind::Exact;
    std::string value;
    std::string family;
    std::string source;
    std::string first_seen;

    friend bool operator==(const SignatureRecord&, const SignatureRecord&) = default;
};

struct ImportResult {
    std::size_t accepted = 0;
    std::vector<std::string> warnings;  // "path:line: reason"
};

struct FuzzyHit {
    int score = 0;
    SignatureRecord record;

    friend bool operator==(const FuzzyHit&, const FuzzyHit&) = default;
};

/// Exact and fuzzy signature indexes loaded from CSV
/// (`value,family,source,first_seen`). Read-only once loaded.
class SignatureStore {
public:
    /// Throws InputError if the file is unreadable and FormatError (rejecting
    /// the whole file) if more than half of its data rows are malformed;
    /// otherwise skips bad rows with a warning each.
    ImportResult import_signatures(const std::string& path, SignatureKind kind);

    /// Same as import_signatures over in-memory CSV text; `origin` labels warnings.
    ImportResult import_csv(std::string_view text, SignatureKind kind, std::string_view origin);

    /// Adds or replaces one record (validated).
    void add(SignatureRecord record);

    std::optional<SignatureRecord> lookup_exact(const Digest& d) const;

    /// Matches with score >= threshold, best first (score desc, family asc,
    /// value asc), at most `limit`. Only blocksizes b/2, b and 2b are scored.
    std::vector<FuzzyHit> query_fuzzy(const FuzzySignature& sig, int threshold,
                                      std::size_t limit) const;

    std::size_t exact_count() const noexcept { return exact_.size(); }
    std::size_t fuzzy_count() const noexcept { return fuzzy_by_value_.size(); }
    std::size_t size() const noexcept { return exact_count() + fuzzy_count(); }

    /// Every fuzzy record, for brute-force checks.
    std::vector<SignatureRecord> fuzzy_records() const;

private:
    struct FuzzyEntry {
        FuzzySignature signature;
        SignatureRecord record;
    };

    std::unordered_map<std::string, SignatureRecord> exact_;
    std::map<std::uint64_t, std::vector<FuzzyEntry>> fuzzy_;  // by blocksize
    std::unordered_map<std::string, std::pair<std::uint64_t, std::size_t>> fuzzy_by_value_;
};

/// Writes records as CSV with the standard header.
std::string to_csv(const std::vector<SignatureRecord>& records);

}  // namespace sigtriage
