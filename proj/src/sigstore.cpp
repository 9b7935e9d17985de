#include "sigtriage/sigstore.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "sigtriage/errors.hpp"

namespace sigtriage {

std::string_view to_string(SignatureKind k) { return k == SignatureKind::Exact ? "exact" : "fuzzy"; }

namespace {

constexpr std::string_view kHeader = "value,family,source,first_seen";

// Splits one CSV line; double-quoted fields may contain commas and "" escapes.
bool split_csv(std::string_view line, std::vector<std::string>& fields) {
    fields.clear();
    std::string cur;
    bool quoted = false;
    bool was_quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            if (!cur.empty() || was_quoted) return false;
            quoted = was_quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
            was_quoted = false;
        } else {
            if (was_quoted) return false;
            cur.push_back(c);
        }
    }
    if (quoted) return false;
    fields.push_back(std::move(cur));
    return true;
}

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

bool digits(std::string_view s) {
    return !s.empty() &&
           std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

// YYYY-MM-DD, optionally followed by 'T' or ' ' and a time part.
bool iso_date(std::string_view s) {
    if (s.size() < 10 || s[4] != '-' || s[7] != '-') return false;
    if (!digits(s.substr(0, 4)) || !digits(s.substr(5, 2)) || !digits(s.substr(8, 2))) return false;
    const int month = std::stoi(std::string(s.substr(5, 2)));
    const int day = std::stoi(std::string(s.substr(8, 2)));
    if (month < 1 || month > 12 || day < 1 || day > 31) return false;
    return s.size() == 10 || s[10] == 'T' || s[10] == ' ';
}

// Canonicalises and validates; throws FormatError.
SignatureRecord normalise(SignatureRecord r) {
    if (r.kind == SignatureKind::Exact)
        r.value = Digest::from_hex(r.value).hex();
    else
        r.value = parse_signature(r.value).render();
    if (r.family.empty()) throw FormatError("family", "empty");
    if (!r.first_seen.empty() && !iso_date(r.first_seen))
        throw FormatError("first_seen", "not an ISO-8601 date: '" + r.first_seen + "'");
    return r;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

}  // namespace

void SignatureStore::add(SignatureRecord record) {
    record = normalise(std::move(record));
    if (record.kind == SignatureKind::Exact) {
        exact_.insert_or_assign(record.value, std::move(record));
        return;
    }
    FuzzySignature sig = parse_signature(record.value);
    if (auto it = fuzzy_by_value_.find(record.value); it != fuzzy_by_value_.end()) {
        auto& slot = fuzzy_[it->second.first][it->second.second];
        slot.record = std::move(record);
        return;
    }
    auto& bucket = fuzzy_[sig.blocksize];
    fuzzy_by_value_.emplace(record.value, std::make_pair(sig.blocksize, bucket.size()));
    bucket.push_back(FuzzyEntry{std::move(sig), std::move(record)});
}

ImportResult SignatureStore::import_csv(std::string_view text, SignatureKind kind,
                                        std::string_view origin) {
    ImportResult result;
    std::vector<SignatureRecord> rows;
    std::size_t data_rows = 0;
    std::size_t line_no = 0;
    bool first_content = true;
    std::vector<std::string> fields;

    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        std::string_view line = text.substr(pos, eol - pos);
        pos = eol + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        const std::string trimmed = trim(line);
        if (trimmed.empty() || trimmed.front() == '#') {
            if (eol == text.size()) break;
            continue;
        }
        if (first_content) {
            first_content = false;
            if (trimmed == kHeader) continue;
        }
        ++data_rows;
        auto warn = [&](const std::string& why) {
            result.warnings.push_back(std::string(origin) + ":" + std::to_string(line_no) + ": " + why);
        };
        if (!split_csv(line, fields)) {
            warn("malformed CSV quoting");
            continue;
        }
        if (fields.size() != 4) {
            warn("expected 4 fields, got " + std::to_string(fields.size()));
            continue;
        }
        SignatureRecord r{kind, trim(fields[0]), trim(fields[1]), trim(fields[2]), trim(fields[3])};
        try {
            rows.push_back(normalise(std::move(r)));
        } catch (const FormatError& e) {
            warn(e.what());
        }
        if (eol == text.size()) break;
    }

    const std::size_t bad = data_rows - rows.size();
    if (data_rows > 0 && bad * 2 > data_rows)
        throw FormatError(std::string(origin), "import rejected, " + std::to_string(bad) + " of " +
                                                   std::to_string(data_rows) + " rows malformed");

    for (auto& r : rows) {
        if (r.kind == SignatureKind::Exact) {
            if (auto it = exact_.find(r.value); it != exact_.end() && !(it->second == r))
                result.warnings.push_back(std::string(origin) + ": digest " + r.value +
                                          " re-imported, replacing family '" + it->second.family +
                                          "' with '" + r.family + "'");
        }
        add(std::move(r));
        ++result.accepted;
    }
    return result;
}

ImportResult SignatureStore::import_signatures(const std::string& path, SignatureKind kind) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError(path + ": cannot open signature file");
    std::ostringstream buf;
    buf << in.rdbuf();
    if (in.bad()) throw InputError(path + ": read failed");
    return import_csv(buf.str(), kind, path);
}

std::optional<SignatureRecord> SignatureStore::lookup_exact(const Digest& d) const {
    if (auto it = exact_.find(d.hex()); it != exact_.end()) return it->second;
    return std::nullopt;
}

std::vector<FuzzyHit> SignatureStore::query_fuzzy(const FuzzySignature& sig, int threshold,
                                                  std::size_t limit) const {
    std::vector<FuzzyHit> hits;
    std::vector<std::uint64_t> sizes{sig.blocksize, sig.blocksize * 2};
    if (sig.blocksize % 2 == 0 && is_valid_blocksize(sig.blocksize / 2))
        sizes.push_back(sig.blocksize / 2);
    for (std::uint64_t b : sizes) {
        auto it = fuzzy_.find(b);
        if (it == fuzzy_.end()) continue;
        for (const auto& entry : it->second) {
            const int score = fuzzy_compare(sig, entry.signature);
            if (score >= threshold) hits.push_back(FuzzyHit{score, entry.record});
        }
    }
    std::sort(hits.begin(), hits.end(), [](const FuzzyHit& a, const FuzzyHit& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.record.family != b.record.family) return a.record.family < b.record.family;
        return a.record.value < b.record.value;
    });
    if (hits.size() > limit) hits.resize(limit);
    return hits;
}

std::vector<SignatureRecord> SignatureStore::fuzzy_records() const {
    std::vector<SignatureRecord> out;
    for (const auto& [bs, bucket] : fuzzy_)
        for (const auto& e : bucket) out.push_back(e.record);
    return out;
}

std::string to_csv(const std::vector<SignatureRecord>& records) {
    std::string out(kHeader);
    out += "\n";
    for (const auto& r : records)
        out += csv_field(r.value) + "," + csv_field(r.family) + "," + csv_field(r.source) + "," +
               csv_field(r.first_seen) + "\n";
    return out;
}

}  // namespace sigtriage
