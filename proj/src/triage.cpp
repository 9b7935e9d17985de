#include "sigtriage/triage.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "json.hpp"
#include "sigtriage/errors.hpp"

namespace sigtriage {

using nlohmann::json;

std::string_view to_string(Verdict v) {
    switch (v) {
        case Verdict::Unknown: return "unknown";
        case Verdict::Suspicious: return "suspicious";
        case Verdict::LikelyMalicious: return "likely-malicious";
        case Verdict::KnownMalicious: return "known-malicious";
    }
    return "unknown";
}

Verdict verdict_from_string(std::string_view s) {
    if (s == "unknown") return Verdict::Unknown;
    if (s == "suspicious") return Verdict::Suspicious;
    if (s == "likely-malicious") return Verdict::LikelyMalicious;
    if (s == "known-malicious") return Verdict::KnownMalicious;
    throw FormatError("verdict", "unknown verdict '" + std::string(s) + "'");
}

std::string_view to_string(Provenance p) {
    switch (p) {
        case Provenance::Exact: return "exact";
        case Provenance::Fuzzy: return "fuzzy";
        case Provenance::Rule: return "rule";
    }
    return "rule";
}

namespace {

Provenance provenance_from(std::string_view s) {
    if (s == "exact") return Provenance::Exact;
    if (s == "fuzzy") return Provenance::Fuzzy;
    if (s == "rule") return Provenance::Rule;
    throw FormatError("provenance", "unknown provenance '" + std::string(s) + "'");
}

Severity severity_from(std::string_view s) {
    if (s == "info") return Severity::Info;
    if (s == "suspicious") return Severity::Suspicious;
    if (s == "malicious") return Severity::Malicious;
    throw FormatError("severity", "unknown severity '" + std::string(s) + "'");
}

json record_json(const SignatureRecord& r) {
    return json{{"kind", to_string(r.kind)}, {"value", r.value}, {"family", r.family},
                {"source", r.source},        {"first_seen", r.first_seen}};
}

SignatureRecord record_from(const json& j) {
    SignatureRecord r;
    const std::string kind = j.at("kind").get<std::string>();
    if (kind != "exact" && kind != "fuzzy") throw FormatError("kind", "unknown kind '" + kind + "'");
    r.kind = kind == "exact" ? SignatureKind::Exact : SignatureKind::Fuzzy;
    r.value = j.at("value").get<std::string>();
    r.family = j.at("family").get<std::string>();
    r.source = j.at("source").get<std::string>();
    r.first_seen = j.at("first_seen").get<std::string>();
    return r;
}

void add_label(std::vector<ClassificationLabel>& labels, const std::string& family, Provenance p,
               bool primary) {
    if (family.empty()) return;
    for (const auto& l : labels)
        if (l.family == family && l.provenance == p) return;
    labels.push_back({family, p, primary});
}

}  // namespace

const ClassificationLabel* TriageReport::primary() const {
    for (const auto& l : classification)
        if (l.primary) return &l;
    return nullptr;
}

std::vector<std::uint8_t> read_file_capped(const std::string& path, std::uint64_t max_size) {
    std::error_code ec;
    const auto status = std::filesystem::status(path, ec);
    if (ec || !std::filesystem::exists(status)) throw InputError(path + ": no such file");
    if (!std::filesystem::is_regular_file(status)) throw InputError(path + ": not a regular file");
    const auto size = std::filesystem::file_size(path, ec);
    if (ec) throw InputError(path + ": cannot stat: " + ec.message());
    if (size > max_size)
        throw InputError(path + ": file size " + std::to_string(size) + " exceeds limit of " +
                         std::to_string(max_size) + " bytes, skipped");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError(path + ": cannot open");
    std::vector<std::uint8_t> data(static_cast<std::size_t>(size));
    if (size > 0 && !in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(size)))
        throw InputError(path + ": read failed");
    return data;
}

TriageReport triage_bytes(std::string name, std::span<const std::uint8_t> data,
                          const SignatureStore& store, const CompiledRuleSet& rules,
                          const TriageConfig& cfg) {
    TriageReport r;
    r.file = std::move(name);
    r.digest = digest_bytes(data);
    if (!data.empty()) r.fuzzy = fuzzy_hash(data);

    r.exact = store.lookup_exact(r.digest);
    if (r.fuzzy)
        r.fuzzy_matches = store.query_fuzzy(*r.fuzzy, std::min(cfg.fuzzy_evidence_min, cfg.fuzzy_threshold),
                                            cfg.max_fuzzy_matches);

    const MatchResult m = rules.scan(data);
    std::set<std::string> caps;
    for (const RuleMatch* rm : m.matched()) {
        r.rules.push_back(RuleEvidence{rm->name, rm->tags, rm->severity, rm->family});
        caps.insert(rm->name);
        caps.insert(rm->tags.begin(), rm->tags.end());
    }
    r.capabilities.assign(caps.begin(), caps.end());

    const bool fuzzy_detected =
        !r.fuzzy_matches.empty() && r.fuzzy_matches.front().score >= cfg.fuzzy_threshold;
    const RuleEvidence* malicious_rule = nullptr;
    for (const auto& e : r.rules) {
        if (e.severity != Severity::Malicious) continue;
        if (malicious_rule == nullptr || (malicious_rule->family.empty() && !e.family.empty()))
            malicious_rule = &e;
    }

    if (r.exact) {
        r.verdict = Verdict::KnownMalicious;
        add_label(r.classification, r.exact->family, Provenance::Exact, true);
    } else if (fuzzy_detected) {
        r.verdict = Verdict::LikelyMalicious;
        add_label(r.classification, r.fuzzy_matches.front().record.family, Provenance::Fuzzy, true);
    } else if (malicious_rule != nullptr) {
        r.verdict = Verdict::LikelyMalicious;
        add_label(r.classification, malicious_rule->family, Provenance::Rule, true);
    } else if (!r.rules.empty()) {
        r.verdict = Verdict::Suspicious;
    }

    // Remaining evidence as secondary labels.
    std::vector<ClassificationLabel> secondary;
    if (r.exact) add_label(secondary, r.exact->family, Provenance::Exact, false);
    for (const auto& hit : r.fuzzy_matches)
        if (hit.score >= cfg.fuzzy_threshold) add_label(secondary, hit.record.family, Provenance::Fuzzy, false);
    for (const auto& e : r.rules) add_label(secondary, e.family, Provenance::Rule, false);
    std::sort(secondary.begin(), secondary.end(), [](const auto& a, const auto& b) {
        if (a.provenance != b.provenance) return a.provenance < b.provenance;
        return a.family < b.family;
    });
    for (const auto& l : secondary) {
        const bool dup = std::any_of(r.classification.begin(), r.classification.end(), [&](const auto& c) {
            return c.family == l.family && c.provenance == l.provenance;
        });
        if (!dup) r.classification.push_back(l);
    }
    return r;
}

TriageReport triage_file(const std::string& path, const SignatureStore& store,
                         const CompiledRuleSet& rules, const TriageConfig& cfg) {
    const std::vector<std::uint8_t> data = read_file_capped(path, cfg.max_file_size);
    return triage_bytes(path, data, store, rules, cfg);
}

std::string render_rule_listing(std::string_view name, const std::vector<std::string>& rule_names) {
    std::string out = "-" + std::string(name) + ":\n";
    if (rule_names.empty()) out += "(no matches)\n";
    for (const auto& n : rule_names) out += n + "\n";
    return out;
}

std::string render_report(const TriageReport& r, ReportFormat format) {
    if (format == ReportFormat::Json) {
        json classification = json::array();
        for (const auto& l : r.classification)
            classification.push_back(
                {{"family", l.family}, {"provenance", to_string(l.provenance)}, {"primary", l.primary}});
        json fuzzy = json::array();
        for (const auto& h : r.fuzzy_matches)
            fuzzy.push_back({{"score", h.score}, {"record", record_json(h.record)}});
        json rules = json::array();
        for (const auto& e : r.rules)
            rules.push_back({{"rule", e.rule},
                             {"tags", e.tags},
                             {"severity", to_string(e.severity)},
                             {"family", e.family}});
        json j = {
            {"file", r.file},
            {"sha256", r.digest.hex()},
            {"ssdeep", r.fuzzy ? r.fuzzy->render() : std::string()},
            {"verdict", to_string(r.verdict)},
            {"classification", classification},
            {"capabilities", r.capabilities},
            {"evidence",
             {{"exact", r.exact ? record_json(*r.exact) : json(nullptr)}, {"fuzzy", fuzzy}, {"rules", rules}}},
        };
        return j.dump(2) + "\n";
    }

    std::string out;
    out += "file:     " + r.file + "\n";
    out += "sha256:   " + r.digest.hex() + "\n";
    out += "ssdeep:   " + (r.fuzzy ? r.fuzzy->render() : std::string("-")) + "\n";
    out += "verdict:  " + std::string(to_string(r.verdict)) + "\n";
    out += "family:   ";
    if (r.classification.empty()) out += "-";
    for (std::size_t i = 0; i < r.classification.size(); ++i) {
        const auto& l = r.classification[i];
        if (i > 0) out += ", ";
        out += l.family + " (" + std::string(to_string(l.provenance)) + (l.primary ? ", primary" : "") + ")";
    }
    out += "\n";
    if (r.exact) out += "exact:    " + r.exact->family + " [" + r.exact->source + "]\n";
    for (const auto& h : r.fuzzy_matches)
        out += "fuzzy:    " + std::to_string(h.score) + "% " + h.record.family + " " + h.record.value + "\n";
    std::vector<std::string> names;
    for (const auto& e : r.rules) names.push_back(e.rule);
    out += render_rule_listing(r.file, names);
    return out;
}

TriageReport parse_report_json(std::string_view text) {
    try {
        const json j = json::parse(text);
        TriageReport r;
        r.file = j.at("file").get<std::string>();
        r.digest = Digest::from_hex(j.at("sha256").get<std::string>());
        const std::string ssdeep = j.at("ssdeep").get<std::string>();
        if (!ssdeep.empty()) r.fuzzy = parse_signature(ssdeep);
        r.verdict = verdict_from_string(j.at("verdict").get<std::string>());
        for (const auto& l : j.at("classification"))
            r.classification.push_back({l.at("family").get<std::string>(),
                                        provenance_from(l.at("provenance").get<std::string>()),
                                        l.at("primary").get<bool>()});
        r.capabilities = j.at("capabilities").get<std::vector<std::string>>();
        const json& ev = j.at("evidence");
        if (!ev.at("exact").is_null()) r.exact = record_from(ev.at("exact"));
        for (const auto& h : ev.at("fuzzy"))
            r.fuzzy_matches.push_back({h.at("score").get<int>(), record_from(h.at("record"))});
        for (const auto& e : ev.at("rules"))
            r.rules.push_back({e.at("rule").get<std::string>(), e.at("tags").get<std::vector<std::string>>(),
                               severity_from(e.at("severity").get<std::string>()),
                               e.at("family").get<std::string>()});
        return r;
    } catch (const json::exception& e) {
        throw FormatError("report", e.what());
    }
}

std::string render_match_json(std::string_view name, const MatchResult& m) {
    json rules = json::array();
    for (const auto& r : m.rules) {
        json patterns = json::array();
        for (const auto& p : r.patterns)
            patterns.push_back({{"id", p.id}, {"offsets", p.offsets}, {"truncated", p.truncated}});
        rules.push_back({{"rule", r.name},
                         {"matched", r.matched},
                         {"tags", r.tags},
                         {"severity", to_string(r.severity)},
                         {"family", r.family},
                         {"patterns", patterns}});
    }
    json j = {{"file", std::string(name)},
              {"filesize", m.filesize},
              {"ssdeep", m.fuzzy ? m.fuzzy->render() : std::string()},
              {"rules", rules}};
    return j.dump(2);
}

}  // namespace sigtriage
