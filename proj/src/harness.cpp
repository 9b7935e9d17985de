#include "sigtriage/harness.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "sigtriage/errors.hpp"
#include "sigtriage/parallel.hpp"

namespace sigtriage {

namespace fs = std::filesystem;
using namespace std::string_view_literals;

namespace {

// Raw engine output only: distribution objects are not portable across
// standard libraries and corpora must be byte-identical per seed.
std::uint64_t below(std::mt19937_64& rng, std::uint64_t n) { return n == 0 ? 0 : rng() % n; }

std::vector<std::uint8_t> random_bytes(std::mt19937_64& rng, std::size_t n) {
    std::vector<std::uint8_t> out(n);
    for (auto& b : out) b = static_cast<std::uint8_t>(rng() >> 56);
    return out;
}

std::vector<std::uint8_t> to_bytes(std::string_view s) { return {s.begin(), s.end()}; }

void overwrite(std::vector<std::uint8_t>& data, std::size_t at, std::span<const std::uint8_t> bytes) {
    std::copy(bytes.begin(), bytes.end(), data.begin() + static_cast<std::ptrdiff_t>(at));
}

std::string hex_byte(std::uint8_t b) {
    static constexpr char kDigits[] = "0123456789ABCDEF";
    return {kDigits[b >> 4], kDigits[b & 15]};
}

// Capability traits: the byte string planted into samples and the rule that
// looks for it.
struct Trait {
    std::string_view planted;
    std::string_view rule;
};

constexpr std::string_view kSehSave("\x64\xFF\x35\x00\x00\x00\x00\x89\x25\x00\x00\x00\x00", 13);

const std::array<Trait, 5> kTraits{{
    {"GetAsyncKeyState\0SetWindowsHookExA"sv,
     R"(rule keylogger : capability {
    meta:
        severity = "suspicious"
        description = "keyboard hooking APIs"
    strings:
        $a = "GetAsyncKeyState" ascii wide
        $b = "SetWindowsHookEx" ascii wide
    condition:
        all of them
})"},
    {kSehSave,
     R"(rule SEH_Save : antidebug {
    meta:
        description = "structured exception handler frame setup"
    strings:
        $seh = { 64 FF 35 00 00 00 00 89 25 ?? ?? ?? ?? }
    condition:
        $seh
})"},
    {"Software\\Microsoft\\Windows\\CurrentVersion\\Run",
     R"(rule win_registry : persistence {
    meta:
        severity = "suspicious"
    strings:
        $run = "Software\\Microsoft\\Windows\\CurrentVersion\\Run" nocase
    condition:
        $run
})"},
    {"WS2_32.dll\0WSAStartup"sv,
     R"(rule Str_Win32_Winsock2_Library : network {
    strings:
        $dll = "ws2_32.dll" nocase
        $fn = "WSAStartup"
    condition:
        any of them
})"},
    {"http://update.cdn-mirror.test/gate.php",
     R"(rule network_http : network {
    strings:
        $url = /https?:\/\/[a-z0-9.\-]{4,40}\/[a-z]{1,12}\.php/ nocase
    condition:
        $url
})"},
}};

constexpr std::string_view kGenericRules = R"(rule IsPE32 : format {
    meta:
        description = "DOS/PE header"
    condition:
        uint16(0) == 0x5A4D
}

rule IsPacked : packer {
    meta:
        severity = "suspicious"
        description = "xor decoding stub"
    strings:
        $stub = { 60 E8 00 00 00 00 5D 81 ED ?? [3-8] 80 34 0E }
    condition:
        $stub at 0
})";

std::vector<std::uint8_t> pe_header() {
    std::vector<std::uint8_t> h(64, 0);
    h[0] = 'M';
    h[1] = 'Z';
    h[2] = 0x90;
    h[0x3C] = 0x80;
    return h;
}

// Plants one trait with probability 1/2 each, keeping clear of the header.
void plant_traits(std::vector<std::uint8_t>& data, std::mt19937_64& rng) {
    for (const Trait& t : kTraits) {
        if (below(rng, 2) == 0) continue;
        const auto bytes = to_bytes(t.planted);
        const std::size_t at = 64 + below(rng, data.size() - 64 - bytes.size());
        overwrite(data, at, bytes);
    }
}

std::string family_rule(const FamilySpec& f) {
    std::ostringstream out;
    std::string ident = f.name;
    std::replace(ident.begin(), ident.end(), '-', '_');
    out << "rule Family_" << ident << " : family {\n"
        << "    meta:\n"
        << "        severity = \"malicious\"\n"
        << "        family = \"" << f.name << "\"\n"
        << "    strings:\n";
    for (std::size_t k = 0; k < f.markers.size(); ++k) {
        const auto& m = f.markers[k];
        out << "        $m" << k << " = ";
        switch (k % 3) {
            case 0:
                out << '"';
                for (std::uint8_t b : m) out << "\\x" << hex_byte(b);
                out << '"';
                break;
            case 1: {
                out << "{ ";
                const std::size_t half = m.size() / 2;
                for (std::size_t i = 0; i < m.size(); ++i) {
                    if (i == half) out << "[0-4] ";
                    if (i == 2)
                        out << hex_byte(m[i])[0] << "? ";
                    else
                        out << hex_byte(m[i]) << ' ';
                }
                out << '}';
                break;
            }
            default:
                out << '/';
                for (std::size_t i = 0; i < m.size(); ++i) {
                    if (i == m.size() / 2)
                        out << "[\\x00-\\xFF]";
                    else
                        out << "\\x" << hex_byte(m[i]);
                }
                out << '/';
                break;
        }
        out << '\n';
    }
    out << "    condition:\n        2 of ($m*)\n}";
    return out.str();
}

std::vector<std::uint8_t> make_sample(const FamilySpec* family, std::span<const std::uint8_t> base,
                                      std::mt19937_64& rng) {
    std::vector<std::uint8_t> data(base.begin(), base.end());
    // Per-sample region so that members of one family are similar, not equal.
    const std::size_t region = data.size() / 5;
    const std::size_t start = below(rng, data.size() - region);
    overwrite(data, start, random_bytes(rng, region));
    overwrite(data, 0, pe_header());
    plant_traits(data, rng);
    if (family) {
        const std::size_t n = family->markers.size();
        const std::size_t span = (data.size() - 64) / std::max<std::size_t>(n, 1);
        for (std::size_t k = 0; k < n; ++k) {
            const auto& m = family->markers[k];
            const std::size_t at = 64 + k * span + below(rng, span - m.size());
            overwrite(data, at, m);
        }
    }
    return data;
}

MutationSpec concrete_mutation(MutationOp op, const CorpusManifest& m, std::size_t size,
                               std::mt19937_64& rng) {
    const auto sized = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(size * m.size_fraction));
    switch (op) {
        case MutationOp::ByteFlip: return {op, m.flip_count};
        case MutationOp::AppendRandom:
        case MutationOp::PrependRandom:
        case MutationOp::Truncate: return {op, sized};
        case MutationOp::XorEncode: return {op, 1 + below(rng, 255)};
        case MutationOp::BlockShuffle: return {op, m.shuffle_block};
    }
    throw std::logic_error("unknown mutation");
}

void write_file(const fs::path& path, std::span<const std::uint8_t> data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw OutputError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!out) throw OutputError("cannot write " + path.string());
}

void write_text(const fs::path& path, std::string_view text) {
    write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void make_dirs(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw OutputError("cannot create " + dir.string() + ": " + ec.message());
}

std::string csv_field(std::string_view s) {
    if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields(1);
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                fields.back() += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                fields.back() += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.emplace_back();
        } else {
            fields.back() += c;
        }
    }
    return fields;
}

constexpr std::array<std::string_view, 3> kSets{"known", "variant", "novel"};
constexpr std::string_view kFirstSeen = "2021-11-08";

}  // namespace

std::string MutationSpec::describe() const {
    std::string_view name;
    switch (op) {
        case MutationOp::ByteFlip: name = "byte-flip"; break;
        case MutationOp::AppendRandom: name = "append-random"; break;
        case MutationOp::PrependRandom: name = "prepend-random"; break;
        case MutationOp::Truncate: name = "truncate"; break;
        case MutationOp::XorEncode: name = "xor-encode"; break;
        case MutationOp::BlockShuffle: name = "block-shuffle"; break;
    }
    return std::string(name) + "(" + std::to_string(param) + ")";
}

std::vector<std::uint8_t> packer_stub(std::uint8_t key) {
    return {0x60, 0xE8, 0x00, 0x00, 0x00, 0x00, 0x5D, 0x81, 0xED, key, 0x00, 0x00,
            0x00, 0xB9, 0x00, 0x10, 0x00, 0x00, 0x80, 0x34, 0x0E, key, 0xE2, 0xFA};
}

std::vector<std::uint8_t> apply_mutation(std::span<const std::uint8_t> data, const MutationSpec& spec,
                                         std::mt19937_64& rng) {
    std::vector<std::uint8_t> out(data.begin(), data.end());
    switch (spec.op) {
        case MutationOp::ByteFlip:
            if (data.empty() && spec.param > 0) throw std::invalid_argument("byte-flip on empty data");
            for (std::uint64_t i = 0; i < spec.param; ++i) {
                const std::size_t at = below(rng, out.size());
                out[at] ^= static_cast<std::uint8_t>(1 + below(rng, 255));
            }
            break;
        case MutationOp::AppendRandom: {
            const auto extra = random_bytes(rng, spec.param);
            out.insert(out.end(), extra.begin(), extra.end());
            break;
        }
        case MutationOp::PrependRandom: {
            const auto extra = random_bytes(rng, spec.param);
            out.insert(out.begin(), extra.begin(), extra.end());
            break;
        }
        case MutationOp::Truncate:
            if (spec.param >= data.size()) throw std::invalid_argument("truncate exceeds file size");
            out.resize(data.size() - spec.param);
            break;
        case MutationOp::XorEncode: {
            if (spec.param == 0 || spec.param > 255) throw std::invalid_argument("xor key must be 1..255");
            const auto key = static_cast<std::uint8_t>(spec.param);
            for (auto& b : out) b ^= key;
            const auto stub = packer_stub(key);
            out.insert(out.begin(), stub.begin(), stub.end());
            break;
        }
        case MutationOp::BlockShuffle: {
            if (spec.param == 0) throw std::invalid_argument("block size must be positive");
            const std::size_t block = spec.param;
            const std::size_t blocks = (data.size() + block - 1) / block;
            std::vector<std::size_t> order(blocks);
            std::iota(order.begin(), order.end(), 0);
            for (std::size_t i = blocks; i > 1; --i) std::swap(order[i - 1], order[below(rng, i)]);
            out.clear();
            for (std::size_t b : order) {
                const std::size_t from = b * block;
                const std::size_t to = std::min(data.size(), from + block);
                out.insert(out.end(), data.begin() + static_cast<std::ptrdiff_t>(from),
                           data.begin() + static_cast<std::ptrdiff_t>(to));
            }
            break;
        }
    }
    return out;
}

CorpusManifest CorpusManifest::defaults(std::uint64_t seed) {
    CorpusManifest m;
    m.seed = seed;
    std::mt19937_64 rng(seed ^ 0x5eed'fa11'1e5ull);
    for (std::string_view name : {"alpha", "bravo", "charlie", "delta", "echo"}) {
        FamilySpec f;
        f.name = std::string(name);
        f.base_size = 48 * 1024 + below(rng, 48 * 1024);
        for (int k = 0; k < 3; ++k) f.markers.push_back(random_bytes(rng, 16));
        m.families.push_back(std::move(f));
    }
    using Op = MutationOp;
    m.variant_ops = {Op::AppendRandom,  Op::ByteFlip,     Op::PrependRandom, Op::Truncate,
                     Op::AppendRandom,  Op::ByteFlip,     Op::XorEncode,     Op::AppendRandom,
                     Op::PrependRandom, Op::BlockShuffle, Op::ByteFlip,      Op::Truncate,
                     Op::AppendRandom,  Op::XorEncode,    Op::BlockShuffle};
    return m;
}

std::string experiment_rules(const CorpusManifest& manifest) {
    std::string out(kGenericRules);
    for (const Trait& t : kTraits) out += "\n\n" + std::string(t.rule);
    for (const FamilySpec& f : manifest.families) out += "\n\n" + family_rule(f);
    return out + '\n';
}

GeneratedCorpus generate_corpus(const CorpusManifest& manifest, const fs::path& out_dir) {
    if (manifest.families.empty()) throw std::invalid_argument("corpus needs at least one family");
    if (manifest.variant_count > 0 && manifest.variant_ops.empty())
        throw std::invalid_argument("variant set needs at least one mutation");
    for (const FamilySpec& f : manifest.families) {
        std::size_t planted = 0;
        for (const auto& m : f.markers) planted += m.size() + 64;
        if (f.base_size < 1024 || f.base_size < 2 * planted)
            throw std::invalid_argument("family " + f.name + ": base size too small for its markers");
    }

    GeneratedCorpus corpus;
    corpus.root = out_dir;
    for (std::string_view set : kSets) make_dirs(out_dir / "samples" / set);
    make_dirs(out_dir / "db");
    make_dirs(out_dir / "rules");

    std::mt19937_64 rng(manifest.seed);
    std::vector<std::vector<std::uint8_t>> bases;
    for (const FamilySpec& f : manifest.families) bases.push_back(random_bytes(rng, f.base_size));

    auto name_for = [](std::string_view set, std::size_t i) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%03zu.bin", i);
        return "samples/" + std::string(set) + "/" + buf;
    };

    std::vector<std::vector<std::uint8_t>> known;
    std::vector<SignatureRecord> exact_rows;
    std::vector<SignatureRecord> fuzzy_rows;
    for (std::size_t i = 0; i < manifest.known_count; ++i) {
        const std::size_t fam = i % manifest.families.size();
        const FamilySpec& f = manifest.families[fam];
        known.push_back(make_sample(&f, bases[fam], rng));
        const std::string rel = name_for("known", i);
        write_file(out_dir / rel, known.back());
        corpus.truth.push_back({rel, f.name, "known", "none"});
        exact_rows.push_back({SignatureKind::Exact, digest_bytes(std::span<const std::uint8_t>(known.back())).hex(),
                              f.name, "synthetic-corpus", std::string(kFirstSeen)});
        fuzzy_rows.push_back({SignatureKind::Fuzzy, fuzzy_hash(known.back()).render(), f.name,
                              "synthetic-corpus", std::string(kFirstSeen)});
    }

    for (std::size_t i = 0; i < manifest.variant_count; ++i) {
        const std::size_t fam = i % manifest.families.size();
        const FamilySpec& f = manifest.families[fam];
        // Variants derive from the known sample at the same index when there
        // is one, so each models a re-packed copy of a catalogued file.
        const std::vector<std::uint8_t> source =
            i < known.size() ? known[i] : make_sample(&f, bases[fam], rng);
        const MutationOp op = manifest.variant_ops[i % manifest.variant_ops.size()];
        const MutationSpec spec = concrete_mutation(op, manifest, source.size(), rng);
        const auto mutated = apply_mutation(source, spec, rng);
        const std::string rel = name_for("variant", i);
        write_file(out_dir / rel, mutated);
        corpus.truth.push_back({rel, f.name, "variant", spec.describe()});
    }

    for (std::size_t i = 0; i < manifest.novel_count; ++i) {
        const std::string family = "unplanted-" + std::to_string(i % 3);
        const auto base = random_bytes(rng, 32 * 1024 + below(rng, 64 * 1024));
        const auto data = make_sample(nullptr, base, rng);
        const std::string rel = name_for("novel", i);
        write_file(out_dir / rel, data);
        corpus.truth.push_back({rel, family, "novel", "none"});
    }

    std::string truth = "path,family,set,mutation\n";
    for (const auto& row : corpus.truth)
        truth += csv_field(row.path) + ',' + csv_field(row.family) + ',' + row.set + ',' +
                 csv_field(row.mutation) + '\n';
    write_text(out_dir / "ground_truth.csv", truth);

    corpus.exact_db = out_dir / "db" / "exact.csv";
    corpus.fuzzy_db = out_dir / "db" / "fuzzy.csv";
    corpus.rules = out_dir / "rules" / "experiment.yar";
    write_text(corpus.exact_db, to_csv(exact_rows));
    write_text(corpus.fuzzy_db, to_csv(fuzzy_rows));
    write_text(corpus.rules, experiment_rules(manifest));
    return corpus;
}

std::vector<GroundTruthRow> read_ground_truth(const fs::path& corpus_dir) {
    const fs::path path = corpus_dir / "ground_truth.csv";
    std::ifstream in(path);
    if (!in) throw InputError("missing ground truth: " + path.string());
    std::vector<GroundTruthRow> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        if (lineno == 1) {
            if (fields != std::vector<std::string>{"path", "family", "set", "mutation"})
                throw FormatError("ground_truth", "unexpected header");
            continue;
        }
        if (fields.size() != 4)
            throw FormatError("ground_truth", "line " + std::to_string(lineno) + ": expected 4 fields");
        rows.push_back({std::move(fields[0]), std::move(fields[1]), std::move(fields[2]), std::move(fields[3])});
    }
    if (lineno == 0) throw FormatError("ground_truth", "empty file");
    return rows;
}

std::string_view to_string(Approach a) {
    switch (a) {
        case Approach::Exact: return "sha256";
        case Approach::Fuzzy: return "fuzzy";
        case Approach::Rules: return "rules";
    }
    return "?";
}

const DetectionCell& DetectionTable::cell(Approach a, std::string_view set) const {
    const auto it = std::find(sets.begin(), sets.end(), set);
    if (it == sets.end()) throw std::out_of_range("no set named " + std::string(set));
    return cells.at(static_cast<std::size_t>(a)).at(static_cast<std::size_t>(it - sets.begin()));
}

bool DetectionTable::consistent() const {
    for (const auto& row : cells)
        for (const DetectionCell& c : row)
            if (c.classified > c.detected || c.detected > c.matched || c.matched > c.size) return false;
    return true;
}

std::string DetectionTable::to_csv() const {
    std::string out = "approach,set,size,detected,classified,matched\n";
    for (std::size_t a = 0; a < cells.size(); ++a)
        for (std::size_t s = 0; s < sets.size(); ++s) {
            const DetectionCell& c = cells[a][s];
            out += std::string(to_string(static_cast<Approach>(a))) + ',' + sets[s] + ',' +
                   std::to_string(c.size) + ',' + std::to_string(c.detected) + ',' +
                   std::to_string(c.classified) + ',' + std::to_string(c.matched) + '\n';
        }
    return out;
}

std::string DetectionTable::to_text() const {
    // One block of set columns per measure.
    constexpr std::array<std::string_view, 3> kMeasures{"detected as malicious", "matches classification",
                                                        "matched any evidence"};
    constexpr int kApproachWidth = 8;
    constexpr int kColWidth = 9;
    const int block = static_cast<int>(sets.size()) * kColWidth;
    std::ostringstream out;
    out << std::left << std::setw(kApproachWidth) << "approach";
    for (std::string_view m : kMeasures) out << " | " << std::setw(block) << m;
    out << '\n' << std::setw(kApproachWidth) << "";
    for (std::size_t m = 0; m < kMeasures.size(); ++m) {
        out << " | ";
        for (const auto& s : sets) out << std::setw(kColWidth) << s;
    }
    out << '\n';
    for (std::size_t a = 0; a < cells.size(); ++a) {
        out << std::left << std::setw(kApproachWidth) << to_string(static_cast<Approach>(a));
        for (std::size_t m = 0; m < kMeasures.size(); ++m) {
            out << " | ";
            for (std::size_t s = 0; s < sets.size(); ++s) {
                const DetectionCell& c = cells[a][s];
                const std::size_t v = m == 0 ? c.detected : m == 1 ? c.classified : c.matched;
                out << std::setw(kColWidth) << (std::to_string(v) + "/" + std::to_string(c.size));
            }
        }
        out << '\n';
    }
    std::string text;
    std::istringstream lines(out.str());
    for (std::string line; std::getline(lines, line);) {
        line.erase(line.find_last_not_of(' ') + 1);
        text += line + '\n';
    }
    return text;
}

DetectionTable run_experiment(const fs::path& corpus_dir, const SignatureStore& store,
                              const CompiledRuleSet& rules, const TriageConfig& cfg, std::size_t threads) {
    const auto truth = read_ground_truth(corpus_dir);

    DetectionTable table;
    for (std::string_view s : kSets)
        if (std::any_of(truth.begin(), truth.end(), [&](const auto& r) { return r.set == s; }))
            table.sets.emplace_back(s);
    for (const auto& r : truth)
        if (std::find(table.sets.begin(), table.sets.end(), r.set) == table.sets.end())
            table.sets.push_back(r.set);
    table.cells.assign(3, std::vector<DetectionCell>(table.sets.size()));

    std::vector<TriageReport> reports(truth.size());
    parallel_for(truth.size(), threads, [&](std::size_t i) {
        reports[i] = triage_file((corpus_dir / truth[i].path).string(), store, rules, cfg);
    });

    for (std::size_t i = 0; i < truth.size(); ++i) {
        const GroundTruthRow& row = truth[i];
        const TriageReport& r = reports[i];
        const auto col = static_cast<std::size_t>(
            std::find(table.sets.begin(), table.sets.end(), row.set) - table.sets.begin());
        auto tally = [&](Approach a, bool matched, bool detected, bool classified) {
            DetectionCell& c = table.cells[static_cast<std::size_t>(a)][col];
            ++c.size;
            c.matched += matched;
            c.detected += detected;
            c.classified += detected && classified;
        };

        tally(Approach::Exact, r.exact.has_value(), r.exact.has_value(),
              r.exact && r.exact->family == row.family);

        // fuzzy_matches is sorted best first.
        const bool fuzzy_hit = !r.fuzzy_matches.empty() && r.fuzzy_matches.front().score >= cfg.fuzzy_threshold;
        tally(Approach::Fuzzy, !r.fuzzy_matches.empty(), fuzzy_hit,
              fuzzy_hit && r.fuzzy_matches.front().record.family == row.family);

        const RuleEvidence* first_malicious = nullptr;
        for (const RuleEvidence& e : r.rules)
            if (e.severity == Severity::Malicious) {
                first_malicious = &e;
                break;
            }
        tally(Approach::Rules, !r.rules.empty(), first_malicious != nullptr,
              first_malicious && first_malicious->family == row.family);
    }
    return table;
}

}  // namespace sigtriage
