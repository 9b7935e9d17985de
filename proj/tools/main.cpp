// sigtriage command-line front end.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "sigtriage/ctph.hpp"
#include "sigtriage/engine.hpp"
#include "sigtriage/errors.hpp"
#include "sigtriage/exacthash.hpp"
#include "sigtriage/harness.hpp"
#include "sigtriage/parallel.hpp"
#include "sigtriage/rulelang.hpp"
#include "sigtriage/sigstore.hpp"
#include "sigtriage/triage.hpp"

namespace fs = std::filesystem;
using namespace sigtriage;

namespace {

enum Exit : int {
    kOk = 0,
    kIo = 2,
    kSuspicious = 3,
    kMalicious = 4,
    kUsage = 64,
    kData = 65,
    kCantCreate = 73,
};

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Options {
    std::vector<std::string> paths;
    std::vector<std::string> rules;
    std::vector<std::string> exact_dbs;
    std::vector<std::string> fuzzy_dbs;
    int threshold = 50;
    std::string format = "text";
    std::uint64_t seed = kDefaultSeed;
    std::uint64_t max_file_size = kDefaultMaxFileSize;
    std::string out;
    std::string sig_a;
    std::string sig_b;
};

// One input after expansion; `error` is set when the path cannot be walked.
struct Input {
    std::string path;
    std::string error;
};

std::vector<Input> expand_inputs(const std::vector<std::string>& args) {
    std::vector<Input> out;
    for (const auto& arg : args) {
        std::error_code ec;
        if (fs::is_directory(arg, ec)) {
            std::vector<std::string> found;
            fs::recursive_directory_iterator it(arg, ec), end;
            for (; !ec && it != end; it.increment(ec))
                if (it->is_regular_file(ec)) found.push_back(it->path().string());
            if (ec) {
                out.push_back({arg, ec.message()});
                continue;
            }
            std::sort(found.begin(), found.end());
            for (auto& f : found) out.push_back({std::move(f), {}});
        } else {
            out.push_back({arg, {}});
        }
    }
    return out;
}

ReportFormat report_format(const Options& o) { return o.format == "json" ? ReportFormat::Json : ReportFormat::Text; }

void report_error(const std::string& path, const std::string& message) {
    if (message.starts_with(path))
        std::cerr << "error: " << message << '\n';
    else
        std::cerr << "error: " << path << ": " << message << '\n';
}

// Per-file worker output, emitted in input order once all files are done.
struct FileOutcome {
    bool ok = false;
    std::string text;
    std::string error;
};

template <typename Fn>
std::vector<FileOutcome> for_each_file(const std::vector<Input>& inputs, Fn&& fn) {
    std::vector<FileOutcome> outcomes(inputs.size());
    parallel_for(inputs.size(), default_threads(), [&](std::size_t i) {
        FileOutcome& o = outcomes[i];
        if (!inputs[i].error.empty()) {
            o.error = inputs[i].error;
            return;
        }
        try {
            o.text = fn(i, inputs[i].path);
            o.ok = true;
        } catch (const std::exception& e) {
            o.error = e.what();
        }
    });
    return outcomes;
}

CompiledRuleSet load_rules(const std::vector<std::string>& paths) { return compile(load_rule_files(paths)); }

SignatureStore load_store(const Options& o) {
    SignatureStore store;
    auto import = [&](const std::string& path, SignatureKind kind) {
        const ImportResult r = store.import_signatures(path, kind);
        for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
    };
    for (const auto& p : o.exact_dbs) import(p, SignatureKind::Exact);
    for (const auto& p : o.fuzzy_dbs) import(p, SignatureKind::Fuzzy);
    return store;
}

int cmd_hash(const Options& o) {
    const auto inputs = expand_inputs(o.paths);
    const bool json_out = o.format == "json";
    const auto outcomes = for_each_file(inputs, [&](std::size_t, const std::string& path) {
        const auto data = read_file_capped(path, o.max_file_size);
        const Digest d = digest_bytes(std::span<const std::uint8_t>(data));
        const std::string sig = data.empty() ? std::string() : fuzzy_hash(data).render();
        if (json_out)
            return nlohmann::json{{"file", path}, {"sha256", d.hex()}, {"ssdeep", sig}}.dump() + "\n";
        return d.hex() + "  " + (sig.empty() ? "-" : sig) + "  " + path + "\n";
    });
    bool failed = false;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        if (outcomes[i].ok) {
            std::cout << outcomes[i].text;
        } else {
            report_error(inputs[i].path, outcomes[i].error);
            failed = true;
        }
    }
    return failed ? kIo : kOk;
}

int cmd_compare(const Options& o) {
    auto parse = [](const std::string& text, int which) {
        try {
            return parse_signature(text);
        } catch (const FormatError& e) {
            throw FormatError("argument " + std::to_string(which), e.what());
        }
    };
    const FuzzySignature a = parse(o.sig_a, 1);
    const FuzzySignature b = parse(o.sig_b, 2);
    std::cout << fuzzy_compare(a, b) << '\n';
    return kOk;
}

int cmd_scan(const Options& o) {
    const CompiledRuleSet rules = load_rules(o.rules);
    const auto inputs = expand_inputs(o.paths);
    const bool json_out = o.format == "json";
    const auto outcomes = for_each_file(inputs, [&](std::size_t, const std::string& path) {
        const auto data = read_file_capped(path, o.max_file_size);
        const MatchResult m = rules.scan(data);
        if (json_out) return render_match_json(path, m) + "\n";
        std::vector<std::string> names;
        for (const RuleMatch* r : m.matched()) names.push_back(r->name);
        return render_rule_listing(path, names);
    });
    bool failed = false;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        if (outcomes[i].ok) {
            std::cout << outcomes[i].text;
        } else {
            report_error(inputs[i].path, outcomes[i].error);
            failed = true;
        }
    }
    return failed ? kIo : kOk;
}

int cmd_triage(const Options& o) {
    const CompiledRuleSet rules = o.rules.empty() ? compile(RuleSet{}) : load_rules(o.rules);
    const SignatureStore store = load_store(o);
    TriageConfig cfg;
    cfg.fuzzy_threshold = o.threshold;
    cfg.max_file_size = o.max_file_size;
    const auto inputs = expand_inputs(o.paths);

    const ReportFormat fmt = report_format(o);
    std::vector<Verdict> verdicts(inputs.size(), Verdict::Unknown);
    const auto outcomes = for_each_file(inputs, [&](std::size_t i, const std::string& path) {
        const TriageReport r = triage_file(path, store, rules, cfg);
        verdicts[i] = r.verdict;
        return render_report(r, fmt);
    });

    std::size_t succeeded = 0;
    Verdict worst = Verdict::Unknown;
    nlohmann::json array = nlohmann::json::array();
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const FileOutcome& out = outcomes[i];
        if (!out.ok) {
            report_error(inputs[i].path, out.error);
            continue;
        }
        ++succeeded;
        worst = std::max(worst, verdicts[i]);
        if (fmt == ReportFormat::Json)
            array.push_back(nlohmann::json::parse(out.text));
        else
            std::cout << (succeeded > 1 ? "\n" : "") << out.text;
    }
    if (fmt == ReportFormat::Json) std::cout << array.dump(2) << '\n';
    if (succeeded == 0 && !inputs.empty()) return kIo;
    switch (worst) {
        case Verdict::Unknown: return kOk;
        case Verdict::Suspicious: return kSuspicious;
        default: return kMalicious;
    }
}

int cmd_compile(const Options& o) {
    const RuleSet rs = load_rule_files(o.rules);
    const CompiledRuleSet c = compile(rs);
    if (o.format == "json") {
        nlohmann::json j = {{"rules", c.rule_count()},
                            {"atoms", c.atoms().size()},
                            {"full_scan", c.full_scan_patterns()},
                            {"fuzzy", c.fuzzy_needed()}};
        std::cout << j.dump(2) << '\n';
    } else {
        std::cout << c.rule_count() << " rules, " << c.atoms().size() << " atoms\n";
        for (const auto& p : c.full_scan_patterns()) std::cout << "unanchored: " << p << '\n';
    }
    return kOk;
}

int cmd_import(const Options& o) {
    if (o.exact_dbs.empty() && o.fuzzy_dbs.empty()) throw UsageError("import needs --exact-db or --fuzzy-db");
    SignatureStore store;
    std::vector<SignatureRecord> accepted;
    auto import = [&](const std::string& path, SignatureKind kind) {
        const ImportResult r = store.import_signatures(path, kind);
        for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
        std::cout << path << ": " << r.accepted << " " << to_string(kind) << " signatures\n";
    };
    for (const auto& p : o.exact_dbs) import(p, SignatureKind::Exact);
    for (const auto& p : o.fuzzy_dbs) import(p, SignatureKind::Fuzzy);
    std::cout << "total: " << store.exact_count() << " exact, " << store.fuzzy_count() << " fuzzy\n";
    return kOk;
}

int cmd_eval(const Options& o) {
    const fs::path out = o.out;
    const CorpusManifest manifest = CorpusManifest::defaults(o.seed);
    const GeneratedCorpus corpus = generate_corpus(manifest, out / "corpus");

    SignatureStore store;
    store.import_signatures(corpus.exact_db.string(), SignatureKind::Exact);
    store.import_signatures(corpus.fuzzy_db.string(), SignatureKind::Fuzzy);
    const CompiledRuleSet rules = load_rules({corpus.rules.string()});
    TriageConfig cfg;
    cfg.fuzzy_threshold = o.threshold;
    cfg.max_file_size = o.max_file_size;

    const DetectionTable table = run_experiment(out / "corpus", store, rules, cfg, default_threads());
    auto write = [&](const fs::path& p, const std::string& text) {
        std::ofstream f(p, std::ios::trunc);
        if (!(f << text)) throw OutputError("cannot write " + p.string());
    };
    write(out / "table.csv", table.to_csv());
    write(out / "table.txt", table.to_text());
    std::cout << (o.format == "json" ? table.to_csv() : table.to_text());
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Signature-based file triage: exact digests, fuzzy hashes and pattern rules"};
    app.require_subcommand(1);
    Options o;

    auto add_format = [&](CLI::App* sub) {
        sub->add_option("--format", o.format, "Output format")->check(CLI::IsMember({"json", "text"}));
    };
    auto add_size = [&](CLI::App* sub) {
        sub->add_option("--max-file-size", o.max_file_size, "Skip files larger than this (bytes)")
            ->check(CLI::PositiveNumber);
    };
    // Repeatable options take one value each so they never swallow positional paths.
    auto repeatable = [](CLI::Option* opt) {
        return opt->expected(1)->allow_extra_args(false)->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
    };
    auto add_rules = [&](CLI::App* sub) {
        return repeatable(sub->add_option("--rules", o.rules, "Rule file or directory (repeatable)"));
    };
    auto add_dbs = [&](CLI::App* sub) {
        repeatable(sub->add_option("--exact-db", o.exact_dbs, "SHA-256 signature CSV (repeatable)"));
        repeatable(sub->add_option("--fuzzy-db", o.fuzzy_dbs, "Fuzzy signature CSV (repeatable)"));
    };
    auto add_threshold = [&](CLI::App* sub) {
        sub->add_option("--threshold", o.threshold, "Fuzzy detection threshold")->check(CLI::Range(0, 100));
    };

    auto* hash = app.add_subcommand("hash", "Print SHA-256 and fuzzy signature per file");
    hash->add_option("paths", o.paths, "Files or directories")->required();
    add_format(hash);
    add_size(hash);

    auto* cmp = app.add_subcommand("compare", "Similarity (0-100) of two fuzzy signatures");
    cmp->add_option("a", o.sig_a)->required();
    cmp->add_option("b", o.sig_b)->required();

    auto* scan = app.add_subcommand("scan", "List rules matching each file");
    scan->add_option("paths", o.paths, "Files or directories")->required();
    add_rules(scan)->required();
    add_format(scan);
    add_size(scan);

    auto* tri = app.add_subcommand("triage", "Verdict and classification per file");
    tri->add_option("paths", o.paths, "Files or directories")->required();
    add_rules(tri);
    add_dbs(tri);
    add_threshold(tri);
    add_format(tri);
    add_size(tri);

    auto* comp = app.add_subcommand("compile", "Check rule files and summarize the compiled set");
    add_rules(comp)->required();
    add_format(comp);

    auto* imp = app.add_subcommand("import", "Validate signature CSV files");
    add_dbs(imp);

    auto* eval = app.add_subcommand("eval", "Generate a synthetic corpus and tabulate detection");
    eval->add_option("--seed", o.seed, "Corpus seed");
    eval->add_option("--out", o.out, "Output directory")->required();
    add_threshold(eval);
    add_format(eval);
    add_size(eval);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }

    try {
        if (*hash) return cmd_hash(o);
        if (*cmp) return cmd_compare(o);
        if (*scan) return cmd_scan(o);
        if (*tri) return cmd_triage(o);
        if (*comp) return cmd_compile(o);
        if (*imp) return cmd_import(o);
        if (*eval) return cmd_eval(o);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kData;
    } catch (const FormatError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kData;
    } catch (const CompileError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kData;
    } catch (const OutputError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kCantCreate;
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kIo;
    }
    return kUsage;
}
