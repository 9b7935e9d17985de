#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <random>
#include <sstream>

#include "sigtriage/ctph.hpp"
#include "sigtriage/exacthash.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Outcome {
    int code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() / ("cli_test_" + std::to_string(std::random_device{}()));
        fs::create_directories(dir_);
    }
    void TearDown() override {
        fs::permissions(dir_, fs::perms::owner_all, fs::perm_options::add);
        fs::remove_all(dir_);
    }

    fs::path write(const std::string& rel, const std::string& content) {
        const fs::path p = dir_ / rel;
        fs::create_directories(p.parent_path());
        std::ofstream(p, std::ios::binary) << content;
        return p;
    }

    static std::string quote(const std::string& s) {
        std::string q = "'";
        for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
        return q + "'";
    }

    Outcome run(const std::vector<std::string>& args, const std::string& env = {}) {
        std::string cmd = env.empty() ? "" : env + " ";
        cmd += quote(SIGTRIAGE_CLI);
        for (const auto& a : args) cmd += " " + quote(a);
        const fs::path err = dir_ / "stderr.txt";
        cmd += " 2>" + quote(err.string());
        Outcome r;
        FILE* pipe = popen(cmd.c_str(), "r");
        if (pipe == nullptr) return r;
        std::array<char, 4096> buf{};
        std::size_t n = 0;
        while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
        const int status = pclose(pipe);
        r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
        r.err = slurp(err);
        return r;
    }

    std::string random_blob(std::uint64_t seed, std::size_t n) {
        std::mt19937_64 rng(seed);
        std::string s(n, '\0');
        for (char& c : s) c = static_cast<char>(rng());
        return s;
    }

    fs::path dir_;
};

TEST_F(Cli, HashPrintsDigestSignatureAndPath) {
    const auto p = write("abc.bin", "abc");
    const Outcome r = run({"hash", p.string()});
    EXPECT_EQ(r.code, 0);
    EXPECT_EQ(r.out, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad  " +
                         sigtriage::fuzzy_hash("abc").render() + "  " + p.string() + "\n");
}

TEST_F(Cli, HashRecursesDirectoriesInOrder) {
    write("d/b.bin", "b");
    write("d/a.bin", "a");
    write("d/sub/c.bin", "c");
    write("d/A.bin", "A");
    const Outcome r = run({"hash", (dir_ / "d").string()});
    EXPECT_EQ(r.code, 0);
    std::vector<std::string> paths;
    std::istringstream lines(r.out);
    for (std::string line; std::getline(lines, line);) paths.push_back(line.substr(line.rfind("  ") + 2));
    const std::string d = (dir_ / "d").string();
    EXPECT_EQ(paths, (std::vector<std::string>{d + "/A.bin", d + "/a.bin", d + "/b.bin", d + "/sub/c.bin"}));
    EXPECT_EQ(run({"hash", (dir_ / "d").string()}, "SIGTRIAGE_THREADS=4").out, r.out);
    EXPECT_EQ(run({"hash", (dir_ / "d").string()}, "SIGTRIAGE_THREADS=0").out, r.out);
}

TEST_F(Cli, HashJsonLinesAndEmptyFile) {
    const auto p = write("empty.bin", "");
    const Outcome r = run({"hash", "--format", "json", p.string()});
    EXPECT_EQ(r.code, 0);
    const json j = json::parse(r.out);
    EXPECT_EQ(j["sha256"], "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    EXPECT_EQ(j["ssdeep"], "");
}

TEST_F(Cli, HashUsageAndIoErrors) {
    EXPECT_EQ(run({"hash"}).code, 64);
    EXPECT_EQ(run({}).code, 64);
    EXPECT_EQ(run({"bogus"}).code, 64);
    EXPECT_EQ(run({"--help"}).code, 0);
    const auto ok = write("ok.bin", "data");
    const Outcome r = run({"hash", ok.string(), (dir_ / "missing.bin").string()});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.out.find("ok.bin"), std::string::npos);
    EXPECT_NE(r.err.find("missing.bin"), std::string::npos);
    const Outcome big = run({"hash", "--max-file-size", "3", ok.string()});
    EXPECT_EQ(big.code, 2);
    EXPECT_NE(big.err.find("exceeds limit"), std::string::npos);
    EXPECT_EQ(run({"hash", "--max-file-size", "0", ok.string()}).code, 64);
}

TEST_F(Cli, Compare) {
    Outcome r = run({"compare", "3:ABCDEFGH:ABC", "3:ABCDEFGH:ABC"});
    EXPECT_EQ(r.code, 0);
    EXPECT_EQ(r.out, "100\n");
    EXPECT_EQ(run({"compare", "3:ABCDEFGH:ABC", "96:ABCDEFGH:ABC"}).out, "0\n");
    r = run({"compare", "3:ABCDEFGH:ABC", "3:ABC"});
    EXPECT_EQ(r.code, 65);
    EXPECT_NE(r.err.find("argument 2"), std::string::npos);
    EXPECT_EQ(run({"compare", "3:A:B"}).code, 64);
}

TEST_F(Cli, ScanListsMatchedRules) {
    const auto rules = write("r.yar", R"(
rule one { strings: $a = "needle" condition: $a }
rule two { condition: filesize > 3 }
rule three { strings: $h = { 6E 65 ?? 64 } condition: $h }
rule never { strings: $a = "absent" condition: $a })");
    const auto f = write("f.bin", "hay needle hay");
    const auto g = write("g.bin", "no");
    Outcome r = run({"scan", "--rules", rules.string(), f.string(), g.string()});
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(r.out, "-" + f.string() + ":\none\ntwo\nthree\n-" + g.string() + ":\n(no matches)\n");

    r = run({"scan", "--rules", rules.string(), "--format", "json", f.string()});
    EXPECT_EQ(r.code, 0);
    const json j = json::parse(r.out);
    EXPECT_EQ(j["rules"][0]["patterns"][0]["offsets"], json::array({4}));
    EXPECT_EQ(j["rules"][3]["matched"], false);
}

TEST_F(Cli, ScanRuleErrors) {
    const auto bad = write("bad.yar", "rule r {\n  condition: $a\n}");
    const auto f = write("f.bin", "x");
    Outcome r = run({"scan", "--rules", bad.string(), f.string()});
    EXPECT_EQ(r.code, 65);
    EXPECT_NE(r.err.find("bad.yar:2:"), std::string::npos) << r.err;
    EXPECT_EQ(run({"scan", f.string()}).code, 64);
    EXPECT_EQ(run({"scan", "--rules", (dir_ / "none.yar").string(), f.string()}).code, 2);
    const auto good = write("good.yar", "rule r { condition: true }");
    EXPECT_EQ(run({"scan", "--rules", good.string(), (dir_ / "nope").string()}).code, 2);
}

TEST_F(Cli, TriageExitCodes) {
    const std::string blob = random_blob(1, 65536);
    const auto f = write("sample.bin", blob);
    Outcome r = run({"triage", f.string()});
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("verdict:  unknown"), std::string::npos);

    const auto exact = write("exact.csv", "value,family,source,first_seen\n" + sigtriage::digest_bytes(blob).hex() +
                                              ",alpha,test,2021-11-08\n");
    r = run({"triage", "--exact-db", exact.string(), "--format", "json", f.string()});
    EXPECT_EQ(r.code, 4);
    const json j = json::parse(r.out);
    ASSERT_TRUE(j.is_array());
    EXPECT_EQ(j[0]["verdict"], "known-malicious");
    EXPECT_EQ(j[0]["classification"][0]["family"], "alpha");

    const auto info = write("info.yar", "rule any_file : tagged { condition: filesize > 0 }");
    r = run({"triage", "--rules", info.string(), f.string()});
    EXPECT_EQ(r.code, 3);

    // Fuzzy route: the DB holds the original, the file is an appended variant.
    const auto fuzzy = write("fuzzy.csv", sigtriage::fuzzy_hash(blob).render() + ",bravo,,\n");
    const auto variant = write("variant.bin", blob + random_blob(2, 655));
    r = run({"triage", "--fuzzy-db", fuzzy.string(), "--threshold", "50", "--format", "json", variant.string()});
    EXPECT_EQ(r.code, 4);
    EXPECT_EQ(json::parse(r.out)[0]["verdict"], "likely-malicious");

    EXPECT_EQ(run({"triage", "--threshold", "101", f.string()}).code, 64);
}

TEST_F(Cli, TriagePartialFailure) {
    const auto f = write("ok.bin", "abc");
    Outcome r = run({"triage", f.string(), (dir_ / "missing").string()});
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.err.find("missing"), std::string::npos);
    EXPECT_EQ(run({"triage", (dir_ / "missing").string()}).code, 2);
}

TEST_F(Cli, TriageBadDatabase) {
    const auto f = write("ok.bin", "abc");
    const auto db = write("db.csv", "junk\nmore junk\n");
    EXPECT_EQ(run({"triage", "--exact-db", db.string(), f.string()}).code, 65);
    EXPECT_EQ(run({"triage", "--exact-db", (dir_ / "no.csv").string(), f.string()}).code, 2);
}

TEST_F(Cli, CompileAndImport) {
    const auto rules = write("r.yar", "rule r { strings: $a = /[ab][xy]/ $b = \"lit\" condition: $a or $b }");
    Outcome r = run({"compile", "--rules", rules.string(), "--format", "json"});
    EXPECT_EQ(r.code, 0);
    const json j = json::parse(r.out);
    EXPECT_EQ(j["rules"], 1);
    EXPECT_EQ(j["full_scan"], json::array({"r/$a"}));

    const auto db = write("db.csv", "value,family,source,first_seen\n" + sigtriage::digest_bytes("x").hex() +
                                        ",a,,\n" + sigtriage::digest_bytes("y").hex() + ",b,,\nbad,c,,\n");
    r = run({"import", "--exact-db", db.string()});
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("total: 2 exact, 0 fuzzy"), std::string::npos) << r.out;
    EXPECT_NE(r.err.find("db.csv:4:"), std::string::npos) << r.err;
    EXPECT_EQ(run({"import"}).code, 64);
}

TEST_F(Cli, EvalIsDeterministic) {
    const Outcome a = run({"eval", "--out", (dir_ / "a").string()});
    ASSERT_EQ(a.code, 0) << a.err;
    const Outcome b = run({"eval", "--out", (dir_ / "b").string()}, "SIGTRIAGE_THREADS=3");
    ASSERT_EQ(b.code, 0) << b.err;
    EXPECT_EQ(a.out, b.out);
    EXPECT_EQ(slurp(dir_ / "a" / "table.csv"), slurp(dir_ / "b" / "table.csv"));
    EXPECT_EQ(slurp(dir_ / "a" / "table.txt"), slurp(dir_ / "b" / "table.txt"));
    EXPECT_EQ(slurp(dir_ / "a" / "corpus" / "ground_truth.csv"), slurp(dir_ / "b" / "corpus" / "ground_truth.csv"));
    const std::string csv = slurp(dir_ / "a" / "table.csv");
    EXPECT_NE(csv.find("sha256,known,15,15,15,"), std::string::npos) << csv;
    EXPECT_NE(csv.find("sha256,variant,15,0,0,"), std::string::npos) << csv;

    const Outcome other = run({"eval", "--seed", "7", "--out", (dir_ / "c").string()});
    EXPECT_EQ(other.code, 0);
    EXPECT_NE(slurp(dir_ / "c" / "corpus" / "ground_truth.csv"), "");
}

TEST_F(Cli, EvalUnwritableDirectory) {
    if (::geteuid() == 0) {
        // Root ignores permission bits; a regular file in the path still blocks creation.
        write("blocker", "x");
        EXPECT_EQ(run({"eval", "--out", (dir_ / "blocker" / "out").string()}).code, 73);
        return;
    }
    fs::create_directories(dir_ / "ro");
    fs::permissions(dir_ / "ro", fs::perms::owner_read | fs::perms::owner_exec);
    EXPECT_EQ(run({"eval", "--out", (dir_ / "ro" / "out").string()}).code, 73);
}

}  // namespace
