#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "sigtriage/engine.hpp"
#include "sigtriage/sigstore.hpp"
#include "sigtriage/triage.hpp"

namespace sigtriage {

enum class MutationOp { ByteFlip, AppendRandom, PrependRandom, Truncate, XorEncode, BlockShuffle };

/// A concrete obfuscation step. `param` is the flip count, byte count, key
/// byte or block size depending on `op`.
struct MutationSpec {
    MutationOp op = MutationOp::AppendRandom;
    std::uint64_t param = 0;

    /// e.g. "append-random(655)".
    std::string describe() const;

    friend bool operator==(const MutationSpec&, const MutationSpec&) = default;
};

/// Marker planted by xor-encode in front of the encoded payload.
std::vector<std::uint8_t> packer_stub(std::uint8_t key);

std::vector<std::uint8_t> apply_mutation(std::span<const std::uint8_t> data, const MutationSpec& spec,
                                         std::mt19937_64& rng);

struct FamilySpec {
    std::string name;
    std::size_t base_size = 0;
    std::vector<std::vector<std::uint8_t>> markers;
};

struct CorpusManifest {
    std::uint64_t seed = 0;
    std::vector<FamilySpec> families;
    std::size_t known_count = 15;
    std::size_t variant_count = 15;
    std::size_t novel_count = 15;
    /// Cycled over the variant set; sized steps use `size_fraction`.
    std::vector<MutationOp> variant_ops;
    double size_fraction = 0.01;
    std::uint64_t flip_count = 4;
    std::uint64_t shuffle_block = 4096;

    /// Five planted families with three 16-byte markers each, drawn from `seed`.
    static CorpusManifest defaults(std::uint64_t seed);
};

inline constexpr std::uint64_t kDefaultSeed = 20211108;

struct GroundTruthRow {
    std::string path;  // relative to the corpus directory
    std::string family;
    std::string set;   // known | variant | novel
    std::string mutation;
};

struct GeneratedCorpus {
    std::filesystem::path root;
    std::vector<GroundTruthRow> truth;
    std::filesystem::path exact_db;
    std::filesystem::path fuzzy_db;
    std::filesystem::path rules;
};

/// Writes samples, ground_truth.csv, db/exact.csv, db/fuzzy.csv and
/// rules/experiment.yar under `out_dir`. Throws OutputError.
GeneratedCorpus generate_corpus(const CorpusManifest& manifest, const std::filesystem::path& out_dir);

/// Rule text targeting the manifest's family markers plus capability rules.
std::string experiment_rules(const CorpusManifest& manifest);

std::vector<GroundTruthRow> read_ground_truth(const std::filesystem::path& corpus_dir);

enum class Approach { Exact, Fuzzy, Rules };

std::string_view to_string(Approach a);

struct DetectionCell {
    std::size_t size = 0;
    std::size_t detected = 0;
    std::size_t classified = 0;
    std::size_t matched = 0;
};

struct DetectionTable {
    std::vector<std::string> sets;  // column order
    std::vector<std::vector<DetectionCell>> cells;  // [approach][set]

    const DetectionCell& cell(Approach a, std::string_view set) const;
    /// classified <= detected <= matched <= size everywhere.
    bool consistent() const;

    std::string to_csv() const;
    std::string to_text() const;
};

/// Triages every sample listed in the corpus ground truth and tallies each
/// approach in isolation.
DetectionTable run_experiment(const std::filesystem::path& corpus_dir, const SignatureStore& store,
                              const CompiledRuleSet& rules, const TriageConfig& cfg = {},
                              std::size_t threads = 1);

}  // namespace sigtriage
