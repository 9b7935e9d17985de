#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sigtriage {

inline constexpr std::size_t kMinBlocksize = 3;
inline constexpr std::size_t kSig1Length = 64;
inline constexpr std::size_t kSig2Length = 32;
inline constexpr std::size_t kRollingWindow = 7;

/// Context-triggered piecewise hash. sig1 is built at `blocksize`, sig2 at
/// twice that. Canonical text form is "blocksize:sig1:sig2".
struct FuzzySignature {
    std::uint64_t blocksize = kMinBlocksize;
    std::string sig1;
    std::string sig2;

    std::string render() const;

    friend bool operator==(const FuzzySignature&, const FuzzySignature&) = default;
};

/// Rolling hash over the last 7 bytes, used to place block boundaries.
class RollingHash {
public:
    void update(std::uint8_t c) noexcept {
        const std::uint8_t oldest = window_[pos_];
        h2_ = h2_ - h1_ + static_cast<std::uint32_t>(kRollingWindow) * c;
        h1_ = h1_ + c - oldest;
        window_[pos_] = c;
        pos_ = (pos_ + 1) % kRollingWindow;
        h3_ = (h3_ << 5) ^ c;
    }

    std::uint32_t value() const noexcept { return h1_ + h2_ + h3_; }

private:
    std::array<std::uint8_t, kRollingWindow> window_{};
    std::size_t pos_ = 0;
    std::uint32_t h1_ = 0;
    std::uint32_t h2_ = 0;
    std::uint32_t h3_ = 0;
};

bool is_valid_blocksize(std::uint64_t blocksize) noexcept;

/// Smallest 3*2^i with 64*blocksize >= length.
std::uint64_t initial_blocksize(std::size_t length) noexcept;

/// Throws std::invalid_argument("cannot fuzzy-hash empty input") for empty data.
FuzzySignature fuzzy_hash(std::span<const std::uint8_t> data);
FuzzySignature fuzzy_hash(std::string_view data);

/// Similarity 0..100 between two signatures; 0 when their blocksizes are
/// not equal or a factor of two apart.
int fuzzy_compare(const FuzzySignature& a, const FuzzySignature& b);

/// Parses "blocksize:sig1:sig2". Throws FormatError naming the bad field.
FuzzySignature parse_signature(std::string_view text);

/// Offsets (index of the triggering byte) where the rolling value hits
/// blocksize - 1 modulo blocksize. Same scan the hasher uses.
std::vector<std::size_t> trigger_offsets(std::span<const std::uint8_t> data,
                                         std::uint64_t blocksize);

/// Collapse runs of more than three identical characters down to three.
std::string collapse_runs(std::string_view s);

/// True if a and b share a substring of length `len`.
bool has_common_substring(std::string_view a, std::string_view b, std::size_t len);

}  // namespace sigtriage
