#include "sigtriage/ctph.hpp"

#include <algorithm>
#include <charconv>
#include <stdexcept>

#include "sigtriage/editdist.hpp"
#include "sigtriage/errors.hpp"

namespace sigtriage {

namespace {

constexpr std::string_view kAlphabet =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
constexpr std::uint32_t kFnvPrime = 16777619u;
constexpr std::uint32_t kBlockHashInit = 0x28021967u;
constexpr std::size_t kCommonRun = 7;
constexpr std::uint64_t kCapBlocksizeLimit = 99 * kMinBlocksize;

bool in_alphabet(char c) { return kAlphabet.find(c) != std::string_view::npos; }

// One signature level: piecewise FNV state plus the emitted characters.
struct Piece {
    std::uint64_t blocksize;
    std::size_t cap;
    std::uint32_t hash = kBlockHashInit;
    std::size_t pending = 0;
    std::string out;

    void feed(std::uint8_t c) {
        hash = (hash * kFnvPrime) ^ c;
        ++pending;
    }

    void emit() {
        const char ch = kAlphabet[hash % 64];
        if (out.size() < cap - 1) {
            out.push_back(ch);
            hash = kBlockHashInit;
            pending = 0;
        } else if (out.size() < cap) {
            out.push_back(ch);
        } else {
            // At the cap the last character keeps absorbing the tail.
            out.back() = ch;
        }
    }

    void finish() {
        if (pending > 0) {
            if (out.size() == cap)
                out.back() = kAlphabet[hash % 64];
            else
                out.push_back(kAlphabet[hash % 64]);
        }
    }
};

// Runs the trigger scan; `on_trigger(i)` is called for every position i
// where the rolling value satisfies the blocksize condition.
template <typename OnByte, typename OnTrigger>
void scan_triggers(std::span<const std::uint8_t> data, std::uint64_t blocksize, OnByte on_byte,
                   OnTrigger on_trigger) {
    RollingHash roll;
    for (std::size_t i = 0; i < data.size(); ++i) {
        roll.update(data[i]);
        on_byte(data[i]);
        if (roll.value() % blocksize == blocksize - 1) on_trigger(i, roll.value());
    }
}

FuzzySignature hash_at(std::span<const std::uint8_t> data, std::uint64_t blocksize) {
    Piece p1{blocksize, kSig1Length, kBlockHashInit, 0, {}};
    Piece p2{blocksize * 2, kSig2Length, kBlockHashInit, 0, {}};
    // The piece for sig1 has to be fed before the trigger check, so the
    // byte callback feeds both and the trigger callback emits.
    scan_triggers(
        data, blocksize,
        [&](std::uint8_t c) {
            p1.feed(c);
            p2.feed(c);
        },
        [&](std::size_t, std::uint32_t value) {
            p1.emit();
            if (value % p2.blocksize == p2.blocksize - 1) p2.emit();
        });
    p1.finish();
    p2.finish();
    return FuzzySignature{blocksize, std::move(p1.out), std::move(p2.out)};
}

int score_level(std::string_view a, std::string_view b, std::uint64_t blocksize) {
    const std::string ca = collapse_runs(a);
    const std::string cb = collapse_runs(b);
    if (!has_common_substring(ca, cb, kCommonRun)) return 0;
    std::uint64_t score = static_cast<std::uint64_t>(similarity_pct(ca, cb));
    if (blocksize < kCapBlocksizeLimit) {
        const std::uint64_t cap = (blocksize / kMinBlocksize) * std::min(ca.size(), cb.size());
        score = std::min(score, cap);
    }
    return static_cast<int>(score);
}

}  // namespace

std::string FuzzySignature::render() const {
    return std::to_string(blocksize) + ":" + sig1 + ":" + sig2;
}

bool is_valid_blocksize(std::uint64_t blocksize) noexcept {
    if (blocksize < kMinBlocksize || blocksize % kMinBlocksize != 0) return false;
    const std::uint64_t q = blocksize / kMinBlocksize;
    return (q & (q - 1)) == 0;
}

std::uint64_t initial_blocksize(std::size_t length) noexcept {
    std::uint64_t b = kMinBlocksize;
    while (b * kSig1Length < length) b *= 2;
    return b;
}

std::vector<std::size_t> trigger_offsets(std::span<const std::uint8_t> data,
                                         std::uint64_t blocksize) {
    std::vector<std::size_t> out;
    scan_triggers(
        data, blocksize, [](std::uint8_t) {},
        [&](std::size_t i, std::uint32_t) { out.push_back(i); });
    return out;
}

FuzzySignature fuzzy_hash(std::span<const std::uint8_t> data) {
    if (data.empty()) throw std::invalid_argument("cannot fuzzy-hash empty input");
    std::uint64_t b = initial_blocksize(data.size());
    FuzzySignature sig = hash_at(data, b);
    while (sig.sig1.size() < kSig1Length / 2 && b > kMinBlocksize) {
        b /= 2;
        sig = hash_at(data, b);
    }
    return sig;
}

FuzzySignature fuzzy_hash(std::string_view data) {
    return fuzzy_hash(std::span(reinterpret_cast<const std::uint8_t*>(data.data()), data.size()));
}

std::string collapse_runs(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    std::size_t run = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        run = (i > 0 && s[i] == s[i - 1]) ? run + 1 : 1;
        if (run <= 3) out.push_back(s[i]);
    }
    return out;
}

bool has_common_substring(std::string_view a, std::string_view b, std::size_t len) {
    if (len == 0) return true;
    if (a.size() < len || b.size() < len) return false;
    for (std::size_t i = 0; i + len <= a.size(); ++i) {
        const std::string_view window = a.substr(i, len);
        if (b.find(window) != std::string_view::npos) return true;
    }
    return false;
}

int fuzzy_compare(const FuzzySignature& a, const FuzzySignature& b) {
    if (a == b) return 100;
    if (a.blocksize == b.blocksize)
        return std::max(score_level(a.sig1, b.sig1, a.blocksize),
                        score_level(a.sig2, b.sig2, a.blocksize * 2));
    if (a.blocksize == b.blocksize * 2) return score_level(a.sig1, b.sig2, a.blocksize);
    if (b.blocksize == a.blocksize * 2) return score_level(a.sig2, b.sig1, b.blocksize);
    return 0;
}

FuzzySignature parse_signature(std::string_view text) {
    const auto first = text.find(':');
    if (first == std::string_view::npos)
        throw FormatError("signature", "expected 3 ':'-separated fields, got 1");
    const auto second = text.find(':', first + 1);
    if (second == std::string_view::npos)
        throw FormatError("signature", "expected 3 ':'-separated fields, got 2");
    if (text.find(':', second + 1) != std::string_view::npos)
        throw FormatError("signature", "expected 3 ':'-separated fields, got more");

    const std::string_view bs_text = text.substr(0, first);
    const std::string_view s1 = text.substr(first + 1, second - first - 1);
    const std::string_view s2 = text.substr(second + 1);

    FuzzySignature sig;
    if (bs_text.empty() || !std::all_of(bs_text.begin(), bs_text.end(),
                                        [](char c) { return c >= '0' && c <= '9'; }))
        throw FormatError("blocksize", "not a decimal number: '" + std::string(bs_text) + "'");
    const auto [ptr, ec] = std::from_chars(bs_text.data(), bs_text.data() + bs_text.size(),
                                           sig.blocksize);
    if (ec != std::errc{} || ptr != bs_text.data() + bs_text.size())
        throw FormatError("blocksize", "out of range: '" + std::string(bs_text) + "'");
    if (!is_valid_blocksize(sig.blocksize))
        throw FormatError("blocksize", std::string(bs_text) + " is not of the form 3*2^i");

    auto check = [](std::string_view field, std::string_view s, std::size_t cap) {
        if (s.size() > cap)
            throw FormatError(std::string(field), "longer than " + std::to_string(cap) + " characters");
        for (std::size_t i = 0; i < s.size(); ++i)
            if (!in_alphabet(s[i]))
                throw FormatError(std::string(field),
                                  "illegal character at position " + std::to_string(i));
    };
    if (s1.empty()) throw FormatError("sig1", "empty");
    check("sig1", s1, kSig1Length);
    check("sig2", s2, kSig2Length);
    sig.sig1 = std::string(s1);
    sig.sig2 = std::string(s2);
    return sig;
}

}  // namespace sigtriage
