#include <gtest/gtest.h>

#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

#include "sigtriage/errors.hpp"
#include "sigtriage/exacthash.hpp"

namespace {

using namespace sigtriage;

constexpr std::string_view kEmpty = "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855";
constexpr std::string_view kAbc = "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad";

TEST(Digest, FipsVectors) {
    EXPECT_EQ(digest_bytes("").hex(), kEmpty);
    EXPECT_EQ(digest_bytes("abc").hex(), kAbc);
    EXPECT_EQ(digest_bytes("abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq").hex(),
              "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");
    EXPECT_EQ(digest_bytes(std::string(1'000'000, 'a')).hex(),
              "cdc76e5c9914fb9281a1c7e284d73e67f1809a48a497200e046d39ccc7112cd0");
    EXPECT_EQ(Digest::algorithm(), "sha256");
}

TEST(Digest, HexRoundTripAndCase) {
    const Digest d = digest_bytes("abc");
    EXPECT_EQ(Digest::from_hex(d.hex()), d);
    std::string upper(kAbc);
    for (auto& c : upper) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    EXPECT_EQ(Digest::from_hex(upper), d);
    EXPECT_THROW(Digest::from_hex("abc"), FormatError);
    EXPECT_THROW(Digest::from_hex(std::string(63, 'a') + "g"), FormatError);
}

TEST(Digest, StreamMatchesBytesForEveryChunkSize) {
    std::mt19937_64 rng(21);
    std::string data(5000, '\0');
    for (auto& c : data) c = static_cast<char>(rng());
    const Digest want = digest_bytes(data);
    for (std::size_t chunk : {1u, 2u, 63u, 64u, 65u, 4096u, 100000u}) {
        std::istringstream in(data);
        EXPECT_EQ(digest_stream(in, chunk), want) << chunk;
    }
    std::istringstream empty("");
    EXPECT_EQ(digest_stream(empty, 7), digest_bytes(""));
    std::istringstream abc("abc");
    EXPECT_EQ(digest_stream(abc, 1).hex(), kAbc);
}

TEST(Digest, StreamRejectsZeroChunkAndBadStream) {
    std::istringstream in("x");
    EXPECT_THROW(digest_stream(in, 0), std::invalid_argument);
    std::istringstream bad("x");
    bad.setstate(std::ios::badbit);
    try {
        digest_stream(bad, 16, "sample.bin");
        FAIL() << "expected InputError";
    } catch (const InputError& e) {
        EXPECT_NE(std::string(e.what()).find("sample.bin"), std::string::npos);
    }
}

TEST(Digest, RandomPartitionsOfIncrementalHasher) {
    std::mt19937_64 rng(22);
    std::vector<std::uint8_t> data(3000);
    for (auto& b : data) b = static_cast<std::uint8_t>(rng());
    const Digest want = digest_bytes(std::span<const std::uint8_t>(data));
    for (int trial = 0; trial < 200; ++trial) {
        Sha256 h;
        std::size_t at = 0;
        while (at < data.size()) {
            const std::size_t n = std::min<std::size_t>(rng() % 300, data.size() - at);
            h.update(std::span(data).subspan(at, n));
            at += n;
        }
        ASSERT_EQ(h.finish(), want);
    }
}

TEST(Digest, SingleByteFlipChangesDigest) {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<std::uint8_t> data(1024);
        for (auto& b : data) b = static_cast<std::uint8_t>(rng());
        const Digest before = digest_bytes(std::span<const std::uint8_t>(data));
        data[rng() % data.size()] ^= static_cast<std::uint8_t>(1u << (rng() % 8));
        EXPECT_NE(digest_bytes(std::span<const std::uint8_t>(data)), before);
    }
}

}  // namespace
