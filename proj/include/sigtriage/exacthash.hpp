#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <memory>
#include <span>
#include <string>
#include <string_view>

namespace sigtriage {

/// SHA-256 digest of a byte sequence.
struct Digest {
    std::array<std::uint8_t, 32> value{};

    /// 64-char lowercase hexadecimal rendering.
    std::string hex() const;

    /// Parses 64 hex characters, either case. Throws FormatError.
    static Digest from_hex(std::string_view text);

    static constexpr std::string_view algorithm() { return "sha256"; }

    friend bool operator==(const Digest&, const Digest&) = default;
};

Digest digest_bytes(std::span<const std::uint8_t> data);
Digest digest_bytes(std::string_view data);

/// Reads `source` to the end in `chunk_size` pieces. `source_name` labels
/// the InputError raised on a read failure.
Digest digest_stream(std::istream& source, std::size_t chunk_size,
                     std::string_view source_name = "<stream>");

/// Incremental hasher; one caller at a time.
class Sha256 {
public:
    Sha256();
    ~Sha256();
    Sha256(const Sha256&) = delete;
    Sha256& operator=(const Sha256&) = delete;

    void update(std::span<const std::uint8_t> data);
    Digest finish();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace sigtriage
