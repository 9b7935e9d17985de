#include "sigtriage/exacthash.hpp"

#include <openssl/evp.h>

#include <stdexcept>
#include <vector>

#include "sigtriage/errors.hpp"

namespace sigtriage {

namespace {

int hex_value(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

}  // namespace

std::string Digest::hex() const {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out;
    out.reserve(64);
    for (auto b : value) {
        out.push_back(kDigits[b >> 4]);
        out.push_back(kDigits[b & 0xF]);
    }
    return out;
}

Digest Digest::from_hex(std::string_view text) {
    if (text.size() != 64)
        throw FormatError("sha256", "expected 64 hex characters, got " + std::to_string(text.size()));
    Digest d;
    for (std::size_t i = 0; i < 32; ++i) {
        const int hi = hex_value(text[2 * i]);
        const int lo = hex_value(text[2 * i + 1]);
        if (hi < 0 || lo < 0)
            throw FormatError("sha256", "illegal hex character at position " +
                                            std::to_string(hi < 0 ? 2 * i : 2 * i + 1));
        d.value[i] = static_cast<std::uint8_t>((hi << 4) | lo);
    }
    return d;
}

struct Sha256::Impl {
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    ~Impl() { EVP_MD_CTX_free(ctx); }
};

Sha256::Sha256() : impl_(std::make_unique<Impl>()) {
    if (impl_->ctx == nullptr || EVP_DigestInit_ex(impl_->ctx, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("sha256: digest context initialisation failed");
}

Sha256::~Sha256() = default;

void Sha256::update(std::span<const std::uint8_t> data) {
    if (!data.empty()) EVP_DigestUpdate(impl_->ctx, data.data(), data.size());
}

Digest Sha256::finish() {
    Digest d;
    unsigned int len = 0;
    EVP_DigestFinal_ex(impl_->ctx, d.value.data(), &len);
    EVP_DigestInit_ex(impl_->ctx, EVP_sha256(), nullptr);
    return d;
}

Digest digest_bytes(std::span<const std::uint8_t> data) {
    Sha256 h;
    h.update(data);
    return h.finish();
}

Digest digest_bytes(std::string_view data) {
    return digest_bytes(std::span(reinterpret_cast<const std::uint8_t*>(data.data()), data.size()));
}

Digest digest_stream(std::istream& source, std::size_t chunk_size, std::string_view source_name) {
    if (chunk_size == 0) throw std::invalid_argument("digest_stream: chunk_size must be positive");
    Sha256 h;
    std::vector<char> buf(chunk_size);
    while (source) {
        source.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        const auto got = source.gcount();
        if (got > 0)
            h.update(std::span(reinterpret_cast<const std::uint8_t*>(buf.data()),
                               static_cast<std::size_t>(got)));
    }
    if (source.bad()) throw InputError(std::string(source_name) + ": read failed");
    return h.finish();
}

}  // namespace sigtriage
