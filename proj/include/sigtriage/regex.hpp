#pragma once

#include <bitset>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace sigtriage::regex {

using ByteSet = std::bitset<256>;

struct Node {
    enum class Kind { Empty, Bytes, Concat, Alternate, Repeat };

    Kind kind = Kind::Empty;
    ByteSet bytes;               // Bytes
    std::vector<Node> children;  // Concat, Alternate, Repeat (one child)
    std::size_t min = 0;         // Repeat
    std::size_t max = 0;         // Repeat; kUnbounded for *, +, {m,}

    static constexpr std::size_t kUnbounded = static_cast<std::size_t>(-1);
};

/// Syntax error inside a regex body; `offset` is a byte index into the source.
class SyntaxError : public std::runtime_error {
public:
    SyntaxError(std::size_t offset, const std::string& message)
        : std::runtime_error(message), offset_(offset) {}
    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

/// Parses the supported subset: concatenation, |, (), [...] classes, ., *,
/// +, ?, {m}, {m,}, {m,n}, and escapes (\d \w \s \D \W \S \xHH \n \t \r and
/// escaped metacharacters). `nocase` folds ASCII letters.
Node parse(std::string_view source, bool nocase = false);

/// True if the expression accepts the empty string.
bool nullable(const Node& node);

/// Longest literal byte run every match must contain; empty if none.
/// Case-insensitive letters come back lowercased.
std::string mandatory_literal(const Node& node);

/// Thompson NFA over the reversed expression. Finds every offset at which
/// some match starts in a single backward pass over the data.
class ReverseMatcher {
public:
    explicit ReverseMatcher(const Node& root);

    /// Ascending start offsets of all matches; stops collecting after `limit`
    /// (reported through `truncated`).
    std::vector<std::uint64_t> match_starts(std::span<const std::uint8_t> data, std::size_t limit,
                                            bool& truncated) const;

    std::size_t state_count() const noexcept { return states_.size(); }

private:
    struct State {
        enum class Kind { Byte, Split, Match } kind;
        ByteSet bytes;
        int out = -1;
        int out1 = -1;
    };

    int build(const Node& node, int next);
    int add_state(State s);

    std::vector<State> states_;
    int start_ = -1;

    friend class LazyDfa;
};

inline constexpr std::size_t kMaxNfaStates = 20000;

}  // namespace sigtriage::regex
