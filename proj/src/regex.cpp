#include "sigtriage/regex.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <unordered_map>

namespace sigtriage::regex {

namespace {

constexpr std::size_t kMaxDepth = 200;
constexpr std::size_t kMaxRepeat = 1000;
constexpr std::size_t kMaxDfaStates = 4096;

ByteSet single(std::uint8_t c) {
    ByteSet s;
    s.set(c);
    return s;
}

ByteSet range(std::uint8_t lo, std::uint8_t hi) {
    ByteSet s;
    for (unsigned c = lo; c <= hi; ++c) s.set(c);
    return s;
}

ByteSet digit_set() { return range('0', '9'); }
ByteSet word_set() { return range('a', 'z') | range('A', 'Z') | range('0', '9') | single('_'); }
ByteSet space_set() {
    ByteSet s;
    for (char c : std::string_view(" \t\n\r\f\v")) s.set(static_cast<std::uint8_t>(c));
    return s;
}

ByteSet fold(ByteSet s) {
    for (unsigned c = 'a'; c <= 'z'; ++c) {
        const unsigned up = c - 'a' + 'A';
        if (s.test(c) || s.test(up)) {
            s.set(c);
            s.set(up);
        }
    }
    return s;
}

int hex_digit(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

class Parser {
public:
    Parser(std::string_view src, bool nocase) : src_(src), nocase_(nocase) {}

    Node run() {
        Node n = alternation(0);
        if (pos_ < src_.size()) {
            if (src_[pos_] == ')') fail("unbalanced ')'");
            fail("unexpected character");
        }
        return n;
    }

private:
    [[noreturn]] void fail(const std::string& msg) { throw SyntaxError(pos_, msg); }
    [[noreturn]] void fail_at(std::size_t at, const std::string& msg) { throw SyntaxError(at, msg); }

    bool eof() const { return pos_ >= src_.size(); }
    char peek() const { return src_[pos_]; }

    Node alternation(std::size_t depth) {
        if (depth > kMaxDepth) fail("nesting too deep");
        std::vector<Node> alts;
        alts.push_back(concatenation(depth));
        while (!eof() && peek() == '|') {
            ++pos_;
            alts.push_back(concatenation(depth));
        }
        if (alts.size() == 1) return std::move(alts.front());
        Node n;
        n.kind = Node::Kind::Alternate;
        n.children = std::move(alts);
        return n;
    }

    Node concatenation(std::size_t depth) {
        std::vector<Node> items;
        while (!eof() && peek() != '|' && peek() != ')') items.push_back(repetition(depth));
        if (items.empty()) return Node{};
        if (items.size() == 1) return std::move(items.front());
        Node n;
        n.kind = Node::Kind::Concat;
        n.children = std::move(items);
        return n;
    }

    bool try_bounds(std::size_t& lo, std::size_t& hi) {
        // Called with pos_ on '{'. Leaves pos_ untouched if not a quantifier.
        std::size_t p = pos_ + 1;
        auto number = [&](std::size_t& out) {
            const std::size_t begin = p;
            out = 0;
            while (p < src_.size() && std::isdigit(static_cast<unsigned char>(src_[p]))) {
                out = out * 10 + static_cast<std::size_t>(src_[p] - '0');
                if (out > kMaxRepeat) fail_at(begin, "repetition bound exceeds 1000");
                ++p;
            }
            return p > begin;
        };
        if (!number(lo)) return false;
        if (p < src_.size() && src_[p] == '}') {
            hi = lo;
        } else if (p < src_.size() && src_[p] == ',') {
            ++p;
            if (!number(hi)) hi = Node::kUnbounded;
            if (p >= src_.size() || src_[p] != '}') return false;
        } else {
            return false;
        }
        if (hi != Node::kUnbounded && hi < lo) fail("repetition bounds out of order");
        pos_ = p + 1;
        return true;
    }

    Node repetition(std::size_t depth) {
        Node n = atom(depth);
        while (!eof()) {
            std::size_t lo = 0, hi = 0;
            const char c = peek();
            if (c == '*') {
                lo = 0, hi = Node::kUnbounded, ++pos_;
            } else if (c == '+') {
                lo = 1, hi = Node::kUnbounded, ++pos_;
            } else if (c == '?') {
                lo = 0, hi = 1, ++pos_;
            } else if (c == '{' && try_bounds(lo, hi)) {
            } else {
                break;
            }
            Node r;
            r.kind = Node::Kind::Repeat;
            r.min = lo;
            r.max = hi;
            r.children.push_back(std::move(n));
            n = std::move(r);
        }
        return n;
    }

    Node bytes(ByteSet s) {
        Node n;
        n.kind = Node::Kind::Bytes;
        n.bytes = nocase_ ? fold(s) : s;
        return n;
    }

    // Escape body after the backslash; returns the matched set.
    ByteSet escape() {
        if (eof()) fail("trailing backslash");
        const std::size_t at = pos_;
        const char c = src_[pos_++];
        switch (c) {
            case 'd': return digit_set();
            case 'D': return ~digit_set();
            case 'w': return word_set();
            case 'W': return ~word_set();
            case 's': return space_set();
            case 'S': return ~space_set();
            case 'n': return single('\n');
            case 't': return single('\t');
            case 'r': return single('\r');
            case 'f': return single('\f');
            case 'v': return single('\v');
            case 'x': {
                if (pos_ + 2 > src_.size()) fail_at(at, "incomplete \\x escape");
                const int hi = hex_digit(src_[pos_]);
                const int lo = hex_digit(src_[pos_ + 1]);
                if (hi < 0 || lo < 0) fail_at(at, "invalid \\x escape");
                pos_ += 2;
                return single(static_cast<std::uint8_t>(hi * 16 + lo));
            }
            default:
                if (std::isalnum(static_cast<unsigned char>(c)))
                    fail_at(at, std::string("unsupported escape \\") + c);
                return single(static_cast<std::uint8_t>(c));
        }
    }

    ByteSet char_class() {
        // pos_ is just past '['.
        const std::size_t open = pos_ - 1;
        bool negate = false;
        if (!eof() && peek() == '^') {
            negate = true;
            ++pos_;
        }
        ByteSet set;
        bool first = true;
        while (true) {
            if (eof()) fail_at(open, "unterminated character class");
            char c = peek();
            if (c == ']' && !first) {
                ++pos_;
                break;
            }
            first = false;
            ByteSet item;
            int lo = -1;
            ++pos_;
            if (c == '\\') {
                item = escape();
                if (item.count() == 1)
                    for (int b = 0; b < 256; ++b)
                        if (item.test(b)) lo = b;
            } else {
                lo = static_cast<std::uint8_t>(c);
                item = single(static_cast<std::uint8_t>(c));
            }
            if (lo >= 0 && pos_ + 1 < src_.size() && peek() == '-' && src_[pos_ + 1] != ']') {
                ++pos_;
                int hi;
                const char h = src_[pos_++];
                if (h == '\\') {
                    ByteSet e = escape();
                    if (e.count() != 1) fail("invalid range end");
                    hi = 0;
                    for (int b = 0; b < 256; ++b)
                        if (e.test(b)) hi = b;
                } else {
                    hi = static_cast<std::uint8_t>(h);
                }
                if (hi < lo) fail("character range out of order");
                item = range(static_cast<std::uint8_t>(lo), static_cast<std::uint8_t>(hi));
            }
            set |= item;
        }
        return negate ? ~set : set;
    }

    Node atom(std::size_t depth) {
        const char c = peek();
        switch (c) {
            case '(': {
                const std::size_t open = pos_++;
                Node inner = alternation(depth + 1);
                if (eof() || peek() != ')') fail_at(open, "unbalanced '('");
                ++pos_;
                return inner;
            }
            case '[':
                ++pos_;
                return bytes(char_class());
            case '.':
                ++pos_;
                return bytes(~single('\n'));
            case '\\':
                ++pos_;
                return bytes(escape());
            case '*':
            case '+':
            case '?':
                fail("nothing to repeat");
            case '^':
            case '$':
                fail("anchors are not supported");
            default:
                ++pos_;
                return bytes(single(static_cast<std::uint8_t>(c)));
        }
    }

    std::string_view src_;
    bool nocase_;
    std::size_t pos_ = 0;
};

std::size_t estimate_states(const Node& n) {
    switch (n.kind) {
        case Node::Kind::Empty: return 0;
        case Node::Kind::Bytes: return 1;
        case Node::Kind::Concat:
        case Node::Kind::Alternate: {
            std::size_t total = n.children.size();
            for (const auto& c : n.children) total += estimate_states(c);
            return total;
        }
        case Node::Kind::Repeat: {
            const std::size_t child = estimate_states(n.children.front()) + 1;
            const std::size_t copies = n.max == Node::kUnbounded ? n.min + 1 : n.max;
            return std::min<std::size_t>(child * std::max<std::size_t>(copies, 1), kMaxNfaStates + 1);
        }
    }
    return 0;
}

// Literal char a Bytes set stands for, folded: single byte or a letter pair.
int literal_char(const ByteSet& s) {
    if (s.count() == 1) {
        for (int b = 0; b < 256; ++b)
            if (s.test(b)) return (b >= 'A' && b <= 'Z') ? b - 'A' + 'a' : b;
    }
    if (s.count() == 2) {
        for (int b = 'a'; b <= 'z'; ++b)
            if (s.test(b) && s.test(b - 'a' + 'A')) return b;
    }
    return -1;
}

struct LiteralInfo {
    bool exact = false;
    std::string text;  // whole match when exact
    std::string best;  // longest mandatory run
};

void keep_longer(std::string& best, const std::string& candidate) {
    if (candidate.size() > best.size()) best = candidate;
}

LiteralInfo literal_info(const Node& n) {
    LiteralInfo info;
    switch (n.kind) {
        case Node::Kind::Empty:
            info.exact = true;
            break;
        case Node::Kind::Bytes: {
            const int c = literal_char(n.bytes);
            if (c >= 0) {
                info.exact = true;
                info.text.push_back(static_cast<char>(c));
                info.best = info.text;
            }
            break;
        }
        case Node::Kind::Concat: {
            std::string run;
            bool all_exact = true;
            for (const auto& child : n.children) {
                LiteralInfo ci = literal_info(child);
                if (ci.exact) {
                    run += ci.text;
                } else {
                    all_exact = false;
                    keep_longer(info.best, run);
                    keep_longer(info.best, ci.best);
                    run.clear();
                }
            }
            keep_longer(info.best, run);
            if (all_exact) {
                info.exact = true;
                info.text = run;
            }
            break;
        }
        case Node::Kind::Alternate:
            break;
        case Node::Kind::Repeat: {
            if (n.min == 0) break;
            LiteralInfo ci = literal_info(n.children.front());
            if (ci.exact && n.min == n.max && ci.text.size() * n.min <= 64) {
                info.exact = true;
                for (std::size_t i = 0; i < n.min; ++i) info.text += ci.text;
                info.best = info.text;
            } else {
                info.best = ci.exact ? ci.text : ci.best;
            }
            break;
        }
    }
    return info;
}

struct VectorHash {
    std::size_t operator()(const std::vector<int>& v) const noexcept {
        std::size_t h = 1469598103934665603ull;
        for (int x : v) h = (h ^ static_cast<std::size_t>(x)) * 1099511628211ull;
        return h;
    }
};

}  // namespace

Node parse(std::string_view source, bool nocase) {
    Node root = Parser(source, nocase).run();
    if (estimate_states(root) > kMaxNfaStates) throw SyntaxError(0, "expression too large");
    return root;
}

bool nullable(const Node& n) {
    switch (n.kind) {
        case Node::Kind::Empty: return true;
        case Node::Kind::Bytes: return false;
        case Node::Kind::Concat:
            return std::all_of(n.children.begin(), n.children.end(),
                               [](const Node& c) { return nullable(c); });
        case Node::Kind::Alternate:
            return std::any_of(n.children.begin(), n.children.end(),
                               [](const Node& c) { return nullable(c); });
        case Node::Kind::Repeat: return n.min == 0 || nullable(n.children.front());
    }
    return false;
}

std::string mandatory_literal(const Node& node) {
    LiteralInfo info = literal_info(node);
    return info.exact ? info.text : info.best;
}

ReverseMatcher::ReverseMatcher(const Node& root) {
    const int match = add_state({State::Kind::Match, {}, -1, -1});
    start_ = build(root, match);
}

int ReverseMatcher::add_state(State s) {
    if (states_.size() >= kMaxNfaStates * 4) throw std::length_error("regex automaton too large");
    states_.push_back(s);
    return static_cast<int>(states_.size()) - 1;
}

int ReverseMatcher::build(const Node& n, int next) {
    switch (n.kind) {
        case Node::Kind::Empty: return next;
        case Node::Kind::Bytes: return add_state({State::Kind::Byte, n.bytes, next, -1});
        case Node::Kind::Concat: {
            // Reversed: the last child is consumed first.
            int entry = next;
            for (const auto& child : n.children) entry = build(child, entry);
            return entry;
        }
        case Node::Kind::Alternate: {
            int entry = build(n.children.back(), next);
            for (std::size_t i = n.children.size() - 1; i-- > 0;) {
                const int branch = build(n.children[i], next);
                entry = add_state({State::Kind::Split, {}, branch, entry});
            }
            return entry;
        }
        case Node::Kind::Repeat: {
            const Node& child = n.children.front();
            int entry = next;
            if (n.max == Node::kUnbounded) {
                const int loop = add_state({State::Kind::Split, {}, -1, next});
                const int body = build(child, loop);
                states_[static_cast<std::size_t>(loop)].out = body;
                entry = loop;
            } else {
                for (std::size_t i = n.min; i < n.max; ++i)
                    entry = add_state({State::Kind::Split, {}, build(child, entry), next});
            }
            for (std::size_t i = 0; i < n.min; ++i) entry = build(child, entry);
            return entry;
        }
    }
    return next;
}

// Subset construction on demand; one instance per scan.
class LazyDfa {
public:
    explicit LazyDfa(const ReverseMatcher& m) : m_(m), mark_(m.states_.size(), 0) {
        std::vector<int> seed;
        ++generation_;
        closure(m_.start_, seed);
        start_set_ = normalise(std::move(seed));
        reset();
    }

    int initial() const { return initial_; }
    bool accepting(int d) const { return accept_[static_cast<std::size_t>(d)]; }

    int step(int d, std::uint8_t c) {
        int next = table_[static_cast<std::size_t>(d)][c];
        if (next >= 0) return next;
        std::vector<int> set;
        ++generation_;
        for (int s : keys_[static_cast<std::size_t>(d)]) {
            const auto& st = m_.states_[static_cast<std::size_t>(s)];
            if (st.kind == ReverseMatcher::State::Kind::Byte && st.bytes.test(c))
                closure(st.out, set);
        }
        for (int s : start_set_) closure(s, set);
        if (keys_.size() >= kMaxDfaStates) {
            std::vector<int> keep = keys_[static_cast<std::size_t>(d)];
            reset();
            d = intern(std::move(keep));
        }
        next = intern(normalise(std::move(set)));
        table_[static_cast<std::size_t>(d)][c] = next;
        return next;
    }

private:
    void reset() {
        keys_.clear();
        table_.clear();
        accept_.clear();
        index_.clear();
        ++generation_;
        initial_ = intern(start_set_);
    }

    void closure(int s, std::vector<int>& out) {
        // Iterative; split chains can be long for large bounded repeats.
        std::vector<int> stack{s};
        while (!stack.empty()) {
            const int cur = stack.back();
            stack.pop_back();
            if (cur < 0 || mark_[static_cast<std::size_t>(cur)] == generation_) continue;
            mark_[static_cast<std::size_t>(cur)] = generation_;
            const auto& st = m_.states_[static_cast<std::size_t>(cur)];
            if (st.kind == ReverseMatcher::State::Kind::Split) {
                stack.push_back(st.out1);
                stack.push_back(st.out);
            } else {
                out.push_back(cur);
            }
        }
    }

    static std::vector<int> normalise(std::vector<int> v) {
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
        return v;
    }

    int intern(std::vector<int> key) {
        auto it = index_.find(key);
        if (it != index_.end()) return it->second;
        const int id = static_cast<int>(keys_.size());
        bool acc = false;
        for (int s : key)
            if (m_.states_[static_cast<std::size_t>(s)].kind == ReverseMatcher::State::Kind::Match)
                acc = true;
        accept_.push_back(acc);
        std::array<int, 256> row;
        row.fill(-1);
        table_.push_back(row);
        index_.emplace(key, id);
        keys_.push_back(std::move(key));
        return id;
    }

    const ReverseMatcher& m_;
    std::vector<unsigned> mark_;
    unsigned generation_ = 0;
    std::vector<int> start_set_;
    std::vector<std::vector<int>> keys_;
    std::vector<std::array<int, 256>> table_;
    std::vector<bool> accept_;
    std::unordered_map<std::vector<int>, int, VectorHash> index_;
    int initial_ = 0;
};

std::vector<std::uint64_t> ReverseMatcher::match_starts(std::span<const std::uint8_t> data,
                                                        std::size_t limit,
                                                        bool& truncated) const {
    truncated = false;
    std::vector<std::uint64_t> found;  // descending while scanning
    LazyDfa dfa(*this);
    int d = dfa.initial();
    for (std::size_t i = data.size(); i-- > 0;) {
        d = dfa.step(d, data[i]);
        if (dfa.accepting(d)) {
            found.push_back(i);
            if (found.size() >= 2 * limit) {
                // Keep the smallest offsets, which are the ones still to come.
                found.erase(found.begin(), found.end() - static_cast<std::ptrdiff_t>(limit));
                truncated = true;
            }
        }
    }
    if (found.size() > limit) {
        found.erase(found.begin(), found.end() - static_cast<std::ptrdiff_t>(limit));
        truncated = true;
    }
    std::reverse(found.begin(), found.end());
    return found;
}

}  // namespace sigtriage::regex
