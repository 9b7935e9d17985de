#include "sigtriage/rulelang.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>

#include "sigtriage/errors.hpp"
#include "sigtriage/regex.hpp"

namespace sigtriage {

// ---------------------------------------------------------------------------
// Small shared pieces

std::string_view to_string(Comparator c) {
    switch (c) {
        case Comparator::Eq: return "==";
        case Comparator::Ne: return "!=";
        case Comparator::Lt: return "<";
        case Comparator::Le: return "<=";
        case Comparator::Gt: return ">";
        case Comparator::Ge: return ">=";
    }
    return "==";
}

bool compare(std::int64_t lhs, Comparator c, std::int64_t rhs) {
    switch (c) {
        case Comparator::Eq: return lhs == rhs;
        case Comparator::Ne: return lhs != rhs;
        case Comparator::Lt: return lhs < rhs;
        case Comparator::Le: return lhs <= rhs;
        case Comparator::Gt: return lhs > rhs;
        case Comparator::Ge: return lhs >= rhs;
    }
    return false;
}

std::string_view to_string(Severity s) {
    switch (s) {
        case Severity::Info: return "info";
        case Severity::Suspicious: return "suspicious";
        case Severity::Malicious: return "malicious";
    }
    return "info";
}

namespace {

std::optional<Severity> severity_from(std::string_view s) {
    if (s == "info") return Severity::Info;
    if (s == "suspicious") return Severity::Suspicious;
    if (s == "malicious") return Severity::Malicious;
    return std::nullopt;
}

const std::string* meta_string(const Rule& r, std::string_view key) {
    for (const auto& [k, v] : r.meta)
        if (k == key)
            if (const auto* s = std::get_if<std::string>(&v)) return s;
    return nullptr;
}

}  // namespace

Severity Rule::severity() const {
    const std::string* s = meta_string(*this, "severity");
    if (s == nullptr) return Severity::Info;
    return severity_from(*s).value_or(Severity::Info);
}

std::string Rule::family() const {
    const std::string* s = meta_string(*this, "family");
    return s ? *s : std::string();
}

std::string Rule::description() const {
    const std::string* s = meta_string(*this, "description");
    return s ? *s : std::string();
}

Expr Expr::boolean(bool b) {
    Expr e;
    e.kind = Kind::BoolLiteral;
    e.truth = b;
    return e;
}

Expr Expr::integer(std::int64_t v) {
    Expr e;
    e.kind = Kind::IntLiteral;
    e.value = v;
    return e;
}

Expr Expr::string_ref(std::string id) {
    Expr e;
    e.kind = Kind::StringRef;
    e.ident = std::move(id);
    return e;
}

Expr Expr::at(std::string id, std::int64_t offset) {
    Expr e;
    e.kind = Kind::At;
    e.ident = std::move(id);
    e.offset = offset;
    return e;
}

Expr Expr::count(std::string id, Comparator c, std::int64_t v) {
    Expr e;
    e.kind = Kind::CountCmp;
    e.ident = std::move(id);
    e.cmp = c;
    e.value = v;
    return e;
}

Expr Expr::of(Quantifier q, std::int64_t n, std::string set) {
    Expr e;
    e.kind = Kind::Of;
    e.quantifier = q;
    e.quantity = q == Quantifier::Count ? n : 0;
    e.ident = std::move(set);
    return e;
}

Expr Expr::filesize(Comparator c, std::int64_t v) {
    Expr e;
    e.kind = Kind::Filesize;
    e.cmp = c;
    e.value = v;
    return e;
}

Expr Expr::uint_read(int width, std::int64_t offset, Comparator c, std::int64_t v) {
    Expr e;
    e.kind = Kind::UintRead;
    e.width = width;
    e.offset = offset;
    e.cmp = c;
    e.value = v;
    return e;
}

Expr Expr::fuzzy_sim(FuzzySignature sig, Comparator c, std::int64_t v) {
    Expr e;
    e.kind = Kind::FuzzySim;
    e.signature = std::move(sig);
    e.cmp = c;
    e.value = v;
    return e;
}

Expr Expr::conj(Expr a, Expr b) {
    Expr e;
    e.kind = Kind::And;
    e.children.push_back(std::move(a));
    e.children.push_back(std::move(b));
    return e;
}

Expr Expr::disj(Expr a, Expr b) {
    Expr e;
    e.kind = Kind::Or;
    e.children.push_back(std::move(a));
    e.children.push_back(std::move(b));
    return e;
}

Expr Expr::negate(Expr a) {
    Expr e;
    e.kind = Kind::Not;
    e.children.push_back(std::move(a));
    return e;
}

bool set_selects(std::string_view set, std::string_view id) {
    if (set == "them") return true;
    if (!set.empty() && set.back() == '*') {
        const std::string_view prefix = set.substr(0, set.size() - 1);
        return id.substr(0, prefix.size()) == prefix;
    }
    return set == id;
}

// ---------------------------------------------------------------------------
// Lexer

namespace {

constexpr std::size_t kMaxIdentifier = 128;
constexpr std::size_t kMaxConditionDepth = 200;

enum class Tok {
    Eof,
    Ident,
    StringId,    // $name
    StringGlob,  // $name*
    CountId,     // #name
    Int,
    String,
    Hex,
    Regex,
    LBrace,
    RBrace,
    LParen,
    RParen,
    Colon,
    Equals,
    Minus,
    Cmp,
};

struct Token {
    Tok kind = Tok::Eof;
    SourcePos pos;
    std::string text;  // identifier / decoded string bytes / regex source
    std::int64_t number = 0;
    Comparator cmp = Comparator::Eq;
    std::vector<HexToken> hex;
};

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

int hex_value(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

class Lexer {
public:
    explicit Lexer(std::string_view src) : src_(src) {}

    Token next() {
        skip_trivia();
        Token t;
        t.pos = here();
        if (eof()) return t;
        const char c = peek();
        if (ident_start(c)) {
            t.kind = Tok::Ident;
            t.text = identifier();
            return t;
        }
        if (std::isdigit(static_cast<unsigned char>(c))) {
            t.kind = Tok::Int;
            t.number = integer();
            return t;
        }
        switch (c) {
            case '$': {
                advance();
                t.text = "$" + identifier_tail(t.pos);
                t.kind = Tok::StringId;
                if (!eof() && peek() == '*') {
                    advance();
                    t.text += '*';
                    t.kind = Tok::StringGlob;
                }
                if (t.text == "$") fail(t.pos, "expected identifier after '$'");
                return t;
            }
            case '#': {
                advance();
                t.text = "#" + identifier_tail(t.pos);
                if (t.text == "#") fail(t.pos, "expected identifier after '#'");
                t.kind = Tok::CountId;
                return t;
            }
            case '"':
                t.kind = Tok::String;
                t.text = quoted();
                return t;
            case '{': advance(); t.kind = Tok::LBrace; return t;
            case '}': advance(); t.kind = Tok::RBrace; return t;
            case '(': advance(); t.kind = Tok::LParen; return t;
            case ')': advance(); t.kind = Tok::RParen; return t;
            case ':': advance(); t.kind = Tok::Colon; return t;
            case '-': advance(); t.kind = Tok::Minus; return t;
            case '=':
                advance();
                if (!eof() && peek() == '=') {
                    advance();
                    t.kind = Tok::Cmp;
                    t.cmp = Comparator::Eq;
                } else {
                    t.kind = Tok::Equals;
                }
                return t;
            case '!':
                advance();
                if (eof() || peek() != '=') fail(t.pos, "unexpected character '!'");
                advance();
                t.kind = Tok::Cmp;
                t.cmp = Comparator::Ne;
                return t;
            case '<':
            case '>': {
                advance();
                const bool eq = !eof() && peek() == '=';
                if (eq) advance();
                t.kind = Tok::Cmp;
                t.cmp = c == '<' ? (eq ? Comparator::Le : Comparator::Lt)
                                 : (eq ? Comparator::Ge : Comparator::Gt);
                return t;
            }
            default: break;
        }
        std::ostringstream msg;
        if (std::isprint(static_cast<unsigned char>(c)))
            msg << "unexpected character '" << c << "'";
        else
            msg << "unexpected byte 0x" << std::hex << (static_cast<unsigned>(c) & 0xFF);
        fail(t.pos, msg.str());
    }

    // Pattern position: a quoted string, a hex body or a regex.
    Token next_pattern() {
        skip_trivia();
        Token t;
        t.pos = here();
        if (eof()) fail(t.pos, "expected pattern, found end of input");
        switch (peek()) {
            case '"':
                t.kind = Tok::String;
                t.text = quoted();
                return t;
            case '{':
                t.kind = Tok::Hex;
                t.hex = hex_body();
                return t;
            case '/':
                t.kind = Tok::Regex;
                t.text = regex_body();
                return t;
            default:
                fail(t.pos, "expected text, hex or regex pattern");
        }
    }

    SourcePos here() const { return {line_, column_}; }

private:
    [[noreturn]] static void fail(SourcePos p, const std::string& msg) { throw ParseError(p, msg); }

    bool eof() const { return pos_ >= src_.size(); }
    char peek() const { return src_[pos_]; }
    char peek_at(std::size_t k) const { return pos_ + k < src_.size() ? src_[pos_ + k] : '\0'; }

    void advance() {
        if (src_[pos_] == '\n') {
            ++line_;
            column_ = 1;
        } else {
            ++column_;
        }
        ++pos_;
    }

    void skip_trivia() {
        while (!eof()) {
            const char c = peek();
            if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
                advance();
            } else if (c == '/' && peek_at(1) == '/') {
                while (!eof() && peek() != '\n') advance();
            } else if (c == '/' && peek_at(1) == '*') {
                const SourcePos start = here();
                advance();
                advance();
                while (!eof() && !(peek() == '*' && peek_at(1) == '/')) advance();
                if (eof()) fail(start, "unterminated comment");
                advance();
                advance();
            } else {
                break;
            }
        }
    }

    std::string identifier() {
        const SourcePos start = here();
        std::string out;
        while (!eof() && ident_char(peek())) {
            out.push_back(peek());
            advance();
        }
        if (out.size() > kMaxIdentifier) fail(start, "identifier too long");
        return out;
    }

    std::string identifier_tail(SourcePos start) {
        std::string out;
        while (!eof() && ident_char(peek())) {
            out.push_back(peek());
            advance();
        }
        if (out.size() > kMaxIdentifier) fail(start, "identifier too long");
        return out;
    }

    std::int64_t integer() {
        const SourcePos start = here();
        constexpr std::int64_t kMax = std::numeric_limits<std::int64_t>::max();
        std::int64_t v = 0;
        auto accumulate = [&](int digit, int base) {
            if (v > (kMax - digit) / base) fail(start, "integer literal out of range");
            v = v * base + digit;
        };
        if (peek() == '0' && (peek_at(1) == 'x' || peek_at(1) == 'X')) {
            advance();
            advance();
            if (eof() || hex_value(peek()) < 0) fail(start, "malformed hex integer");
            while (!eof() && hex_value(peek()) >= 0) {
                accumulate(hex_value(peek()), 16);
                advance();
            }
        } else {
            while (!eof() && std::isdigit(static_cast<unsigned char>(peek()))) {
                accumulate(peek() - '0', 10);
                advance();
            }
        }
        if (!eof() && (peek() == 'K' || peek() == 'M') && peek_at(1) == 'B') {
            const std::int64_t unit = peek() == 'K' ? 1024 : 1024 * 1024;
            if (v > kMax / unit) fail(start, "integer literal out of range");
            v *= unit;
            advance();
            advance();
        }
        if (!eof() && ident_char(peek())) fail(here(), "malformed integer literal");
        return v;
    }

    std::string quoted() {
        const SourcePos start = here();
        advance();  // opening quote
        std::string out;
        while (true) {
            if (eof() || peek() == '\n') fail(start, "unterminated string");
            const char c = peek();
            if (c == '"') {
                advance();
                return out;
            }
            if (c != '\\') {
                out.push_back(c);
                advance();
                continue;
            }
            const SourcePos esc = here();
            advance();
            if (eof()) fail(esc, "unterminated string");
            const char e = peek();
            advance();
            switch (e) {
                case '"': out.push_back('"'); break;
                case '\\': out.push_back('\\'); break;
                case 'n': out.push_back('\n'); break;
                case 't': out.push_back('\t'); break;
                case 'r': out.push_back('\r'); break;
                case 'x': {
                    const int hi = eof() ? -1 : hex_value(peek());
                    const int lo = hex_value(peek_at(1));
                    if (hi < 0 || lo < 0) fail(esc, "invalid \\x escape");
                    advance();
                    advance();
                    out.push_back(static_cast<char>(hi * 16 + lo));
                    break;
                }
                default: fail(esc, std::string("unknown escape sequence"));
            }
        }
    }

    std::uint16_t jump_bound(SourcePos at) {
        if (eof() || !std::isdigit(static_cast<unsigned char>(peek()))) fail(here(), "expected jump bound");
        std::uint32_t v = 0;
        while (!eof() && std::isdigit(static_cast<unsigned char>(peek()))) {
            v = v * 10 + static_cast<std::uint32_t>(peek() - '0');
            if (v > kMaxJump) fail(at, "jump bound exceeds 256");
            advance();
        }
        return static_cast<std::uint16_t>(v);
    }

    std::vector<HexToken> hex_body() {
        const SourcePos open = here();
        advance();  // '{'
        std::vector<HexToken> toks;
        auto skip_space = [&] {
            while (!eof()) {
                const char c = peek();
                if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
                    advance();
                } else if (c == '/' && peek_at(1) == '/') {
                    while (!eof() && peek() != '\n') advance();
                } else if (c == '/' && peek_at(1) == '*') {
                    const SourcePos s = here();
                    advance();
                    advance();
                    while (!eof() && !(peek() == '*' && peek_at(1) == '/')) advance();
                    if (eof()) fail(s, "unterminated comment");
                    advance();
                    advance();
                } else {
                    break;
                }
            }
        };
        while (true) {
            skip_space();
            if (eof()) fail(open, "unterminated hex string");
            const SourcePos at = here();
            const char c = peek();
            if (c == '}') {
                advance();
                break;
            }
            if (c == '[') {
                advance();
                skip_space();
                const std::uint16_t lo = jump_bound(at);
                std::uint16_t hi = lo;
                skip_space();
                if (!eof() && peek() == '-') {
                    advance();
                    skip_space();
                    hi = jump_bound(at);
                    skip_space();
                }
                if (eof() || peek() != ']') fail(at, "unterminated jump");
                advance();
                if (hi < lo) fail(at, "invalid jump bounds: min exceeds max");
                if (!toks.empty() && toks.back().kind == HexToken::Kind::Jump)
                    fail(at, "consecutive jumps");
                toks.push_back(HexToken::jump(lo, hi));
                continue;
            }
            const char c2 = peek_at(1);
            const int h = c == '?' ? -2 : hex_value(c);
            const int l = c2 == '?' ? -2 : hex_value(c2);
            if (h == -1 || l == -1 || pos_ + 1 >= src_.size())
                fail(at, "invalid hex byte");
            advance();
            advance();
            std::uint8_t value = 0, mask = 0;
            if (h >= 0) value |= static_cast<std::uint8_t>(h << 4), mask |= 0xF0;
            if (l >= 0) value |= static_cast<std::uint8_t>(l), mask |= 0x0F;
            toks.push_back(HexToken::byte(value, mask));
        }
        if (toks.empty()) fail(open, "empty hex string");
        if (toks.front().kind == HexToken::Kind::Jump || toks.back().kind == HexToken::Kind::Jump)
            fail(open, "hex string cannot start or end with a jump");
        const bool has_literal = std::any_of(toks.begin(), toks.end(), [](const HexToken& t) {
            return t.kind == HexToken::Kind::Byte && t.mask == 0xFF;
        });
        if (!has_literal) fail(open, "hex string needs at least one non-wildcard byte");
        return toks;
    }

    std::string regex_body() {
        const SourcePos start = here();
        advance();  // '/'
        std::string out;
        while (true) {
            if (eof() || peek() == '\n') fail(start, "unterminated regular expression");
            const char c = peek();
            if (c == '/') {
                advance();
                break;
            }
            out.push_back(c);
            advance();
            if (c == '\\') {
                if (eof() || peek() == '\n') fail(start, "unterminated regular expression");
                out.push_back(peek());
                advance();
            }
        }
        if (out.empty()) fail(start, "empty regular expression");
        return out;
    }

    std::string_view src_;
    std::size_t pos_ = 0;
    std::size_t line_ = 1;
    std::size_t column_ = 1;
};

// ---------------------------------------------------------------------------
// Parser

const std::set<std::string, std::less<>>& keywords() {
    static const std::set<std::string, std::less<>> k = {
        "rule",   "meta",     "strings",  "condition", "and",    "or",     "not",
        "at",     "of",       "any",      "all",       "them",   "true",   "false",
        "filesize", "uint8",  "uint16",   "uint32",    "fuzzy_sim", "nocase", "ascii",
        "wide",   "fullword",
    };
    return k;
}

bool is_keyword(std::string_view s) { return keywords().count(s) > 0; }

class Parser {
public:
    explicit Parser(std::string_view text) : lex_(text) { advance(); }

    RuleSet run() {
        RuleSet rs;
        std::set<std::string, std::less<>> names;
        while (tok_.kind != Tok::Eof) {
            const SourcePos at = tok_.pos;
            Rule r = rule();
            if (!names.insert(r.name).second) fail(at, "duplicate rule name '" + r.name + "'");
            rs.rules.push_back(std::move(r));
        }
        return rs;
    }

private:
    [[noreturn]] static void fail(SourcePos p, const std::string& msg) { throw ParseError(p, msg); }

    void advance() { tok_ = lex_.next(); }

    bool at_keyword(std::string_view kw) const { return tok_.kind == Tok::Ident && tok_.text == kw; }

    void expect_keyword(std::string_view kw) {
        if (!at_keyword(kw)) fail(tok_.pos, "expected '" + std::string(kw) + "'" + found());
        advance();
    }

    void expect(Tok kind, std::string_view what) {
        if (tok_.kind != kind) fail(tok_.pos, "expected " + std::string(what) + found());
        advance();
    }

    std::string found() const {
        switch (tok_.kind) {
            case Tok::Eof: return ", found end of input";
            case Tok::Ident:
            case Tok::StringId:
            case Tok::StringGlob:
            case Tok::CountId: return ", found '" + tok_.text + "'";
            case Tok::Int: return ", found integer";
            case Tok::String: return ", found string";
            default: return "";
        }
    }

    std::string plain_identifier(std::string_view what) {
        if (tok_.kind != Tok::Ident) fail(tok_.pos, "expected " + std::string(what) + found());
        if (is_keyword(tok_.text))
            fail(tok_.pos, "keyword '" + tok_.text + "' cannot be used as " + std::string(what));
        std::string s = tok_.text;
        advance();
        return s;
    }

    std::int64_t integer_literal() {
        if (tok_.kind != Tok::Int) fail(tok_.pos, "expected integer" + found());
        const std::int64_t v = tok_.number;
        advance();
        return v;
    }

    Comparator comparator() {
        if (tok_.kind != Tok::Cmp) fail(tok_.pos, "expected comparison operator" + found());
        const Comparator c = tok_.cmp;
        advance();
        return c;
    }

    Rule rule() {
        expect_keyword("rule");
        Rule r;
        r.name = plain_identifier("rule name");
        if (tok_.kind == Tok::Colon) {
            advance();
            if (tok_.kind != Tok::Ident) fail(tok_.pos, "expected tag" + found());
            while (tok_.kind == Tok::Ident) r.tags.push_back(plain_identifier("tag"));
        }
        expect(Tok::LBrace, "'{'");
        if (at_keyword("meta")) {
            advance();
            expect(Tok::Colon, "':'");
            meta_section(r);
        }
        if (at_keyword("strings")) {
            advance();
            if (tok_.kind != Tok::Colon) fail(tok_.pos, "expected ':'" + found());
            strings_section(r);
        }
        expect_keyword("condition");
        expect(Tok::Colon, "':'");
        ids_.clear();
        for (const auto& p : r.patterns) ids_.push_back(p.id);
        r.condition = expression(0);
        expect(Tok::RBrace, "'}'");
        return r;
    }

    void meta_section(Rule& r) {
        if (tok_.kind != Tok::Ident || at_keyword("strings") || at_keyword("condition"))
            fail(tok_.pos, "expected meta entry" + found());
        while (tok_.kind == Tok::Ident && !at_keyword("strings") && !at_keyword("condition")) {
            const std::string key = plain_identifier("meta key");
            expect(Tok::Equals, "'='");
            const SourcePos vpos = tok_.pos;
            MetaValue value;
            if (tok_.kind == Tok::String) {
                value = tok_.text;
                advance();
            } else if (tok_.kind == Tok::Int) {
                value = tok_.number;
                advance();
            } else if (tok_.kind == Tok::Minus) {
                advance();
                value = -integer_literal();
            } else if (at_keyword("true") || at_keyword("false")) {
                value = at_keyword("true");
                advance();
            } else {
                fail(vpos, "expected meta value" + found());
            }
            if (key == "severity") {
                const auto* s = std::get_if<std::string>(&value);
                if (s == nullptr || !severity_from(*s))
                    fail(vpos, "severity must be \"malicious\", \"suspicious\" or \"info\"");
            } else if ((key == "family" || key == "description") &&
                       !std::holds_alternative<std::string>(value)) {
                fail(vpos, key + " must be a string");
            }
            r.meta.emplace_back(key, std::move(value));
        }
    }

    void strings_section(Rule& r) {
        // tok_ is the ':' after "strings"; the lexer has not looked further.
        advance();
        if (tok_.kind != Tok::StringId) fail(tok_.pos, "expected pattern identifier" + found());
        while (tok_.kind == Tok::StringId) {
            const SourcePos idpos = tok_.pos;
            PatternDef def;
            def.id = tok_.text;
            for (const auto& p : r.patterns)
                if (p.id == def.id) fail(idpos, "duplicate pattern identifier '" + def.id + "'");
            // Read '=' without pre-lexing what follows it.
            tok_ = lex_.next();
            if (tok_.kind != Tok::Equals) fail(tok_.pos, "expected '='" + found());
            Token pat = lex_.next_pattern();
            advance();
            switch (pat.kind) {
                case Tok::String: {
                    if (pat.text.empty()) fail(pat.pos, "empty text pattern");
                    TextPattern tp{pat.text, 0};
                    while (true) {
                        unsigned flag = 0;
                        if (at_keyword("nocase")) flag = kNocase;
                        else if (at_keyword("ascii")) flag = kAscii;
                        else if (at_keyword("wide")) flag = kWide;
                        else if (at_keyword("fullword")) flag = kFullword;
                        else break;
                        if (tp.modifiers & flag) fail(tok_.pos, "duplicate modifier '" + tok_.text + "'");
                        tp.modifiers |= flag;
                        advance();
                    }
                    def.body = std::move(tp);
                    break;
                }
                case Tok::Hex:
                    def.body = HexPattern{std::move(pat.hex)};
                    break;
                case Tok::Regex: {
                    RegexPattern rp{pat.text, false};
                    while (at_keyword("nocase")) {
                        if (rp.nocase) fail(tok_.pos, "duplicate modifier 'nocase'");
                        rp.nocase = true;
                        advance();
                    }
                    if (at_keyword("ascii") || at_keyword("wide") || at_keyword("fullword"))
                        fail(tok_.pos, "modifier '" + tok_.text + "' is not allowed on regular expressions");
                    try {
                        const regex::Node n = regex::parse(rp.source, rp.nocase);
                        if (regex::nullable(n))
                            fail(pat.pos, "regular expression can match the empty string");
                    } catch (const regex::SyntaxError& e) {
                        // +1 for the opening slash.
                        SourcePos p = pat.pos;
                        p.column += std::min(e.offset(), rp.source.size()) + 1;
                        fail(p, std::string("invalid regular expression: ") + e.what());
                    }
                    def.body = std::move(rp);
                    break;
                }
                default: fail(pat.pos, "expected pattern");
            }
            r.patterns.push_back(std::move(def));
        }
    }

    void require_pattern(const std::string& id, SourcePos at) {
        const std::string want = "$" + id.substr(1);
        if (std::find(ids_.begin(), ids_.end(), want) == ids_.end())
            fail(at, "undefined pattern '" + want + "'");
    }

    Expr expression(std::size_t depth) {
        Expr lhs = conjunction(depth);
        while (at_keyword("or")) {
            advance();
            lhs = Expr::disj(std::move(lhs), conjunction(depth));
        }
        return lhs;
    }

    Expr conjunction(std::size_t depth) {
        Expr lhs = unary(depth);
        while (at_keyword("and")) {
            advance();
            lhs = Expr::conj(std::move(lhs), unary(depth));
        }
        return lhs;
    }

    Expr unary(std::size_t depth) {
        if (depth > kMaxConditionDepth) fail(tok_.pos, "condition nested too deeply");
        if (at_keyword("not")) {
            advance();
            return Expr::negate(unary(depth + 1));
        }
        return primary(depth);
    }

    std::string of_set() {
        if (at_keyword("them")) {
            if (ids_.empty()) fail(tok_.pos, "'them' used in a rule without patterns");
            advance();
            return "them";
        }
        expect(Tok::LParen, "'them' or '('");
        if (tok_.kind != Tok::StringId && tok_.kind != Tok::StringGlob)
            fail(tok_.pos, "expected pattern identifier or wildcard" + found());
        const std::string set = tok_.text;
        const bool any = std::any_of(ids_.begin(), ids_.end(),
                                     [&](const std::string& id) { return set_selects(set, id); });
        if (!any) fail(tok_.pos, "'" + set + "' does not match any pattern");
        advance();
        expect(Tok::RParen, "')'");
        return set;
    }

    Expr primary(std::size_t depth) {
        const SourcePos at = tok_.pos;
        switch (tok_.kind) {
            case Tok::LParen: {
                advance();
                Expr inner = expression(depth + 1);
                expect(Tok::RParen, "')'");
                return inner;
            }
            case Tok::StringId: {
                const std::string id = tok_.text;
                require_pattern(id, at);
                advance();
                if (at_keyword("at")) {
                    advance();
                    return Expr::at(id, integer_literal());
                }
                return Expr::string_ref(id);
            }
            case Tok::CountId: {
                const std::string id = tok_.text;
                require_pattern(id, at);
                advance();
                const Comparator c = comparator();
                return Expr::count(id, c, integer_literal());
            }
            case Tok::Int: {
                const std::int64_t n = tok_.number;
                advance();
                if (at_keyword("of")) {
                    advance();
                    return Expr::of(Quantifier::Count, n, of_set());
                }
                return Expr::integer(n);
            }
            case Tok::Ident: break;
            default: fail(at, "expected condition" + found());
        }
        const std::string kw = tok_.text;
        if (kw == "true" || kw == "false") {
            advance();
            return Expr::boolean(kw == "true");
        }
        if (kw == "any" || kw == "all") {
            advance();
            expect_keyword("of");
            return Expr::of(kw == "any" ? Quantifier::Any : Quantifier::All, 0, of_set());
        }
        if (kw == "filesize") {
            advance();
            const Comparator c = comparator();
            return Expr::filesize(c, integer_literal());
        }
        if (kw == "uint8" || kw == "uint16" || kw == "uint32") {
            const int width = kw == "uint8" ? 8 : kw == "uint16" ? 16 : 32;
            advance();
            expect(Tok::LParen, "'('");
            const std::int64_t off = integer_literal();
            expect(Tok::RParen, "')'");
            const Comparator c = comparator();
            return Expr::uint_read(width, off, c, integer_literal());
        }
        if (kw == "fuzzy_sim") {
            advance();
            expect(Tok::LParen, "'('");
            if (tok_.kind != Tok::String) fail(tok_.pos, "expected fuzzy signature string" + found());
            const SourcePos spos = tok_.pos;
            FuzzySignature sig;
            try {
                sig = parse_signature(tok_.text);
            } catch (const FormatError& e) {
                fail(spos, std::string("invalid fuzzy signature: ") + e.what());
            }
            advance();
            expect(Tok::RParen, "')'");
            const Comparator c = comparator();
            const SourcePos vpos = tok_.pos;
            const std::int64_t v = integer_literal();
            if (v > 100) fail(vpos, "fuzzy_sim threshold must be within 0..100");
            return Expr::fuzzy_sim(std::move(sig), c, v);
        }
        fail(at, "unexpected '" + kw + "' in condition");
    }

    Lexer lex_;
    Token tok_;
    std::vector<std::string> ids_;
};

// ---------------------------------------------------------------------------
// Rendering

std::string quote(std::string_view bytes) {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out = "\"";
    for (char ch : bytes) {
        const auto c = static_cast<unsigned char>(ch);
        if (c == '"' || c == '\\') {
            out.push_back('\\');
            out.push_back(static_cast<char>(c));
        } else if (c >= 0x20 && c < 0x7F) {
            out.push_back(static_cast<char>(c));
        } else {
            out += "\\x";
            out.push_back(kDigits[c >> 4]);
            out.push_back(kDigits[c & 0xF]);
        }
    }
    out.push_back('"');
    return out;
}

std::string render_hex(const HexPattern& h) {
    static constexpr char kDigits[] = "0123456789ABCDEF";
    std::string out = "{";
    for (const auto& t : h.tokens) {
        out.push_back(' ');
        if (t.kind == HexToken::Kind::Jump) {
            out += "[" + std::to_string(t.min);
            if (t.max != t.min) out += "-" + std::to_string(t.max);
            out += "]";
        } else {
            out.push_back((t.mask & 0xF0) ? kDigits[t.value >> 4] : '?');
            out.push_back((t.mask & 0x0F) ? kDigits[t.value & 0xF] : '?');
        }
    }
    out += " }";
    return out;
}

bool is_binary(const Expr& e) { return e.kind == Expr::Kind::And || e.kind == Expr::Kind::Or; }

void render_expr(const Expr& e, std::string& out) {
    auto child = [&](const Expr& c) {
        if (is_binary(c)) {
            out.push_back('(');
            render_expr(c, out);
            out.push_back(')');
        } else {
            render_expr(c, out);
        }
    };
    auto cmp_tail = [&](Comparator c, std::int64_t v) {
        out += " ";
        out += to_string(c);
        out += " " + std::to_string(v);
    };
    switch (e.kind) {
        case Expr::Kind::And:
        case Expr::Kind::Or:
            child(e.children[0]);
            out += e.kind == Expr::Kind::And ? " and " : " or ";
            child(e.children[1]);
            break;
        case Expr::Kind::Not:
            out += "not ";
            child(e.children[0]);
            break;
        case Expr::Kind::StringRef: out += e.ident; break;
        case Expr::Kind::At: out += e.ident + " at " + std::to_string(e.offset); break;
        case Expr::Kind::CountCmp:
            out += e.ident;
            cmp_tail(e.cmp, e.value);
            break;
        case Expr::Kind::Of:
            out += e.quantifier == Quantifier::Any   ? std::string("any")
                   : e.quantifier == Quantifier::All ? std::string("all")
                                                     : std::to_string(e.quantity);
            out += e.ident == "them" ? " of them" : " of (" + e.ident + ")";
            break;
        case Expr::Kind::Filesize:
            out += "filesize";
            cmp_tail(e.cmp, e.value);
            break;
        case Expr::Kind::UintRead:
            out += "uint" + std::to_string(e.width) + "(" + std::to_string(e.offset) + ")";
            cmp_tail(e.cmp, e.value);
            break;
        case Expr::Kind::FuzzySim:
            out += "fuzzy_sim(" + quote(e.signature.render()) + ")";
            cmp_tail(e.cmp, e.value);
            break;
        case Expr::Kind::IntLiteral: out += std::to_string(e.value); break;
        case Expr::Kind::BoolLiteral: out += e.truth ? "true" : "false"; break;
    }
}

}  // namespace

RuleSet parse_rules(std::string_view text) { return Parser(text).run(); }

RuleSet load_rule_files(const std::vector<std::string>& paths) {
    std::vector<std::string> files;
    for (const auto& p : paths) {
        std::error_code ec;
        if (std::filesystem::is_directory(p, ec)) {
            for (const auto& entry : std::filesystem::recursive_directory_iterator(p))
                if (entry.is_regular_file() && (entry.path().extension() == ".yar" || entry.path().extension() == ".yara"))
                    files.push_back(entry.path().string());
        } else {
            files.push_back(p);
        }
    }
    std::sort(files.begin(), files.end());

    RuleSet all;
    std::set<std::string, std::less<>> names;
    for (const auto& f : files) {
        std::ifstream in(f, std::ios::binary);
        if (!in) throw InputError(f + ": cannot open rule file");
        std::ostringstream buf;
        buf << in.rdbuf();
        RuleSet rs;
        try {
            rs = parse_rules(buf.str());
        } catch (const ParseError& e) {
            throw ParseError(e.position(), e.message(), f);
        }
        for (auto& r : rs.rules) {
            if (!names.insert(r.name).second)
                throw ParseError({1, 1}, "duplicate rule name '" + r.name + "' across rule files", f);
            all.rules.push_back(std::move(r));
        }
    }
    return all;
}

std::string render_condition(const Expr& e) {
    std::string out;
    render_expr(e, out);
    return out;
}

std::string render_rules(const RuleSet& rs) {
    std::string out;
    for (std::size_t i = 0; i < rs.rules.size(); ++i) {
        const Rule& r = rs.rules[i];
        if (i > 0) out += "\n";
        out += "rule " + r.name;
        if (!r.tags.empty()) {
            out += " :";
            for (const auto& t : r.tags) out += " " + t;
        }
        out += "\n{\n";
        if (!r.meta.empty()) {
            out += "    meta:\n";
            for (const auto& [k, v] : r.meta) {
                out += "        " + k + " = ";
                if (const auto* s = std::get_if<std::string>(&v)) out += quote(*s);
                else if (const auto* n = std::get_if<std::int64_t>(&v)) out += std::to_string(*n);
                else out += std::get<bool>(v) ? "true" : "false";
                out += "\n";
            }
        }
        if (!r.patterns.empty()) {
            out += "    strings:\n";
            for (const auto& p : r.patterns) {
                out += "        " + p.id + " = ";
                if (const auto* t = std::get_if<TextPattern>(&p.body)) {
                    out += quote(t->bytes);
                    if (t->modifiers & kNocase) out += " nocase";
                    if (t->modifiers & kAscii) out += " ascii";
                    if (t->modifiers & kWide) out += " wide";
                    if (t->modifiers & kFullword) out += " fullword";
                } else if (const auto* h = std::get_if<HexPattern>(&p.body)) {
                    out += render_hex(*h);
                } else {
                    const auto& rx = std::get<RegexPattern>(p.body);
                    out += "/" + rx.source + "/";
                    if (rx.nocase) out += " nocase";
                }
                out += "\n";
            }
        }
        out += "    condition:\n        " + render_condition(r.condition) + "\n}\n";
    }
    return out;
}

}  // namespace sigtriage
