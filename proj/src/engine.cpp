#include "sigtriage/engine.hpp"

#include <algorithm>
#include <cctype>
#include <deque>
#include <map>

#include "sigtriage/errors.hpp"

namespace sigtriage {

namespace {

constexpr std::array<std::uint8_t, 256> make_fold_table() {
    std::array<std::uint8_t, 256> t{};
    for (int i = 0; i < 256; ++i)
        t[static_cast<std::size_t>(i)] =
            static_cast<std::uint8_t>((i >= 'A' && i <= 'Z') ? i - 'A' + 'a' : i);
    return t;
}

constexpr auto kFold = make_fold_table();

bool is_alnum(std::uint8_t c) {
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

std::uint64_t read_le(std::span<const std::uint8_t> data, std::uint64_t off, int width) {
    std::uint64_t v = 0;
    for (int i = width / 8; i-- > 0;) v = (v << 8) | data[off + static_cast<std::uint64_t>(i)];
    return v;
}

// Hex pattern split at its jumps.
struct Segment {
    std::vector<std::uint8_t> value;
    std::vector<std::uint8_t> mask;

    bool matches(std::span<const std::uint8_t> data, std::uint64_t at) const {
        if (at + value.size() > data.size()) return false;
        for (std::size_t i = 0; i < value.size(); ++i)
            if ((data[at + i] & mask[i]) != value[i]) return false;
        return true;
    }
};

struct Variant {
    enum class Kind { Text, Hex, Regex } kind = Kind::Text;
    std::size_t pattern = 0;  // global pattern slot

    // Text
    std::string bytes;
    bool nocase = false;
    bool fullword = false;
    bool wide = false;

    // Hex: segments[i] is followed by jumps[i] (jumps.size() == segments.size() - 1).
    std::vector<Segment> segments;
    std::vector<std::pair<std::uint16_t, std::uint16_t>> jumps;

    // Regex
    std::unique_ptr<regex::ReverseMatcher> matcher;
    bool has_atom = false;
};

struct CompiledRule {
    std::string name;
    std::vector<std::string> tags;
    Severity severity = Severity::Info;
    std::string family;
    std::vector<std::string> ids;
    std::vector<std::size_t> slots;  // global pattern slot per id
    ConditionProgram program;
};

// Dense Aho-Corasick automaton over case-folded bytes.
class AhoCorasick {
public:
    void build(const std::vector<Atom>& atoms) {
        delta_.assign(1, {});
        delta_[0].fill(-1);
        out_.assign(1, {});
        for (std::size_t a = 0; a < atoms.size(); ++a) {
            int s = 0;
            for (char ch : atoms[a].bytes) {
                const auto c = static_cast<std::uint8_t>(ch);
                if (delta_[static_cast<std::size_t>(s)][c] < 0) {
                    delta_[static_cast<std::size_t>(s)][c] = static_cast<std::int32_t>(delta_.size());
                    delta_.emplace_back();
                    delta_.back().fill(-1);
                    out_.emplace_back();
                }
                s = delta_[static_cast<std::size_t>(s)][c];
            }
            out_[static_cast<std::size_t>(s)].push_back(static_cast<std::uint32_t>(a));
        }
        std::vector<std::int32_t> fail(delta_.size(), 0);
        std::deque<std::int32_t> queue;
        for (int c = 0; c < 256; ++c) {
            auto& t = delta_[0][static_cast<std::size_t>(c)];
            if (t < 0) {
                t = 0;
            } else {
                fail[static_cast<std::size_t>(t)] = 0;
                queue.push_back(t);
            }
        }
        while (!queue.empty()) {
            const auto s = static_cast<std::size_t>(queue.front());
            queue.pop_front();
            const auto f = static_cast<std::size_t>(fail[s]);
            out_[s].insert(out_[s].end(), out_[f].begin(), out_[f].end());
            for (int c = 0; c < 256; ++c) {
                auto& t = delta_[s][static_cast<std::size_t>(c)];
                if (t < 0) {
                    t = delta_[f][static_cast<std::size_t>(c)];
                } else {
                    fail[static_cast<std::size_t>(t)] = delta_[f][static_cast<std::size_t>(c)];
                    queue.push_back(t);
                }
            }
        }
    }

    template <typename OnHit>
    void run(std::span<const std::uint8_t> data, OnHit on_hit) const {
        std::size_t s = 0;
        for (std::size_t i = 0; i < data.size(); ++i) {
            s = static_cast<std::size_t>(delta_[s][kFold[data[i]]]);
            for (std::uint32_t a : out_[s]) on_hit(a, i + 1);
        }
    }

    std::size_t state_count() const noexcept { return delta_.size(); }

private:
    std::vector<std::array<std::int32_t, 256>> delta_;
    std::vector<std::vector<std::uint32_t>> out_;
};

// Offsets collected for one pattern during a scan.
struct Collector {
    std::vector<std::uint64_t> offsets;
    bool truncated = false;
    std::uint64_t bound = ~std::uint64_t{0};

    void add(std::uint64_t off) {
        if (truncated && off > bound) return;
        offsets.push_back(off);
        if (offsets.size() >= 2 * kMaxOffsetsPerPattern) compact();
    }

    void compact() {
        std::sort(offsets.begin(), offsets.end());
        offsets.erase(std::unique(offsets.begin(), offsets.end()), offsets.end());
        if (offsets.size() > kMaxOffsetsPerPattern) {
            offsets.resize(kMaxOffsetsPerPattern);
            truncated = true;
            bound = offsets.back();
        }
    }
};

bool text_matches(const Variant& v, std::span<const std::uint8_t> data, std::uint64_t at) {
    const std::size_t len = v.bytes.size();
    if (at + len > data.size()) return false;
    for (std::size_t i = 0; i < len; ++i) {
        const auto want = static_cast<std::uint8_t>(v.bytes[i]);
        const std::uint8_t got = data[at + i];
        if (v.nocase ? kFold[got] != kFold[want] : got != want) return false;
    }
    if (!v.fullword) return true;
    const std::uint64_t end = at + len;
    if (v.wide) {
        const bool before = at >= 2 && data[at - 1] == 0 && is_alnum(data[at - 2]);
        const bool after = end + 1 < data.size() && is_alnum(data[end]) && data[end + 1] == 0;
        return !before && !after;
    }
    const bool before = at > 0 && is_alnum(data[at - 1]);
    const bool after = end < data.size() && is_alnum(data[end]);
    return !before && !after;
}

// Start offsets of hex matches whose segment `k` sits at `seg_at`.
void hex_matches(const Variant& v, std::span<const std::uint8_t> data, std::size_t k,
                 std::uint64_t seg_at, Collector& sink) {
    if (!v.segments[k].matches(data, seg_at)) return;

    std::vector<std::uint64_t> frontier{seg_at + v.segments[k].value.size()};
    std::vector<std::uint64_t> next;
    for (std::size_t j = k + 1; j < v.segments.size() && !frontier.empty(); ++j) {
        next.clear();
        const auto [lo, hi] = v.jumps[j - 1];
        for (std::uint64_t e : frontier)
            for (std::uint64_t gap = lo; gap <= hi; ++gap)
                if (v.segments[j].matches(data, e + gap)) next.push_back(e + gap + v.segments[j].value.size());
        std::sort(next.begin(), next.end());
        next.erase(std::unique(next.begin(), next.end()), next.end());
        frontier.swap(next);
    }
    if (frontier.empty()) return;

    std::vector<std::uint64_t> starts{seg_at};
    for (std::size_t j = k; j-- > 0 && !starts.empty();) {
        next.clear();
        const auto [lo, hi] = v.jumps[j];
        const std::uint64_t len = v.segments[j].value.size();
        for (std::uint64_t s : starts)
            for (std::uint64_t gap = lo; gap <= hi; ++gap) {
                if (s < gap + len) break;
                const std::uint64_t at = s - gap - len;
                if (v.segments[j].matches(data, at)) next.push_back(at);
            }
        std::sort(next.begin(), next.end());
        next.erase(std::unique(next.begin(), next.end()), next.end());
        starts.swap(next);
    }
    for (std::uint64_t s : starts) sink.add(s);
}

std::string fold_bytes(std::string_view s) {
    std::string out(s);
    for (char& c : out) c = static_cast<char>(kFold[static_cast<std::uint8_t>(c)]);
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// ConditionProgram


ConditionProgram::ConditionProgram(const Expr& expr, std::span<const std::string> ids) {
    emit(expr, ids);
}

void ConditionProgram::emit(const Expr& e, std::span<const std::string> ids) {
    using Op = Instr::Op;
    auto slot_of = [&](const std::string& id) {
        const std::string want = "$" + id.substr(1);
        for (std::size_t i = 0; i < ids.size(); ++i)
            if (ids[i] == want) return static_cast<int>(i);
        return -1;
    };
    switch (e.kind) {
        case Expr::Kind::And:
        case Expr::Kind::Or: {
            emit(e.children[0], ids);
            const std::size_t jump = code_.size();
            code_.push_back({e.kind == Expr::Kind::And ? Op::JumpIfFalse : Op::JumpIfTrue});
            emit(e.children[1], ids);
            code_[jump].slot = static_cast<int>(code_.size());
            break;
        }
        case Expr::Kind::Not:
            emit(e.children[0], ids);
            code_.push_back({Op::Not});
            break;
        case Expr::Kind::StringRef: code_.push_back({Op::Str, slot_of(e.ident)}); break;
        case Expr::Kind::At: {
            Instr in{Op::StrAt, slot_of(e.ident)};
            in.a = e.offset;
            code_.push_back(in);
            break;
        }
        case Expr::Kind::CountCmp: {
            Instr in{Op::Count, slot_of(e.ident), e.cmp};
            in.a = e.value;
            code_.push_back(in);
            break;
        }
        case Expr::Kind::Of: {
            std::vector<int> members;
            for (std::size_t i = 0; i < ids.size(); ++i)
                if (set_selects(e.ident, ids[i])) members.push_back(static_cast<int>(i));
            Instr in{Op::Of, static_cast<int>(sets_.size())};
            in.quantifier = e.quantifier;
            in.a = e.quantity;
            sets_.push_back(std::move(members));
            code_.push_back(in);
            break;
        }
        case Expr::Kind::Filesize: {
            Instr in{Op::Filesize, -1, e.cmp};
            in.a = e.value;
            code_.push_back(in);
            break;
        }
        case Expr::Kind::UintRead: {
            Instr in{Op::Uint, -1, e.cmp};
            in.a = e.offset;
            in.b = e.value;
            in.width = e.width;
            code_.push_back(in);
            break;
        }
        case Expr::Kind::FuzzySim: {
            Instr in{Op::Fuzzy, static_cast<int>(signatures_.size()), e.cmp};
            in.a = e.value;
            signatures_.push_back(e.signature);
            code_.push_back(in);
            uses_fuzzy_ = true;
            break;
        }
        case Expr::Kind::IntLiteral: {
            Instr in{Op::Bool};
            in.a = e.value != 0;
            code_.push_back(in);
            break;
        }
        case Expr::Kind::BoolLiteral: {
            Instr in{Op::Bool};
            in.a = e.truth;
            code_.push_back(in);
            break;
        }
    }
}

bool ConditionProgram::run(std::span<const std::vector<std::uint64_t>> offsets,
                           std::span<const std::uint8_t> data,
                           const std::optional<FuzzySignature>& fuzzy) const {
    using Op = Instr::Op;
    static const std::vector<std::uint64_t> kNone;
    auto slot = [&](int s) -> const std::vector<std::uint64_t>& {
        return (s >= 0 && static_cast<std::size_t>(s) < offsets.size())
                   ? offsets[static_cast<std::size_t>(s)]
                   : kNone;
    };
    std::vector<char> stack;
    stack.reserve(16);
    for (std::size_t pc = 0; pc < code_.size(); ++pc) {
        const Instr& in = code_[pc];
        switch (in.op) {
            case Op::Bool: stack.push_back(in.a != 0); break;
            case Op::Str: stack.push_back(!slot(in.slot).empty()); break;
            case Op::StrAt: {
                const auto& offs = slot(in.slot);
                stack.push_back(in.a >= 0 && std::binary_search(offs.begin(), offs.end(),
                                                                static_cast<std::uint64_t>(in.a)));
                break;
            }
            case Op::Count:
                stack.push_back(compare(static_cast<std::int64_t>(slot(in.slot).size()), in.cmp, in.a));
                break;
            case Op::Of: {
                const auto& members = sets_[static_cast<std::size_t>(in.slot)];
                std::int64_t hits = 0;
                for (int m : members) hits += slot(m).empty() ? 0 : 1;
                const auto total = static_cast<std::int64_t>(members.size());
                bool r = false;
                switch (in.quantifier) {
                    case Quantifier::Any: r = hits >= 1; break;
                    case Quantifier::All: r = hits == total; break;
                    case Quantifier::Count: r = hits >= in.a; break;
                }
                stack.push_back(r);
                break;
            }
            case Op::Filesize:
                stack.push_back(compare(static_cast<std::int64_t>(data.size()), in.cmp, in.a));
                break;
            case Op::Uint: {
                const auto bytes = static_cast<std::uint64_t>(in.width / 8);
                const bool fits = in.a >= 0 && static_cast<std::uint64_t>(in.a) + bytes <= data.size();
                stack.push_back(fits && compare(static_cast<std::int64_t>(read_le(
                                                    data, static_cast<std::uint64_t>(in.a), in.width)),
                                                in.cmp, in.b));
                break;
            }
            case Op::Fuzzy:
                stack.push_back(fuzzy.has_value() &&
                                compare(fuzzy_compare(*fuzzy, signatures_[static_cast<std::size_t>(in.slot)]),
                                        in.cmp, in.a));
                break;
            case Op::Not: stack.back() = !stack.back(); break;
            case Op::JumpIfFalse:
                if (!stack.back()) pc = static_cast<std::size_t>(in.slot) - 1;
                else stack.pop_back();
                break;
            case Op::JumpIfTrue:
                if (stack.back()) pc = static_cast<std::size_t>(in.slot) - 1;
                else stack.pop_back();
                break;
        }
    }
    return !stack.empty() && stack.back();
}

bool eval_condition(const Expr& expr, const MatchContext& ctx) {
    const ConditionProgram program(expr, ctx.ids);
    std::vector<std::vector<std::uint64_t>> sorted(ctx.ids.size());
    for (std::size_t i = 0; i < ctx.ids.size() && i < ctx.offsets.size(); ++i) {
        sorted[i] = ctx.offsets[i];
        std::sort(sorted[i].begin(), sorted[i].end());
    }
    return program.run(sorted, ctx.data, ctx.fuzzy);
}

std::vector<const RuleMatch*> MatchResult::matched() const {
    std::vector<const RuleMatch*> out;
    for (const auto& r : rules)
        if (r.matched) out.push_back(&r);
    return out;
}

// ---------------------------------------------------------------------------
// CompiledRuleSet

struct CompiledRuleSet::Impl {
    std::vector<CompiledRule> rules;
    std::vector<std::string> pattern_names;  // "rule/$id" per global slot
    std::vector<Variant> variants;
    std::vector<Atom> atoms;
    AhoCorasick automaton;
    bool fuzzy_needed = false;
};

CompiledRuleSet::CompiledRuleSet() : impl_(std::make_unique<Impl>()) {}
CompiledRuleSet::~CompiledRuleSet() = default;
CompiledRuleSet::CompiledRuleSet(CompiledRuleSet&&) noexcept = default;
CompiledRuleSet& CompiledRuleSet::operator=(CompiledRuleSet&&) noexcept = default;

bool CompiledRuleSet::fuzzy_needed() const noexcept { return impl_->fuzzy_needed; }
std::size_t CompiledRuleSet::rule_count() const noexcept { return impl_->rules.size(); }
const std::vector<Atom>& CompiledRuleSet::atoms() const noexcept { return impl_->atoms; }

std::vector<std::string> CompiledRuleSet::full_scan_patterns() const {
    std::vector<std::string> out;
    for (const auto& v : impl_->variants)
        if (v.kind == Variant::Kind::Regex && !v.has_atom) out.push_back(impl_->pattern_names[v.pattern]);
    return out;
}

namespace {

void add_text_variants(const TextPattern& tp, std::size_t slot, std::vector<Variant>& variants) {
    const bool want_wide = tp.modifiers & kWide;
    const bool want_ascii = (tp.modifiers & kAscii) || !want_wide;
    auto make = [&](std::string bytes, bool wide) {
        Variant v;
        v.kind = Variant::Kind::Text;
        v.pattern = slot;
        v.bytes = std::move(bytes);
        v.nocase = tp.modifiers & kNocase;
        v.fullword = tp.modifiers & kFullword;
        v.wide = wide;
        variants.push_back(std::move(v));
    };
    if (want_ascii) make(tp.bytes, false);
    if (want_wide) {
        std::string w;
        for (char c : tp.bytes) {
            w.push_back(c);
            w.push_back('\0');
        }
        make(std::move(w), true);
    }
}

Variant hex_variant(const HexPattern& hp, std::size_t slot) {
    Variant v;
    v.kind = Variant::Kind::Hex;
    v.pattern = slot;
    v.segments.emplace_back();
    for (const auto& t : hp.tokens) {
        if (t.kind == HexToken::Kind::Jump) {
            v.jumps.emplace_back(t.min, t.max);
            v.segments.emplace_back();
        } else {
            v.segments.back().value.push_back(t.value & t.mask);
            v.segments.back().mask.push_back(t.mask);
        }
    }
    return v;
}

// Longest run of fully literal bytes across all segments, lowest offset on ties.
std::optional<Atom> hex_atom(const Variant& v) {
    std::optional<Atom> best;
    for (std::size_t s = 0; s < v.segments.size(); ++s) {
        const Segment& seg = v.segments[s];
        std::size_t i = 0;
        while (i < seg.mask.size()) {
            if (seg.mask[i] != 0xFF) {
                ++i;
                continue;
            }
            std::size_t j = i;
            while (j < seg.mask.size() && seg.mask[j] == 0xFF) ++j;
            if (!best || j - i > best->bytes.size()) {
                Atom a;
                a.bytes.assign(seg.value.begin() + static_cast<std::ptrdiff_t>(i),
                               seg.value.begin() + static_cast<std::ptrdiff_t>(j));
                a.segment = s;
                a.offset = i;
                best = std::move(a);
            }
            i = j;
        }
    }
    return best;
}

}  // namespace

CompiledRuleSet compile(const RuleSet& rs) {
    CompiledRuleSet out;
    auto& im = *out.impl_;
    for (const Rule& rule : rs.rules) {
        CompiledRule cr;
        cr.name = rule.name;
        cr.tags = rule.tags;
        cr.severity = rule.severity();
        cr.family = rule.family();
        for (const PatternDef& p : rule.patterns) {
            const std::size_t slot = im.pattern_names.size();
            const std::string qualified = rule.name + "/" + p.id;
            im.pattern_names.push_back(qualified);
            cr.ids.push_back(p.id);
            cr.slots.push_back(slot);

            if (const auto* tp = std::get_if<TextPattern>(&p.body)) {
                if (tp->bytes.empty()) throw CompileError(qualified + ": empty text pattern");
                add_text_variants(*tp, slot, im.variants);
            } else if (const auto* hp = std::get_if<HexPattern>(&p.body)) {
                Variant v = hex_variant(*hp, slot);
                std::optional<Atom> atom = hex_atom(v);
                if (!atom) throw CompileError(qualified + ": hex pattern has no literal byte to anchor on");
                for (const auto& s : v.segments)
                    if (s.value.empty())
                        throw CompileError(qualified + ": hex pattern has adjacent or edge jumps");
                atom->variant = im.variants.size();
                if (atom->bytes.size() > kMaxAtomLength) atom->bytes.resize(kMaxAtomLength);
                atom->bytes = fold_bytes(atom->bytes);
                im.atoms.push_back(std::move(*atom));
                im.variants.push_back(std::move(v));
            } else {
                const auto& rp = std::get<RegexPattern>(p.body);
                regex::Node node;
                try {
                    node = regex::parse(rp.source, rp.nocase);
                } catch (const regex::SyntaxError& e) {
                    throw CompileError(qualified + ": " + e.what());
                }
                if (regex::nullable(node))
                    throw CompileError(qualified + ": regular expression can match the empty string");
                Variant v;
                v.kind = Variant::Kind::Regex;
                v.pattern = slot;
                v.matcher = std::make_unique<regex::ReverseMatcher>(node);
                std::string lit = regex::mandatory_literal(node);
                if (!lit.empty()) {
                    if (lit.size() > kMaxAtomLength) lit.resize(kMaxAtomLength);
                    v.has_atom = true;
                    im.atoms.push_back(Atom{fold_bytes(lit), im.variants.size(), 0, 0});
                }
                im.variants.push_back(std::move(v));
            }
        }
        cr.program = ConditionProgram(rule.condition, cr.ids);
        im.fuzzy_needed = im.fuzzy_needed || cr.program.uses_fuzzy();
        im.rules.push_back(std::move(cr));
    }
    // Text atoms: a prefix of the whole variant.
    for (std::size_t i = 0; i < im.variants.size(); ++i) {
        const Variant& v = im.variants[i];
        if (v.kind != Variant::Kind::Text) continue;
        im.atoms.push_back(Atom{fold_bytes(std::string_view(v.bytes).substr(0, kMaxAtomLength)), i, 0, 0});
    }
    std::stable_sort(im.atoms.begin(), im.atoms.end(),
                     [](const Atom& a, const Atom& b) { return a.variant < b.variant; });
    im.automaton.build(im.atoms);
    return out;
}

MatchResult CompiledRuleSet::scan(std::span<const std::uint8_t> data) const {
    const Impl& im = *impl_;
    std::vector<Collector> found(im.pattern_names.size());
    std::vector<char> regex_gate(im.variants.size(), 0);

    im.automaton.run(data, [&](std::uint32_t atom_index, std::size_t end) {
        const Atom& atom = im.atoms[atom_index];
        const Variant& v = im.variants[atom.variant];
        const std::uint64_t atom_at = end - atom.bytes.size();
        switch (v.kind) {
            case Variant::Kind::Text:
                if (text_matches(v, data, atom_at)) found[v.pattern].add(atom_at);
                break;
            case Variant::Kind::Hex:
                if (atom_at >= atom.offset)
                    hex_matches(v, data, atom.segment, atom_at - atom.offset, found[v.pattern]);
                break;
            case Variant::Kind::Regex:
                regex_gate[atom.variant] = 1;
                break;
        }
    });

    if (!data.empty()) {
        for (std::size_t i = 0; i < im.variants.size(); ++i) {
            const Variant& v = im.variants[i];
            if (v.kind != Variant::Kind::Regex || (v.has_atom && !regex_gate[i])) continue;
            bool truncated = false;
            for (std::uint64_t off : v.matcher->match_starts(data, kMaxOffsetsPerPattern, truncated))
                found[v.pattern].add(off);
            if (truncated) found[v.pattern].truncated = true;
        }
    }
    for (auto& c : found) c.compact();

    MatchResult result;
    result.filesize = data.size();
    if (im.fuzzy_needed && !data.empty()) result.fuzzy = fuzzy_hash(data);

    std::vector<std::vector<std::uint64_t>> slots;
    for (const CompiledRule& cr : im.rules) {
        RuleMatch rm;
        rm.name = cr.name;
        rm.tags = cr.tags;
        rm.severity = cr.severity;
        rm.family = cr.family;
        slots.clear();
        for (std::size_t i = 0; i < cr.ids.size(); ++i) {
            const Collector& c = found[cr.slots[i]];
            rm.patterns.push_back(PatternMatches{cr.ids[i], c.offsets, c.truncated});
            slots.push_back(c.offsets);
        }
        rm.matched = cr.program.run(slots, data, result.fuzzy);
        result.rules.push_back(std::move(rm));
    }
    return result;
}

MatchResult scan(const CompiledRuleSet& c, std::span<const std::uint8_t> data) { return c.scan(data); }

MatchResult scan(const CompiledRuleSet& c, std::string_view data) {
    return c.scan(std::span(reinterpret_cast<const std::uint8_t*>(data.data()), data.size()));
}

}  // namespace sigtriage
