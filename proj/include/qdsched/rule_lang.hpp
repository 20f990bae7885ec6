#pragma once

// Priority-rule expression language. One Rule = a job-selection expression
// and a machine-selection expression; lower scores dispatch first.
// Grammar and terminal semantics: docs/rule-dsl.md.

#include <algorithm>
#include <array>
#include <cctype>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qdsched/core.hpp"

namespace qdsched {

enum class Terminal : std::uint8_t { PT, WKR, RM, SO, PTM, UR, QL, DEN, NOW };

inline constexpr std::array<Terminal, 9> kAllTerminals = {Terminal::PT,  Terminal::WKR, Terminal::RM,
                                                          Terminal::SO,  Terminal::PTM, Terminal::UR,
                                                          Terminal::QL,  Terminal::DEN, Terminal::NOW};

inline constexpr std::string_view terminal_name(Terminal t) {
    constexpr std::array<std::string_view, 9> names = {"PT", "WKR", "RM", "SO", "PTM", "UR", "QL", "DEN", "NOW"};
    return names[static_cast<std::size_t>(t)];
}

inline std::optional<Terminal> terminal_from_name(std::string_view name) {
    for (Terminal t : kAllTerminals)
        if (terminal_name(t) == name) return t;
    return std::nullopt;
}

enum class OpCode : std::uint8_t { Terminal, Const, Add, Sub, Mul, PDiv, Min, Max, Neg, IfGt };

inline constexpr std::string_view op_name(OpCode op) {
    switch (op) {
        case OpCode::Add: return "add";
        case OpCode::Sub: return "sub";
        case OpCode::Mul: return "mul";
        case OpCode::PDiv: return "pdiv";
        case OpCode::Min: return "min";
        case OpCode::Max: return "max";
        case OpCode::Neg: return "neg";
        case OpCode::IfGt: return "ifgt";
        default: return "";
    }
}

inline constexpr int op_arity(OpCode op) {
    switch (op) {
        case OpCode::Terminal:
        case OpCode::Const: return 0;
        case OpCode::Neg: return 1;
        case OpCode::IfGt: return 4;
        default: return 2;
    }
}

inline constexpr bool op_commutative(OpCode op) {
    return op == OpCode::Add || op == OpCode::Mul || op == OpCode::Min || op == OpCode::Max;
}

inline std::optional<OpCode> op_from_name(std::string_view name) {
    for (OpCode op : {OpCode::Add, OpCode::Sub, OpCode::Mul, OpCode::PDiv, OpCode::Min, OpCode::Max, OpCode::Neg,
                      OpCode::IfGt})
        if (op_name(op) == name) return op;
    if (name == "div") return OpCode::PDiv;
    return std::nullopt;
}

/// Terminal values seen by a rule at one (operation, machine) decision point.
struct DispatchContext {
    double pt = 0, wkr = 0, rm = 0, so = 0, ptm = 0, ur = 0, ql = 0, den = 0, now = 0;

    double get(Terminal t) const {
        switch (t) {
            case Terminal::PT: return pt;
            case Terminal::WKR: return wkr;
            case Terminal::RM: return rm;
            case Terminal::SO: return so;
            case Terminal::PTM: return ptm;
            case Terminal::UR: return ur;
            case Terminal::QL: return ql;
            case Terminal::DEN: return den;
            case Terminal::NOW: return now;
        }
        return 0.0;
    }
};

/// Maximum tree depth (a lone terminal has depth 0).
inline constexpr int kMaxDepth = 17;
/// Every intermediate value is clamped to [-kScoreClamp, kScoreClamp].
inline constexpr double kScoreClamp = 1e12;
/// Divisors with magnitude below this are replaced by it (sign kept).
inline constexpr double kDivGuard = 1e-9;

/// Immutable expression tree with shared structure; copies are cheap.
class Expr {
public:
    Expr() : Expr(constant(0.0)) {}

    static Expr terminal(Terminal t);
    static Expr constant(double v);
    static Expr call(OpCode op, std::vector<Expr> args);

    OpCode op() const;
    Terminal term() const;
    double value() const;
    std::span<const Expr> args() const;
    int depth() const;
    std::size_t size() const;

private:
    struct Node;
    explicit Expr(std::shared_ptr<const Node> n) : node_(std::move(n)) {}
    std::shared_ptr<const Node> node_;
};

struct Expr::Node {
    OpCode op = OpCode::Const;
    Terminal term = Terminal::PT;
    double value = 0.0;
    std::vector<Expr> args;
    int depth = 0;
    std::size_t size = 1;
};

inline Expr Expr::terminal(Terminal t) {
    auto n = std::make_shared<Node>();
    n->op = OpCode::Terminal;
    n->term = t;
    return Expr(std::move(n));
}

inline Expr Expr::constant(double v) {
    if (!std::isfinite(v)) throw ConfigError("rule constant must be finite");
    auto n = std::make_shared<Node>();
    n->op = OpCode::Const;
    n->value = v;
    return Expr(std::move(n));
}

inline Expr Expr::call(OpCode op, std::vector<Expr> args) {
    if (op_arity(op) == 0 || static_cast<int>(args.size()) != op_arity(op))
        throw ConfigError("wrong argument count for " + std::string(op_name(op)));
    auto n = std::make_shared<Node>();
    n->op = op;
    for (const auto& a : args) {
        n->depth = std::max(n->depth, a.depth() + 1);
        n->size += a.size();
    }
    n->args = std::move(args);
    return Expr(std::move(n));
}

inline OpCode Expr::op() const { return node_->op; }
inline Terminal Expr::term() const { return node_->term; }
inline double Expr::value() const { return node_->value; }
inline std::span<const Expr> Expr::args() const { return node_->args; }
inline int Expr::depth() const { return node_->depth; }
inline std::size_t Expr::size() const { return node_->size; }

// Convenience builders.
inline Expr var(Terminal t) { return Expr::terminal(t); }
inline Expr lit(double v) { return Expr::constant(v); }
inline Expr add(Expr a, Expr b) { return Expr::call(OpCode::Add, {std::move(a), std::move(b)}); }
inline Expr sub(Expr a, Expr b) { return Expr::call(OpCode::Sub, {std::move(a), std::move(b)}); }
inline Expr mul(Expr a, Expr b) { return Expr::call(OpCode::Mul, {std::move(a), std::move(b)}); }
inline Expr pdiv(Expr a, Expr b) { return Expr::call(OpCode::PDiv, {std::move(a), std::move(b)}); }
inline Expr min(Expr a, Expr b) { return Expr::call(OpCode::Min, {std::move(a), std::move(b)}); }
inline Expr max(Expr a, Expr b) { return Expr::call(OpCode::Max, {std::move(a), std::move(b)}); }
inline Expr neg(Expr a) { return Expr::call(OpCode::Neg, {std::move(a)}); }
inline Expr ifgt(Expr a, Expr b, Expr then, Expr otherwise) {
    return Expr::call(OpCode::IfGt, {std::move(a), std::move(b), std::move(then), std::move(otherwise)});
}

// ---------------------------------------------------------------------------
// Evaluation

inline double clamp_score(double v) {
    if (std::isnan(v)) return 0.0;
    return std::clamp(v, -kScoreClamp, kScoreClamp);
}

inline double protected_div(double a, double b) {
    if (std::abs(b) < kDivGuard) b = b < 0.0 ? -kDivGuard : kDivGuard;
    return clamp_score(a / b);
}

/// Total for finite contexts: never NaN or infinite.
inline double evaluate(const Expr& e, const DispatchContext& ctx) {
    switch (e.op()) {
        case OpCode::Terminal: return clamp_score(ctx.get(e.term()));
        case OpCode::Const: return clamp_score(e.value());
        case OpCode::Neg: return -evaluate(e.args()[0], ctx);
        case OpCode::IfGt: {
            const auto a = e.args();
            return evaluate(a[0], ctx) > evaluate(a[1], ctx) ? evaluate(a[2], ctx) : evaluate(a[3], ctx);
        }
        default: break;
    }
    const double x = evaluate(e.args()[0], ctx);
    const double y = evaluate(e.args()[1], ctx);
    switch (e.op()) {
        case OpCode::Add: return clamp_score(x + y);
        case OpCode::Sub: return clamp_score(x - y);
        case OpCode::Mul: return clamp_score(x * y);
        case OpCode::PDiv: return protected_div(x, y);
        case OpCode::Min: return std::min(x, y);
        case OpCode::Max: return std::max(x, y);
        default: return 0.0;
    }
}

// ---------------------------------------------------------------------------
// Printing and canonical form

inline void pretty_into(const Expr& e, std::string& out) {
    switch (e.op()) {
        case OpCode::Terminal: out += terminal_name(e.term()); return;
        case OpCode::Const: out += format_number(e.value()); return;
        default: break;
    }
    out += op_name(e.op());
    out += '(';
    bool first = true;
    for (const auto& a : e.args()) {
        if (!first) out += ", ";
        first = false;
        pretty_into(a, out);
    }
    out += ')';
}

/// Prefix call syntax, e.g. add(PT, mul(0.1, WKR)).
inline std::string pretty(const Expr& e) {
    std::string out;
    pretty_into(e, out);
    return out;
}

/// Prefix token stream with the operands of commutative operators ordered,
/// so that add(PT, WKR) and add(WKR, PT) canonicalize identically.
inline std::vector<std::string> canonical_tokens(const Expr& e) {
    switch (e.op()) {
        case OpCode::Terminal: return {std::string(terminal_name(e.term()))};
        case OpCode::Const: return {format_number(e.value())};
        default: break;
    }
    std::vector<std::vector<std::string>> parts;
    for (const auto& a : e.args()) parts.push_back(canonical_tokens(a));
    if (op_commutative(e.op())) std::sort(parts.begin(), parts.end());
    std::vector<std::string> out{std::string(op_name(e.op()))};
    for (auto& p : parts) out.insert(out.end(), p.begin(), p.end());
    return out;
}

// ---------------------------------------------------------------------------
// Rules

struct Provenance {
    enum class Kind { Classical, Persona, Crossover, Mutation, Gp, External };
    Kind kind = Kind::External;
    int persona = -1;  // persona index for Kind::Persona

    std::string str() const {
        switch (kind) {
            case Kind::Classical: return "classical";
            case Kind::Persona: return "persona:" + std::to_string(persona);
            case Kind::Crossover: return "crossover";
            case Kind::Mutation: return "mutation";
            case Kind::Gp: return "gp";
            case Kind::External: return "external";
        }
        return "external";
    }

    static Provenance parse(std::string_view s) {
        if (s == "classical") return {Kind::Classical};
        if (s == "crossover") return {Kind::Crossover};
        if (s == "mutation") return {Kind::Mutation};
        if (s == "gp") return {Kind::Gp};
        if (s == "external") return {Kind::External};
        if (s.starts_with("persona:")) {
            Provenance p{Kind::Persona};
            p.persona = std::stoi(std::string(s.substr(8)));
            return p;
        }
        throw ParseError("unknown provenance '" + std::string(s) + "'");
    }

    bool operator==(const Provenance&) const = default;
};

struct Rule {
    std::string id;  // content hash of the canonical form
    Expr job;
    Expr machine;
    Provenance provenance;
    std::string source_text;
};

inline std::string pretty(const Rule& r) { return "job: " + pretty(r.job) + " | machine: " + pretty(r.machine); }

inline std::string canonical_text(const Expr& job, const Expr& machine) {
    std::string s = "job:";
    for (const auto& t : canonical_tokens(job)) s += " " + t;
    s += " | machine:";
    for (const auto& t : canonical_tokens(machine)) s += " " + t;
    return s;
}

inline Rule make_rule(Expr job, Expr machine, Provenance prov = {}, std::string source_text = {}) {
    if (job.depth() > kMaxDepth || machine.depth() > kMaxDepth)
        throw ConfigError("rule exceeds maximum depth " + std::to_string(kMaxDepth));
    Rule r;
    r.id = hex64(fnv1a(canonical_text(job, machine)));
    r.job = std::move(job);
    r.machine = std::move(machine);
    r.provenance = prov;
    r.source_text = source_text.empty() ? pretty(r) : std::move(source_text);
    return r;
}

/// Returns a copy with a different provenance; id and text are unchanged.
inline Rule with_provenance(Rule r, Provenance prov) {
    r.provenance = prov;
    return r;
}

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

class RuleParser {
public:
    explicit RuleParser(std::string_view text) : text_(text) {}

    Rule parse_rule(Provenance prov) {
        std::optional<Expr> job, machine;
        skip_ws();
        if (peek_section()) {
            for (;;) {
                const std::size_t at = pos_;
                const std::string name = identifier();
                skip_ws();
                expect(':');
                Expr e = expression();
                if (name == "job") {
                    if (job) fail(at, "duplicate 'job' section");
                    job = std::move(e);
                } else {
                    if (machine) fail(at, "duplicate 'machine' section");
                    machine = std::move(e);
                }
                skip_ws();
                if (pos_ < text_.size() && (text_[pos_] == '|' || text_[pos_] == ';')) {
                    ++pos_;
                    skip_ws();
                    if (!peek_section()) fail(pos_, "expected 'job:' or 'machine:'");
                    continue;
                }
                break;
            }
        } else {
            job = expression();
        }
        skip_ws();
        if (pos_ != text_.size()) fail(pos_, "unexpected trailing input");
        if (!job) fail(0, "rule has no 'job' section");
        Expr m = machine ? *machine : Expr::terminal(Terminal::PTM);
        check_depth(*job, "job");
        check_depth(m, "machine");
        return make_rule(*job, m, prov, std::string(trim(text_)));
    }

    Expr parse_expression_only() {
        Expr e = expression();
        skip_ws();
        if (pos_ != text_.size()) fail(pos_, "unexpected trailing input");
        check_depth(e, "expression");
        return e;
    }

private:
    static std::string_view trim(std::string_view s) {
        while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
        while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
        return s;
    }

    [[noreturn]] void fail(std::size_t at, const std::string& msg) const {
        throw ParseError("rule syntax error at column " + std::to_string(at + 1) + ": " + msg);
    }

    void check_depth(const Expr& e, const char* which) const {
        if (e.depth() > kMaxDepth)
            throw ParseError(std::string(which) + " expression depth " + std::to_string(e.depth()) +
                             " exceeds maximum " + std::to_string(kMaxDepth));
    }

    void skip_ws() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }

    bool peek_section() {
        std::size_t p = pos_;
        std::size_t start = p;
        while (p < text_.size() && std::isalpha(static_cast<unsigned char>(text_[p]))) ++p;
        const auto word = text_.substr(start, p - start);
        while (p < text_.size() && std::isspace(static_cast<unsigned char>(text_[p]))) ++p;
        return (word == "job" || word == "machine") && p < text_.size() && text_[p] == ':';
    }

    void expect(char c) {
        skip_ws();
        if (pos_ >= text_.size() || text_[pos_] != c) fail(pos_, std::string("expected '") + c + "'");
        ++pos_;
    }

    std::string identifier() {
        skip_ws();
        const std::size_t start = pos_;
        while (pos_ < text_.size() &&
               (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
            ++pos_;
        if (start == pos_) fail(start, "expected identifier");
        return std::string(text_.substr(start, pos_ - start));
    }

    // expr := term (('+' | '-') term)*
    Expr expression() {
        Expr lhs = term();
        for (;;) {
            skip_ws();
            if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) {
                const char op = text_[pos_++];
                Expr rhs = term();
                lhs = op == '+' ? add(lhs, rhs) : sub(lhs, rhs);
            } else {
                return lhs;
            }
        }
    }

    // term := unary (('*' | '/') unary)*
    Expr term() {
        Expr lhs = unary();
        for (;;) {
            skip_ws();
            if (pos_ < text_.size() && (text_[pos_] == '*' || text_[pos_] == '/')) {
                const char op = text_[pos_++];
                Expr rhs = unary();
                lhs = op == '*' ? mul(lhs, rhs) : pdiv(lhs, rhs);
            } else {
                return lhs;
            }
        }
    }

    // unary := '-' unary | primary ; a minus directly on a literal folds into it
    Expr unary() {
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == '-') {
            ++pos_;
            skip_ws();
            if (pos_ < text_.size() && (std::isdigit(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '.'))
                return Expr::constant(-number());
            return neg(unary());
        }
        return primary();
    }

    double number() {
        const std::size_t start = pos_;
        while (pos_ < text_.size() && (std::isdigit(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '.'))
            ++pos_;
        if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
            ++pos_;
            if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) ++pos_;
            while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
        }
        double v = 0.0;
        const char* first = text_.data() + start;
        const char* last = text_.data() + pos_;
        auto [ptr, ec] = std::from_chars(first, last, v);
        if (ec != std::errc{} || ptr != last || !std::isfinite(v)) fail(start, "malformed number");
        return v;
    }

    Expr primary() {
        skip_ws();
        if (pos_ >= text_.size()) fail(pos_, "unexpected end of input");
        const char c = text_[pos_];
        if (c == '(') {
            ++pos_;
            Expr e = expression();
            expect(')');
            return e;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return Expr::constant(number());
        if (std::isalpha(static_cast<unsigned char>(c))) {
            const std::size_t at = pos_;
            const std::string name = identifier();
            skip_ws();
            if (pos_ < text_.size() && text_[pos_] == '(') {
                ++pos_;
                auto op = op_from_name(name);
                if (!op) fail(at, "unknown function '" + name + "'");
                std::vector<Expr> args;
                skip_ws();
                if (pos_ < text_.size() && text_[pos_] != ')') {
                    args.push_back(expression());
                    for (;;) {
                        skip_ws();
                        if (pos_ < text_.size() && text_[pos_] == ',') {
                            ++pos_;
                            args.push_back(expression());
                        } else {
                            break;
                        }
                    }
                }
                expect(')');
                if (static_cast<int>(args.size()) != op_arity(*op))
                    fail(at, "'" + name + "' takes " + std::to_string(op_arity(*op)) + " argument(s), got " +
                                 std::to_string(args.size()));
                return Expr::call(*op, std::move(args));
            }
            auto t = terminal_from_name(name);
            if (!t) fail(at, "unknown terminal '" + name + "'");
            return Expr::terminal(*t);
        }
        fail(pos_, std::string("unexpected character '") + c + "'");
    }

    std::string_view text_;
    std::size_t pos_ = 0;
};

}  // namespace detail

/// Parses "job: <expr> | machine: <expr>" (machine defaults to PTM) or a bare
/// job expression. Throws ParseError with a column position.
inline Rule parse_rule(std::string_view text, Provenance prov = {}) {
    return detail::RuleParser(text).parse_rule(prov);
}

inline Expr parse_expr(std::string_view text) { return detail::RuleParser(text).parse_expression_only(); }

// ---------------------------------------------------------------------------
// Classical dispatching rules

inline const std::vector<std::string>& classical_names() {
    static const std::vector<std::string> names = {"SPT", "LPT", "SRM", "SSO", "LSO"};
    return names;
}

inline Rule classical(std::string_view name) {
    const Expr ptm = var(Terminal::PTM);
    const Provenance prov{Provenance::Kind::Classical};
    if (name == "SPT") return make_rule(var(Terminal::PT), ptm, prov);
    if (name == "LPT") return make_rule(neg(var(Terminal::PT)), ptm, prov);
    if (name == "SRM") return make_rule(var(Terminal::WKR), ptm, prov);
    if (name == "SSO") return make_rule(var(Terminal::SO), ptm, prov);
    if (name == "LSO") return make_rule(neg(var(Terminal::SO)), ptm, prov);
    throw ConfigError("unknown classical rule '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// Edit distance

template <class Seq>
std::size_t levenshtein(const Seq& a, const Seq& b) {
    std::vector<std::size_t> row(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        std::size_t diag = row[0];
        row[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t up = row[j];
            row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
            diag = up;
        }
    }
    return row[b.size()];
}

inline double normalized_distance(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    const std::size_t n = std::max(a.size(), b.size());
    if (n == 0) return 0.0;
    return static_cast<double>(levenshtein(a, b)) / static_cast<double>(n);
}

/// Canonical token streams of both trees.
struct CanonicalRule {
    std::vector<std::string> job;
    std::vector<std::string> machine;
};

inline CanonicalRule canonicalize(const Rule& r) { return {canonical_tokens(r.job), canonical_tokens(r.machine)}; }

/// Larger of the per-tree normalized token Levenshtein distances; in [0, 1],
/// zero iff both trees are canonically identical.
inline double edit_distance(const CanonicalRule& a, const CanonicalRule& b) {
    return std::max(normalized_distance(a.job, b.job), normalized_distance(a.machine, b.machine));
}

inline double edit_distance(const Rule& a, const Rule& b) { return edit_distance(canonicalize(a), canonicalize(b)); }

}  // namespace qdsched
