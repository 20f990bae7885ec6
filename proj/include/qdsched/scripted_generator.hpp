#pragma once

// Deterministic rule synthesizer. Each request is answered from an RNG
// seeded by the request nonce alone, so the generator holds no mutable state
// and concurrent calls are safe.
//
// Seeds: every persona draws from its own family of expression templates;
// the generic prompt draws from a single narrow family.
// Crossover: subtree splice of parent B into parent A, a weighted blend, or
// a regime switch between the two.
// Elitist mutation: one small edit (constant, terminal, operator or a
// single grown term), biased towards terminals named in the insights.
// Contrastive mutation: reverse the job preference or shift its look-ahead
// horizon, and draw a machine policy opposing the profile's load skewness.

#include "qdsched/generator.hpp"

namespace qdsched {

struct ScriptedOptions {
    double garbage_rate = 0.0;  // fraction of replies that are unparseable
};

class ScriptedGenerator : public RuleGenerator {
public:
    explicit ScriptedGenerator(ScriptedOptions opt = {}) : opt_(opt) {}

    std::string name() const override { return "scripted"; }
    bool deterministic() const override { return true; }

    std::string generate(const GeneratorRequest& req) override {
        Rng rng(derive_seed(req.nonce, "scripted"));
        if (opt_.garbage_rate > 0.0 && rng.bernoulli(opt_.garbage_rate))
            return "I would suggest the following.\n```dsl\njob: add(PT,\n```\n";
        Rule r;
        switch (req.kind) {
            case RequestKind::Seed: r = seed(rng, req.persona, req.temperature); break;
            case RequestKind::Crossover: r = crossover(rng, req.parents.at(0), req.parents.at(1)); break;
            case RequestKind::ElitistMutation: r = elitist(rng, req.parents.at(0), req.insights); break;
            case RequestKind::ContrastiveMutation: r = contrastive(rng, req.parents.at(0), req.profile); break;
        }
        return "```dsl\n" + pretty(r) + "\n```\n";
    }

    // -----------------------------------------------------------------------
    // Operators, public for direct testing

    static Rule seed(Rng& rng, int persona, double temperature) {
        Expr job = var(Terminal::PT), machine = var(Terminal::PTM);
        switch (persona) {
            case 0: greedy(rng, temperature, job, machine); break;
            case 1: balancer(rng, temperature, job, machine); break;
            case 2: planner(rng, temperature, job, machine); break;
            case 3: chaser(rng, temperature, job, machine); break;
            case 4: contrarian(rng, temperature, job, machine); break;
            case 5: synthesizer(rng, temperature, job, machine); break;
            case 6: hybrid(rng, temperature, job, machine); break;
            default: generic(rng, temperature, job, machine); break;
        }
        return make_rule(job, machine);
    }

    static Rule crossover(Rng& rng, const Rule& a, const Rule& b) {
        for (int attempt = 0; attempt < 8; ++attempt) {
            Expr job = a.job;
            const double mode = rng.uniform();
            if (mode < 0.5) {
                job = splice(rng, a.job, b.job);
            } else if (mode < 0.8) {
                job = add(a.job, mul(lit(coef(rng, 0.2, 1.0)), b.job));
            } else {
                job = ifgt(var(Terminal::DEN), lit(coef(rng, 1.0, 3.0)), a.job, b.job);
            }
            Expr machine = rng.bernoulli(0.5) ? a.machine : b.machine;
            if (rng.bernoulli(0.25)) machine = splice(rng, a.machine, b.machine);
            if (job.depth() > kMaxDepth || machine.depth() > kMaxDepth) continue;
            Rule child = make_rule(job, machine);
            if (child.id != a.id && child.id != b.id) return child;
        }
        // Grafting B's whole job expression under A's root always differs from A.
        Expr graft = add(a.job, mul(lit(0.5), b.job));
        return make_rule(graft.depth() <= kMaxDepth ? graft : b.job, a.machine);
    }

    // Keeps the first candidate within kElitistReach of the parent, else the
    // closest one seen.
    static Rule elitist(Rng& rng, const Rule& best, const std::string& insights) {
        std::vector<Terminal> hinted;
        for (Terminal t : kAllTerminals)
            if (insights.find(std::string(terminal_name(t))) != std::string::npos) hinted.push_back(t);
        std::optional<Rule> closest;
        double closest_distance = kInfinity;
        for (int attempt = 0; attempt < 8; ++attempt) {
            const bool on_job = rng.bernoulli(0.8);
            const Expr& tree = on_job ? best.job : best.machine;
            const Expr mutated = point_mutation(rng, tree, hinted);
            if (mutated.depth() > kMaxDepth) continue;
            Rule child = on_job ? make_rule(mutated, best.machine) : make_rule(best.job, mutated);
            if (child.id == best.id) continue;
            const double d = edit_distance(child, best);
            if (d <= kElitistReach) return child;
            if (d < closest_distance) {
                closest_distance = d;
                closest = std::move(child);
            }
        }
        if (closest) return *closest;
        return make_rule(add(best.job, mul(lit(0.1), var(Terminal::SO))), best.machine);
    }

    static constexpr double kElitistReach = 0.3;

    // Either reverses the parent's job preference or changes how far ahead it
    // looks; the machine policy opposes the profile's load skewness.
    static Rule contrastive(Rng& rng, const Rule& parent, const std::optional<Descriptor>& profile) {
        Expr job = rng.bernoulli(0.5) ? reverse_preference(parent.job) : shift_horizon(rng, parent.job);
        // Low code novelty calls for a structurally new term.
        if (profile && profile->div < 0.34 && job.depth() < kMaxDepth - 4)
            job = add(job, mul(lit(coef(rng, 0.1, 1.0)), random_tree(rng, 2)));
        const bool skewed = profile ? profile->skew >= 0.5 : rng.bernoulli(0.5);
        for (int attempt = 0; attempt < 8; ++attempt) {
            Expr machine = skewed ? balancing_machine(rng) : greedy_machine(rng);
            if (canonical_tokens(machine) != canonical_tokens(parent.machine)) return make_rule(job, machine);
        }
        return make_rule(job, skewed ? add(var(Terminal::PTM), var(Terminal::PT)) : mul(var(Terminal::PT), var(Terminal::QL)));
    }

    static Expr reverse_preference(const Expr& job) {
        if (job.op() == OpCode::Neg) return job.args()[0];
        if (job.depth() >= kMaxDepth) return neg(var(Terminal::PT));
        return neg(job);
    }

    // A far-sighted expression loses its look-ahead terminals; a myopic one
    // gains one.
    static Expr shift_horizon(Rng& rng, const Expr& job) {
        if (uses_look_ahead(job)) {
            Expr myopic = strip_look_ahead(job);
            if (canonical_tokens(myopic) != canonical_tokens(job)) return myopic;
        }
        const Expr term = scaled(rng, 0.2, 1.5, pick(rng, {Terminal::SO, Terminal::WKR, Terminal::RM}));
        if (job.depth() >= kMaxDepth - 1) return add(var(Terminal::PT), term);
        return add(job, term);
    }

private:
    static double coef(Rng& rng, double lo, double hi) {
        return std::round(rng.uniform(lo, hi) * 100.0) / 100.0;
    }

    static Expr scaled(Rng& rng, double lo, double hi, Terminal t) { return mul(lit(coef(rng, lo, hi)), var(t)); }

    static Expr balancing_machine(Rng& rng) {
        switch (rng.index(4)) {
            case 0: return var(Terminal::PTM);
            case 1: return add(var(Terminal::PTM), scaled(rng, 0.2, 2.0, Terminal::PT));
            case 2: return add(var(Terminal::UR), scaled(rng, 0.01, 0.05, Terminal::PT));
            default: return add(var(Terminal::PTM), scaled(rng, 1.0, 10.0, Terminal::QL));
        }
    }

    static Expr greedy_machine(Rng& rng) {
        switch (rng.index(3)) {
            case 0: return var(Terminal::PT);
            case 1: return add(var(Terminal::PT), scaled(rng, 0.5, 3.0, Terminal::QL));
            default: return add(var(Terminal::PT), scaled(rng, 0.01, 0.2, Terminal::PTM));
        }
    }

    static Terminal pick(Rng& rng, std::initializer_list<Terminal> ts) {
        return *(ts.begin() + static_cast<std::ptrdiff_t>(rng.index(ts.size())));
    }

    // Optional extra term whose probability grows with temperature.
    static Expr jitter(Rng& rng, double temperature, Expr e) {
        if (!rng.bernoulli(std::clamp(0.25 * temperature, 0.0, 0.9))) return e;
        const Terminal t = kAllTerminals[rng.index(8)];  // NOW excluded
        return add(std::move(e), scaled(rng, -0.3 * temperature, 0.3 * temperature, t));
    }

    static void greedy(Rng& rng, double temp, Expr& job, Expr& machine) {
        switch (rng.index(4)) {
            case 0: job = var(Terminal::PT); break;
            case 1: job = add(var(Terminal::PT), scaled(rng, 0.05, 0.5, Terminal::SO)); break;
            case 2: job = min(var(Terminal::PT), scaled(rng, 0.5, 1.5, Terminal::SO)); break;
            default: job = mul(var(Terminal::PT), add(lit(1), scaled(rng, 0.01, 0.2, Terminal::RM))); break;
        }
        machine = rng.bernoulli(0.7) ? var(Terminal::PT) : add(var(Terminal::PT), scaled(rng, 0.05, 0.3, Terminal::PTM));
        job = jitter(rng, temp, job);
    }

    static void balancer(Rng& rng, double temp, Expr& job, Expr& machine) {
        switch (rng.index(3)) {
            case 0: job = add(var(Terminal::PT), scaled(rng, 0.05, 0.5, Terminal::PTM)); break;
            case 1: job = sub(var(Terminal::PT), scaled(rng, 0.5, 3.0, Terminal::QL)); break;
            default: job = add(var(Terminal::PT), scaled(rng, 5.0, 30.0, Terminal::UR)); break;
        }
        switch (rng.index(4)) {
            case 0: machine = var(Terminal::PTM); break;
            case 1: machine = add(var(Terminal::PTM), scaled(rng, 0.5, 2.0, Terminal::PT)); break;
            case 2: machine = add(var(Terminal::UR), scaled(rng, 0.01, 0.05, Terminal::PT)); break;
            default: machine = add(var(Terminal::PTM), scaled(rng, 1.0, 10.0, Terminal::QL)); break;
        }
        job = jitter(rng, temp, job);
    }

    static void planner(Rng& rng, double temp, Expr& job, Expr& machine) {
        switch (rng.index(4)) {
            case 0: job = add(var(Terminal::PT), scaled(rng, 0.3, 1.0, Terminal::SO)); break;
            case 1: job = pdiv(var(Terminal::PT), var(Terminal::WKR)); break;
            case 2: job = sub(var(Terminal::PT), scaled(rng, 0.1, 0.6, Terminal::WKR)); break;
            default: job = add(var(Terminal::PT), pdiv(var(Terminal::SO), var(Terminal::RM))); break;
        }
        machine = add(var(Terminal::PT), scaled(rng, 0.2, 1.0, Terminal::PTM));
        job = jitter(rng, temp, job);
    }

    static void chaser(Rng& rng, double temp, Expr& job, Expr& machine) {
        switch (rng.index(4)) {
            case 0: job = neg(var(Terminal::WKR)); break;
            case 1: job = neg(var(Terminal::RM)); break;
            case 2: job = sub(var(Terminal::PT), scaled(rng, 0.8, 2.0, Terminal::WKR)); break;
            default: job = pdiv(var(Terminal::PT), var(Terminal::RM)); break;
        }
        machine = rng.bernoulli(0.5) ? var(Terminal::PT) : var(Terminal::PTM);
        job = jitter(rng, temp, job);
    }

    static void contrarian(Rng& rng, double temp, Expr& job, Expr& machine) {
        switch (rng.index(3)) {
            case 0: job = neg(var(Terminal::PT)); break;
            case 1: job = neg(add(var(Terminal::PT), scaled(rng, 0.2, 1.0, Terminal::SO))); break;
            default: job = neg(var(Terminal::SO)); break;
        }
        machine = rng.bernoulli(0.5) ? var(Terminal::PTM) : neg(var(Terminal::QL));
        job = jitter(rng, temp, job);
    }

    static Expr random_tree(Rng& rng, int depth) {
        static constexpr Terminal terms[] = {Terminal::PT, Terminal::WKR, Terminal::RM, Terminal::SO,
                                             Terminal::PTM, Terminal::UR, Terminal::QL, Terminal::DEN};
        if (depth <= 0 || rng.bernoulli(0.2)) {
            if (rng.bernoulli(0.15)) return lit(coef(rng, 0.1, 5.0));
            return var(terms[rng.index(std::size(terms))]);
        }
        static constexpr OpCode ops[] = {OpCode::Add, OpCode::Sub, OpCode::Mul, OpCode::PDiv, OpCode::Min, OpCode::Max};
        return Expr::call(ops[rng.index(std::size(ops))], {random_tree(rng, depth - 1), random_tree(rng, depth - 1)});
    }

    static void synthesizer(Rng& rng, double temp, Expr& job, Expr& machine) {
        job = add(var(Terminal::PT), mul(lit(coef(rng, 0.1, 1.0)), random_tree(rng, 2 + static_cast<int>(rng.index(2)))));
        machine = rng.bernoulli(0.5) ? var(Terminal::PTM)
                                     : add(var(Terminal::PT), mul(lit(coef(rng, 0.1, 1.0)), random_tree(rng, 2)));
        job = jitter(rng, temp, job);
    }

    static void hybrid(Rng& rng, double temp, Expr& job, Expr& machine) {
        Expr calm, busy, m_unused;
        greedy(rng, 0.0, calm, m_unused);
        planner(rng, 0.0, busy, m_unused);
        const Terminal regime = pick(rng, {Terminal::DEN, Terminal::QL, Terminal::RM});
        job = ifgt(var(regime), lit(coef(rng, 1.0, 4.0)), busy, calm);
        machine = ifgt(var(Terminal::DEN), lit(coef(rng, 1.0, 4.0)), var(Terminal::PTM), var(Terminal::PT));
        job = jitter(rng, temp, job);
    }

    static void generic(Rng& rng, double temp, Expr& job, Expr& machine) {
        job = add(var(Terminal::PT), scaled(rng, 0.0, 0.3 * std::max(temp, 0.1), pick(rng, {Terminal::WKR, Terminal::SO})));
        machine = var(Terminal::PTM);
    }

    // Subtree helpers

    static bool is_look_ahead(Terminal t) { return t == Terminal::SO || t == Terminal::WKR || t == Terminal::RM; }

    static bool uses_look_ahead(const Expr& e) {
        if (e.op() == OpCode::Terminal) return is_look_ahead(e.term());
        for (const auto& a : e.args())
            if (uses_look_ahead(a)) return true;
        return false;
    }

    static Expr strip_look_ahead(const Expr& e) {
        if (e.op() == OpCode::Terminal) return is_look_ahead(e.term()) ? lit(0.0) : e;
        if (e.args().empty()) return e;
        std::vector<Expr> args;
        for (const auto& a : e.args()) args.push_back(strip_look_ahead(a));
        return Expr::call(e.op(), std::move(args));
    }

    static void collect(const Expr& e, std::vector<Expr>& out) {
        out.push_back(e);
        for (const auto& a : e.args()) collect(a, out);
    }

    static Expr replace_nth(const Expr& e, std::size_t& n, const Expr& with) {
        if (n == 0) {
            n = SIZE_MAX;
            return with;
        }
        --n;
        if (e.args().empty()) return e;
        std::vector<Expr> args;
        for (const auto& a : e.args()) args.push_back(n == SIZE_MAX ? a : replace_nth(a, n, with));
        return Expr::call(e.op(), std::move(args));
    }

    static Expr splice(Rng& rng, const Expr& a, const Expr& b) {
        std::vector<Expr> nodes_a, nodes_b;
        collect(a, nodes_a);
        collect(b, nodes_b);
        std::size_t at = rng.index(nodes_a.size());
        const Expr& donor = nodes_b[rng.index(nodes_b.size())];
        return replace_nth(a, at, donor);
    }

    static Expr point_mutation(Rng& rng, const Expr& tree, const std::vector<Terminal>& hinted) {
        std::vector<Expr> nodes;
        collect(tree, nodes);
        std::size_t at = rng.index(nodes.size());
        const Expr& node = nodes[at];
        Expr repl = node;
        if (node.op() == OpCode::Const) {
            repl = lit(std::round(node.value() * rng.uniform(0.8, 1.25) * 1000.0) / 1000.0);
        } else if (node.op() == OpCode::Terminal) {
            const double r = rng.uniform();
            if (r < 0.5) {
                const Terminal t = !hinted.empty() && rng.bernoulli(0.5) ? hinted[rng.index(hinted.size())]
                                                                         : kAllTerminals[rng.index(8)];
                repl = var(t);
            } else {
                repl = add(node, mul(lit(coef(rng, 0.05, 0.3)), var(kAllTerminals[rng.index(8)])));
            }
        } else if (op_arity(node.op()) == 2) {
            static constexpr OpCode binary[] = {OpCode::Add, OpCode::Sub, OpCode::Mul,
                                                OpCode::PDiv, OpCode::Min, OpCode::Max};
            std::vector<Expr> args(node.args().begin(), node.args().end());
            repl = Expr::call(binary[rng.index(std::size(binary))], std::move(args));
        } else {
            repl = add(node, lit(coef(rng, 0.1, 2.0)));
        }
        return replace_nth(tree, at, repl);
    }

    ScriptedOptions opt_;
};

}  // namespace qdsched
