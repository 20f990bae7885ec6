#pragma once

// Tree-based genetic programming over the rule language: a job tree and a
// machine tree per individual, generational replacement with elitism.

#include <map>
#include <numeric>

#include <nlohmann/json.hpp>

#include "qdsched/parallel.hpp"
#include "qdsched/sim_engine.hpp"

namespace qdsched {

struct GpConfig {
    std::uint64_t seed = 1;
    int population = 20;
    int generations = 50;
    double crossover_prob = 0.8;  // per tree pair
    double mutation_prob = 0.15;  // per offspring
    int elitism = 1;
    int init_min_depth = 2;
    int init_max_depth = 6;
    int max_depth = 8;
    int tournament = 3;
    unsigned threads = 1;

    void validate() const {
        if (population < 2) throw ConfigError("gp population must be >= 2");
        if (generations < 0) throw ConfigError("gp generations must be >= 0");
        if (!(crossover_prob >= 0.0 && crossover_prob <= 1.0)) throw ConfigError("gp crossover_prob must be in [0, 1]");
        if (!(mutation_prob >= 0.0 && mutation_prob <= 1.0)) throw ConfigError("gp mutation_prob must be in [0, 1]");
        if (elitism < 0 || elitism >= population) throw ConfigError("gp elitism must be in [0, population)");
        if (init_min_depth < 0 || init_min_depth > init_max_depth) throw ConfigError("gp initial depth range is empty");
        if (init_max_depth > max_depth) throw ConfigError("gp init_max_depth exceeds max_depth");
        if (max_depth > kMaxDepth) throw ConfigError("gp max_depth exceeds the language limit");
        if (tournament < 1) throw ConfigError("gp tournament must be >= 1");
    }
};

inline nlohmann::json gp_config_to_json(const GpConfig& c) {
    return {{"seed", c.seed},
            {"population", c.population},
            {"generations", c.generations},
            {"crossover_prob", c.crossover_prob},
            {"mutation_prob", c.mutation_prob},
            {"elitism", c.elitism},
            {"init_min_depth", c.init_min_depth},
            {"init_max_depth", c.init_max_depth},
            {"max_depth", c.max_depth},
            {"tournament", c.tournament}};
}

inline GpConfig gp_config_from_json(const nlohmann::json& j, GpConfig base = {}, const std::string& origin = "gp") {
    if (!j.is_object()) throw ParseError(origin + ": expected an object");
    const auto known = gp_config_to_json(base);
    for (const auto& [key, value] : j.items())
        if (!known.contains(key)) throw ParseError(origin + ": unknown key '" + key + "'");
    auto get = [&](const char* key, auto& field) {
        if (!j.contains(key)) return;
        try {
            field = j.at(key).get<std::decay_t<decltype(field)>>();
        } catch (const nlohmann::json::exception&) {
            throw ParseError(origin + "." + key + ": wrong type");
        }
    };
    get("seed", base.seed);
    get("population", base.population);
    get("generations", base.generations);
    get("crossover_prob", base.crossover_prob);
    get("mutation_prob", base.mutation_prob);
    get("elitism", base.elitism);
    get("init_min_depth", base.init_min_depth);
    get("init_max_depth", base.init_max_depth);
    get("max_depth", base.max_depth);
    get("tournament", base.tournament);
    return base;
}

inline constexpr std::array<Terminal, 4> kGpJobTerminals = {Terminal::PT, Terminal::WKR, Terminal::RM, Terminal::SO};
inline constexpr std::array<Terminal, 2> kGpMachineTerminals = {Terminal::PTM, Terminal::UR};
inline constexpr std::array<OpCode, 6> kGpFunctions = {OpCode::Add, OpCode::Sub, OpCode::Mul,
                                                       OpCode::PDiv, OpCode::Min, OpCode::Max};

struct GpGeneration {
    int generation = 0;
    double best_fitness = 0.0;
    double mean_fitness = 0.0;
    std::string best_rule;
};

struct GpResult {
    Rule best;
    double best_fitness = kInfinity;
    std::vector<GpGeneration> history;
    std::size_t evaluations = 0;  // distinct rules simulated
    int deepest_tree = 0;         // over every individual ever created
    std::vector<Rule> final_population;
};

/// Mean static makespan; infinity when the rule cannot finish an instance.
inline double gp_fitness(const Rule& rule, std::span<const Instance> train) {
    double total = 0.0;
    try {
        for (const auto& inst : train) total += simulate_static(inst, rule).makespan;
    } catch (const SimulationError&) {
        return kInfinity;
    }
    return total / static_cast<double>(train.size());
}

namespace detail {

template <std::size_t N>
Expr gp_tree(Rng& rng, const std::array<Terminal, N>& terms, int depth, bool full) {
    const bool leaf = depth == 0 || (!full && rng.bernoulli(static_cast<double>(N) / (N + kGpFunctions.size())));
    if (leaf) return var(terms[rng.index(N)]);
    const OpCode op = kGpFunctions[rng.index(kGpFunctions.size())];
    return Expr::call(op, {gp_tree(rng, terms, depth - 1, full), gp_tree(rng, terms, depth - 1, full)});
}

inline std::size_t node_count(const Expr& e) {
    std::size_t n = 1;
    for (const auto& a : e.args()) n += node_count(a);
    return n;
}

inline const Expr& node_at(const Expr& e, std::size_t& n) {
    if (n == 0) return e;
    --n;
    for (const auto& a : e.args()) {
        const std::size_t size = node_count(a);
        if (n < size) return node_at(a, n);
        n -= size;
    }
    throw std::logic_error("node index out of range");
}

inline Expr replace_at(const Expr& e, std::size_t n, const Expr& with) {
    if (n == 0) return with;
    --n;
    std::vector<Expr> args(e.args().begin(), e.args().end());
    for (auto& a : args) {
        const std::size_t size = node_count(a);
        if (n < size) {
            a = replace_at(a, n, with);
            break;
        }
        n -= size;
    }
    return Expr::call(e.op(), std::move(args));
}

class GpRun {
public:
    GpRun(std::span<const Instance> train, const GpConfig& cfg)
        : train_(train), cfg_(cfg), rng_(derive_seed(cfg.seed, "gp")) {}

    GpResult run() {
        std::vector<Rule> pop = initial_population();
        std::vector<double> fit = evaluate(pop);
        record(0, pop, fit);
        for (int g = 1; g <= cfg_.generations; ++g) {
            std::vector<Rule> next;
            for (std::size_t i : ranking(fit, static_cast<std::size_t>(cfg_.elitism))) next.push_back(pop[i]);
            while (next.size() < pop.size()) {
                const Rule& a = pop[tournament(fit)];
                const Rule& b = pop[tournament(fit)];
                auto [job_a, job_b] = maybe_cross(a.job, b.job);
                auto [mach_a, mach_b] = maybe_cross(a.machine, b.machine);
                next.push_back(offspring(job_a, mach_a));
                if (next.size() < pop.size()) next.push_back(offspring(job_b, mach_b));
            }
            pop = std::move(next);
            fit = evaluate(pop);
            record(g, pop, fit);
        }
        result_.evaluations = cache_.size();
        result_.final_population = std::move(pop);
        return std::move(result_);
    }

private:
    std::vector<Rule> initial_population() {
        // Ramped half-and-half over the initial depth range.
        std::vector<Rule> pop;
        const int span = cfg_.init_max_depth - cfg_.init_min_depth + 1;
        for (int i = 0; i < cfg_.population; ++i) {
            const int depth = cfg_.init_min_depth + i % span;
            const bool full = (i / span) % 2 == 0;
            pop.push_back(make_rule(gp_tree(rng_, kGpJobTerminals, depth, full),
                                    gp_tree(rng_, kGpMachineTerminals, depth, full), {Provenance::Kind::Gp}));
        }
        return pop;
    }

    std::vector<double> evaluate(const std::vector<Rule>& pop) {
        for (const auto& r : pop) result_.deepest_tree = std::max({result_.deepest_tree, r.job.depth(), r.machine.depth()});
        std::vector<std::size_t> missing;
        for (std::size_t i = 0; i < pop.size(); ++i)
            if (!cache_.count(pop[i].id) &&
                std::none_of(missing.begin(), missing.end(), [&](std::size_t j) { return pop[j].id == pop[i].id; }))
                missing.push_back(i);
        std::vector<double> fresh(missing.size());
        parallel_for(missing.size(), [&](std::size_t k) { fresh[k] = gp_fitness(pop[missing[k]], train_); },
                     cfg_.threads);
        for (std::size_t k = 0; k < missing.size(); ++k) cache_[pop[missing[k]].id] = fresh[k];
        std::vector<double> fit;
        for (const auto& r : pop) fit.push_back(cache_.at(r.id));
        return fit;
    }

    static std::vector<std::size_t> ranking(const std::vector<double>& fit, std::size_t n) {
        std::vector<std::size_t> idx(fit.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return fit[a] < fit[b]; });
        idx.resize(std::min(n, idx.size()));
        return idx;
    }

    std::size_t tournament(const std::vector<double>& fit) {
        std::size_t best = rng_.index(fit.size());
        for (int i = 1; i < cfg_.tournament; ++i) {
            const std::size_t c = rng_.index(fit.size());
            if (fit[c] < fit[best]) best = c;
        }
        return best;
    }

    // Subtree crossover; a child that would exceed the depth cap keeps its parent tree.
    std::pair<Expr, Expr> maybe_cross(const Expr& a, const Expr& b) {
        if (!rng_.bernoulli(cfg_.crossover_prob)) return {a, b};
        std::size_t ia = rng_.index(node_count(a)), ib = rng_.index(node_count(b));
        std::size_t ta = ia, tb = ib;
        const Expr sub_a = node_at(a, ta);
        const Expr sub_b = node_at(b, tb);
        Expr ca = replace_at(a, ia, sub_b);
        Expr cb = replace_at(b, ib, sub_a);
        return {ca.depth() <= cfg_.max_depth ? ca : a, cb.depth() <= cfg_.max_depth ? cb : b};
    }

    Rule offspring(Expr job, Expr machine) {
        if (rng_.bernoulli(cfg_.mutation_prob)) {
            if (rng_.bernoulli(0.5))
                job = mutate(job, kGpJobTerminals);
            else
                machine = mutate(machine, kGpMachineTerminals);
        }
        return make_rule(std::move(job), std::move(machine), {Provenance::Kind::Gp});
    }

    // Subtree mutation: a random node is replaced by a freshly grown tree so
    // that the result stays within the depth cap.
    template <std::size_t N>
    Expr mutate(const Expr& tree, const std::array<Terminal, N>& terms) {
        const std::size_t at = rng_.index(node_count(tree));
        const int depth_at = depth_of_node(tree, at);
        const int room = std::max(0, std::min(cfg_.init_max_depth, cfg_.max_depth - depth_at));
        const Expr grown = gp_tree(rng_, terms, static_cast<int>(rng_.index(static_cast<std::size_t>(room) + 1)), false);
        return replace_at(tree, at, grown);
    }

    static int depth_of_node(const Expr& e, std::size_t n, int level = 0) {
        if (n == 0) return level;
        --n;
        for (const auto& a : e.args()) {
            const std::size_t size = node_count(a);
            if (n < size) return depth_of_node(a, n, level + 1);
            n -= size;
        }
        throw std::logic_error("node index out of range");
    }

    void record(int generation, const std::vector<Rule>& pop, const std::vector<double>& fit) {
        const std::size_t best = ranking(fit, 1).front();
        if (fit[best] < result_.best_fitness || generation == 0) {
            result_.best = pop[best];
            result_.best_fitness = fit[best];
        }
        GpGeneration g;
        g.generation = generation;
        g.best_fitness = result_.best_fitness;
        double finite = 0.0;
        std::size_t n = 0;
        for (double f : fit)
            if (std::isfinite(f)) {
                finite += f;
                ++n;
            }
        g.mean_fitness = n ? finite / static_cast<double>(n) : kInfinity;
        g.best_rule = result_.best.source_text;
        result_.history.push_back(std::move(g));
    }

    std::span<const Instance> train_;
    const GpConfig& cfg_;
    Rng rng_;
    std::map<std::string, double> cache_;
    GpResult result_;
};

}  // namespace detail

inline GpResult run_gp(std::span<const Instance> train, const GpConfig& cfg = {}) {
    cfg.validate();
    if (train.empty()) throw ConfigError("gp training set is empty");
    return detail::GpRun(train, cfg).run();
}

inline std::string gp_history_to_csv(const GpResult& r) {
    std::string out = "generation,best_fitness,mean_fitness,best_rule\n";
    for (const auto& g : r.history)
        out += std::to_string(g.generation) + "," + format_number(g.best_fitness) + "," +
               format_number(g.mean_fitness) + ",\"" + g.best_rule + "\"\n";
    return out;
}

}  // namespace qdsched
