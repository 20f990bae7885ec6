#pragma once

// End-to-end plumbing shared by the command-line tool and the acceptance
// suite: instance directories, strategy specs, batch benchmarking, result
// tables and the evolution ablation.

#include <filesystem>

#include "qdsched/evolution.hpp"
#include "qdsched/gp_baseline.hpp"
#include "qdsched/online_scheduler.hpp"

namespace qdsched {

struct NamedInstance {
    std::string name;
    Instance instance;
    std::string error;  // load failure kept by tolerant loading
};

/// Every *.json instance file in `dir`, sorted by file name. A tolerant load
/// records unreadable files instead of throwing.
inline std::vector<NamedInstance> load_instance_dir(const std::string& dir, bool tolerant = false) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw ConfigError("not a directory: " + dir);
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw ConfigError("no instance files (*.json) in " + dir);
    std::vector<NamedInstance> out;
    for (const auto& f : files) {
        NamedInstance n{f.stem().string(), {}, {}};
        try {
            n.instance = load_instance(f.string());
        } catch (const ParseError& e) {
            if (!tolerant) throw;
            n.error = e.what();
        }
        out.push_back(std::move(n));
    }
    return out;
}

inline std::vector<NamedInstance> name_instances(const std::vector<Instance>& insts, const std::string& prefix) {
    std::vector<NamedInstance> out;
    for (std::size_t i = 0; i < insts.size(); ++i) {
        char index[16];
        std::snprintf(index, sizeof index, "%03zu", i);
        out.push_back({prefix + (insts[i].bucket.empty() ? "" : insts[i].bucket + "-") + index, insts[i], {}});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Strategies

/// probe | top | random | a classical rule name | fixed:<rule text> | gp
struct StrategySpec {
    std::string label;
    Strategy strategy = Strategy::Probe;
    std::optional<Rule> rule;  // fixed strategies
    bool needs_gp = false;
};

inline StrategySpec parse_strategy(const std::string& token) {
    StrategySpec s;
    s.label = token;
    if (token == "probe") return s;
    if (token == "top") {
        s.strategy = Strategy::Top;
        return s;
    }
    if (token == "random") {
        s.strategy = Strategy::Random;
        return s;
    }
    s.strategy = Strategy::Fixed;
    if (token == "gp") {
        s.needs_gp = true;
        return s;
    }
    if (token.rfind("fixed:", 0) == 0) {
        s.rule = parse_rule(token.substr(6), {Provenance::Kind::External});
        return s;
    }
    const auto& names = classical_names();
    if (std::find(names.begin(), names.end(), token) != names.end()) {
        s.rule = classical(token);
        return s;
    }
    throw ConfigError("unknown strategy '" + token + "' (expected probe, top, random, gp, fixed:<rule> or one of " +
                      [&] {
                          std::string all;
                          for (const auto& n : names) all += (all.empty() ? "" : ", ") + n;
                          return all;
                      }() +
                      ")");
}

inline std::vector<StrategySpec> parse_strategies(const std::string& list) {
    std::vector<StrategySpec> out;
    std::size_t start = 0;
    while (start <= list.size()) {
        const std::size_t comma = list.find(',', start);
        const std::string token = list.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        if (!token.empty()) out.push_back(parse_strategy(token));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    if (out.empty()) throw ConfigError("no strategies given");
    return out;
}

// ---------------------------------------------------------------------------
// Bench

struct BenchOptions {
    std::size_t k = 5;
    std::uint64_t seed = 1;  // random strategy
    unsigned threads = 1;    // across instances
};

struct InstanceResult {
    std::string instance;
    std::string bucket;
    std::string strategy;
    double makespan = 0.0;
    std::size_t decisions = 0;
    double max_latency_ms = 0.0;
    std::string error;  // empty on success
};

/// Runs every strategy on every instance. Failures are recorded per
/// instance instead of aborting the batch.
inline std::vector<InstanceResult> run_bench(const std::vector<NamedInstance>& tests,
                                             const std::vector<StrategySpec>& strategies, const KnowledgeBase* kb,
                                             const EliteArchive* archive, const BenchOptions& opt) {
    static const KnowledgeBase empty_kb;
    std::vector<InstanceResult> results(tests.size() * strategies.size());
    parallel_for(
        results.size(),
        [&](std::size_t idx) {
            const auto& t = tests[idx / strategies.size()];
            const auto& s = strategies[idx % strategies.size()];
            InstanceResult& r = results[idx];
            r.instance = t.name;
            r.bucket = t.instance.bucket.empty() ? "-" : t.instance.bucket;
            r.strategy = s.label;
            try {
                if (!t.error.empty()) throw ParseError(t.error);
                OnlineConfig cfg;
                cfg.strategy = s.strategy;
                cfg.k = opt.k;
                cfg.seed = opt.seed;
                cfg.fixed_rule = s.rule;
                if (s.strategy == Strategy::Fixed && !s.rule) throw ConfigError("strategy " + s.label + " has no rule");
                const auto run = run_online(t.instance, kb ? *kb : empty_kb, archive, cfg);
                r.makespan = run.schedule.makespan;
                r.decisions = run.decisions.size();
                for (const auto& d : run.decisions) r.max_latency_ms = std::max(r.max_latency_ms, d.latency_ms);
            } catch (const std::exception& e) {
                r.error = e.what();
            }
        },
        opt.threads);
    return results;
}

struct BenchRow {
    std::string strategy;
    std::string bucket;  // "all" aggregates every bucket
    std::size_t instances = 0;
    double mean = 0.0;
    double best = 0.0;
};

/// One row per strategy per bucket plus an "all" row per strategy, in
/// strategy order then bucket order.
inline std::vector<BenchRow> summarize(const std::vector<InstanceResult>& results,
                                       const std::vector<StrategySpec>& strategies) {
    std::vector<std::string> buckets;
    for (const auto& r : results)
        if (std::find(buckets.begin(), buckets.end(), r.bucket) == buckets.end()) buckets.push_back(r.bucket);
    std::sort(buckets.begin(), buckets.end());
    buckets.push_back("all");
    std::vector<BenchRow> rows;
    for (const auto& s : strategies)
        for (const auto& b : buckets) {
            BenchRow row{s.label, b, 0, 0.0, kInfinity};
            for (const auto& r : results)
                if (r.strategy == s.label && r.error.empty() && (b == "all" || r.bucket == b)) {
                    ++row.instances;
                    row.mean += r.makespan;
                    row.best = std::min(row.best, r.makespan);
                }
            if (row.instances == 0) continue;
            row.mean /= static_cast<double>(row.instances);
            rows.push_back(row);
        }
    return rows;
}

/// "# key=value" lines echoing an effective configuration.
inline std::string config_header(const nlohmann::json& config) {
    std::string out;
    for (const auto& [key, value] : config.items())
        out += "# " + key + "=" + (value.is_string() ? value.get<std::string>() : value.dump()) + "\n";
    return out;
}

inline std::string rows_to_csv(const std::vector<BenchRow>& rows, const nlohmann::json& config = nlohmann::json::object()) {
    std::string out = config_header(config) + "strategy,bucket,instances,mean_makespan,best_makespan\n";
    for (const auto& r : rows)
        out += r.strategy + "," + r.bucket + "," + std::to_string(r.instances) + "," + format_number(r.mean) + "," +
               format_number(r.best) + "\n";
    return out;
}

/// Per-instance table; timing columns are left out so reruns compare byte for byte.
inline std::string results_to_csv(const std::vector<InstanceResult>& results,
                                  const nlohmann::json& config = nlohmann::json::object()) {
    std::string out = config_header(config) + "instance,bucket,strategy,makespan,decisions,error\n";
    for (const auto& r : results) {
        std::string err = r.error;
        std::replace(err.begin(), err.end(), '"', '\'');
        out += r.instance + "," + r.bucket + "," + r.strategy + "," + (r.error.empty() ? format_number(r.makespan) : "") +
               "," + std::to_string(r.decisions) + ",\"" + err + "\"\n";
    }
    return out;
}

inline std::string rows_to_markdown(const std::vector<BenchRow>& rows) {
    std::string out = "| strategy | bucket | instances | mean makespan | best makespan |\n|---|---|---:|---:|---:|\n";
    for (const auto& r : rows)
        out += "| " + r.strategy + " | " + r.bucket + " | " + std::to_string(r.instances) + " | " +
               format_number(std::round(r.mean * 100.0) / 100.0) + " | " +
               format_number(std::round(r.best * 100.0) / 100.0) + " |\n";
    return out;
}

// ---------------------------------------------------------------------------
// Statistics

/// One-sided exact sign test: P(X >= wins) for X ~ Binomial(wins + losses, 1/2).
/// Ties are discarded before calling.
inline double sign_test_p(std::size_t wins, std::size_t losses) {
    const std::size_t n = wins + losses;
    if (n == 0) return 1.0;
    double p = 0.0;
    for (std::size_t i = wins; i <= n; ++i)
        p += std::exp(std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0) - n * std::log(2.0));
    return std::min(1.0, p);
}

struct PairedComparison {
    std::size_t wins = 0;    // a strictly better (lower)
    std::size_t losses = 0;  // b strictly better
    std::size_t ties = 0;
    double mean_difference = 0.0;  // mean of a - b
    double standard_error = 0.0;
    double p_value = 1.0;  // one-sided sign test for a < b
};

inline PairedComparison compare_paired(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ConfigError("paired comparison needs equal sample sizes");
    PairedComparison c;
    const double n = static_cast<double>(a.size());
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        d[i] = a[i] - b[i];
        if (time_less(a[i], b[i]))
            ++c.wins;
        else if (time_less(b[i], a[i]))
            ++c.losses;
        else
            ++c.ties;
        c.mean_difference += d[i] / n;
    }
    if (a.size() > 1) {
        double var = 0.0;
        for (double x : d) var += (x - c.mean_difference) * (x - c.mean_difference);
        c.standard_error = std::sqrt(var / (n - 1.0) / n);
    }
    c.p_value = sign_test_p(c.wins, c.losses);
    return c;
}

// ---------------------------------------------------------------------------
// Ablation

struct AblationArm {
    std::string name;
    bool personas = true;
    bool feature_space = true;
};

inline const std::vector<AblationArm>& ablation_arms() {
    static const std::vector<AblationArm> arms = {
        {"full", true, true}, {"no-personas", false, true}, {"no-feature-space", true, false}};
    return arms;
}

struct AblationResult {
    std::string arm;
    std::uint64_t seed = 0;
    std::size_t occupied_cells = 0;
    double best_fitness = 0.0;
    std::size_t rules_evaluated = 0;
    std::vector<InstanceResult> bench;  // probe strategy on the test set
    double mean_makespan = 0.0;
};

struct AblationOptions {
    EvolutionConfig evolution;  // seed is overwritten per replicate
    KbOptions kb;
    Rule probe_rule = classical("SPT");
    BenchOptions bench;
};

/// Evolves one archive per arm and seed with identical budgets, builds a
/// knowledge base from the library for each, and benches the probe strategy.
inline std::vector<AblationResult> run_ablation(RuleGenerator& gen, std::span<const std::uint64_t> seeds,
                                                const std::vector<NamedInstance>& library,
                                                const std::vector<NamedInstance>& tests, const AblationOptions& opt) {
    std::vector<Instance> lib;
    std::vector<std::string> labels;
    for (const auto& l : library) {
        lib.push_back(l.instance);
        labels.push_back(l.name);
    }
    const std::vector<StrategySpec> probe = {parse_strategy("probe")};
    std::vector<AblationResult> out;
    for (std::uint64_t seed : seeds)
        for (const auto& arm : ablation_arms()) {
            EvolutionConfig cfg = opt.evolution;
            cfg.seed = seed;
            cfg.enable_personas = arm.personas;
            cfg.enable_feature_space = arm.feature_space;
            const auto calibration = calibration_set(cfg.calibration_seed);
            const auto evo = run_evolution(cfg, gen, calibration);
            AblationResult r;
            r.arm = arm.name;
            r.seed = seed;
            r.occupied_cells = evo.archive.occupied_cells();
            r.best_fitness = evo.archive.empty() ? kInfinity : evo.archive.best()->fitness;
            r.rules_evaluated = evo.rules_evaluated;
            const auto kb = build_kb(lib, labels, evo.archive, opt.probe_rule, opt.kb);
            r.bench = run_bench(tests, probe, &kb, &evo.archive, opt.bench);
            std::size_t n = 0;
            for (const auto& b : r.bench)
                if (b.error.empty()) {
                    r.mean_makespan += b.makespan;
                    ++n;
                }
            r.mean_makespan = n ? r.mean_makespan / static_cast<double>(n) : kInfinity;
            out.push_back(std::move(r));
        }
    return out;
}

inline std::string ablation_to_csv(const std::vector<AblationResult>& results,
                                   const nlohmann::json& config = nlohmann::json::object()) {
    std::string out =
        config_header(config) + "arm,seed,occupied_cells,best_fitness,rules_evaluated,bucket,instances,mean_makespan\n";
    for (const auto& r : results) {
        const auto rows = summarize(r.bench, {parse_strategy("probe")});
        for (const auto& row : rows)
            out += r.arm + "," + std::to_string(r.seed) + "," + std::to_string(r.occupied_cells) + "," +
                   format_number(r.best_fitness) + "," + std::to_string(r.rules_evaluated) + "," + row.bucket + "," +
                   std::to_string(row.instances) + "," + format_number(row.mean) + "\n";
    }
    return out;
}

}  // namespace qdsched
