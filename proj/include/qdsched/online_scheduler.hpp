#pragma once

// Event-driven rule switching. At t=0 and at every disruption the live
// state is scored by look-ahead simulation of each candidate rule and the
// best one dispatches until the next disruption.

#include <chrono>
#include <optional>

#include "qdsched/probe.hpp"

namespace qdsched {

struct Retrieved {
    std::size_t index = 0;
    double distance = 0.0;
};

/// Variance-weighted Euclidean distance between normalized fingerprints.
inline double weighted_distance(const FeatureVector& w, const FeatureVector& a, const FeatureVector& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < kFingerprintSize; ++i) {
        const double d = w[i] * (a[i] - b[i]);
        acc += d * d;
    }
    return std::sqrt(acc);
}

/// The k nearest cases, ascending by distance, ties by case index. When k
/// exceeds the case count every case is returned and `warning` is set.
inline std::vector<Retrieved> retrieve(const KnowledgeBase& kb, const Fingerprint& query, std::size_t k,
                                       std::string* warning = nullptr) {
    if (k == 0) throw ConfigError("retrieve: k must be at least 1");
    if (k > kb.cases.size()) {
        if (warning)
            *warning = "k=" + std::to_string(k) + " exceeds the " + std::to_string(kb.cases.size()) +
                       " stored cases; returning all";
        k = kb.cases.size();
    }
    const FeatureVector q = kb.normalize(query);
    std::vector<Retrieved> all(kb.cases.size());
    for (std::size_t i = 0; i < kb.cases.size(); ++i) all[i] = {i, weighted_distance(kb.weights, q, kb.cases[i].normalized)};
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(),
                      [](const Retrieved& a, const Retrieved& b) {
                          return a.distance != b.distance ? a.distance < b.distance : a.index < b.index;
                      });
    all.resize(k);
    return all;
}

/// Deduplicated union of the recommended rule ids, in order of first appearance.
inline std::vector<std::string> aggregate_candidates(const KnowledgeBase& kb, std::span<const Retrieved> cases) {
    std::vector<std::string> out;
    for (const auto& c : cases)
        for (const auto& id : kb.cases.at(c.index).rules)
            if (std::find(out.begin(), out.end(), id) == out.end()) out.push_back(id);
    return out;
}

struct CandidateScore {
    std::string id;
    Time makespan = 0.0;
};

struct Selection {
    Rule rule;
    std::vector<CandidateScore> table;  // ascending by rule id
    bool fallback = false;
};

/// Look-ahead every candidate from the snapshot; the minimum makespan wins,
/// ties by rule id. An empty candidate set falls back to SPT.
inline Selection select_rule(const Snapshot& snap, std::span<const Rule> candidates, unsigned threads = 1) {
    Selection sel;
    if (candidates.empty()) {
        sel.rule = classical("SPT");
        sel.fallback = true;
        sel.table.push_back({sel.rule.id, look_ahead(snap, sel.rule)});
        return sel;
    }
    std::vector<const Rule*> sorted;
    for (const auto& r : candidates) sorted.push_back(&r);
    std::sort(sorted.begin(), sorted.end(), [](const Rule* a, const Rule* b) { return a->id < b->id; });
    sorted.erase(std::unique(sorted.begin(), sorted.end(), [](const Rule* a, const Rule* b) { return a->id == b->id; }),
                 sorted.end());
    sel.table.resize(sorted.size());
    parallel_for(
        sorted.size(), [&](std::size_t i) { sel.table[i] = {sorted[i]->id, look_ahead(snap, *sorted[i])}; }, threads);
    std::size_t best = 0;
    for (std::size_t i = 1; i < sel.table.size(); ++i)
        if (sel.table[i].makespan < sel.table[best].makespan) best = i;
    sel.rule = *sorted[best];
    return sel;
}

// ---------------------------------------------------------------------------
// Online loop

enum class Strategy { Probe, Top, Random, Fixed };

inline std::string strategy_name(Strategy s) {
    switch (s) {
        case Strategy::Probe: return "probe";
        case Strategy::Top: return "top";
        case Strategy::Random: return "random";
        case Strategy::Fixed: return "fixed";
    }
    return "fixed";
}

struct OnlineConfig {
    Strategy strategy = Strategy::Probe;
    std::size_t k = 5;
    std::uint64_t seed = 0;  // random strategy
    std::optional<Rule> fixed_rule;
    unsigned threads = 1;
};

struct DecisionRecord {
    Time time = 0.0;
    std::vector<std::string> events;
    std::optional<Fingerprint> fingerprint;
    std::vector<Retrieved> retrieved;
    std::vector<CandidateScore> table;
    std::string chosen;
    bool fallback = false;
    std::string warning;
    double latency_ms = 0.0;
};

struct OnlineRun {
    Schedule schedule;
    std::vector<DecisionRecord> decisions;
};

/// The fixed candidate pool of the top and random strategies: the k*R
/// fittest elites, or k*R elites sampled without replacement.
inline std::vector<Rule> fixed_candidates(Strategy s, const EliteArchive& archive, std::size_t count,
                                          std::uint64_t seed) {
    std::vector<Rule> out;
    if (s == Strategy::Top) {
        for (const auto* e : archive.top_elites(count)) out.push_back(e->rule);
    } else if (s == Strategy::Random) {
        std::vector<Rule> all = archive.rules();
        Rng rng(derive_seed(seed, "random-strategy"));
        rng.shuffle(all);
        all.resize(std::min(count, all.size()));
        out = std::move(all);
    }
    return out;
}

inline OnlineRun run_online(const Instance& inst, const KnowledgeBase& kb, const EliteArchive* archive,
                            const OnlineConfig& cfg) {
    if (cfg.strategy == Strategy::Fixed && !cfg.fixed_rule) throw ConfigError("fixed strategy needs a rule");
    if ((cfg.strategy == Strategy::Top || cfg.strategy == Strategy::Random) && !archive)
        throw ConfigError(strategy_name(cfg.strategy) + " strategy needs an archive");
    if (cfg.strategy == Strategy::Probe && kb.cases.empty()) throw ConfigError("probe strategy needs a knowledge base");

    std::vector<Rule> pool;
    if (cfg.strategy == Strategy::Top || cfg.strategy == Strategy::Random)
        pool = fixed_candidates(cfg.strategy, *archive, cfg.k * kb.R, cfg.seed);
    else if (cfg.strategy == Strategy::Fixed)
        pool = {*cfg.fixed_rule};

    OnlineRun run;
    Policy policy = [&](const Snapshot& snap, std::span<const DynamicEvent> batch) {
        const auto t0 = std::chrono::steady_clock::now();
        DecisionRecord rec;
        rec.time = snap.clock;
        for (const auto& ev : batch) rec.events.push_back(describe(ev));
        Selection sel;
        if (cfg.strategy == Strategy::Probe) {
            rec.fingerprint = fingerprint(snap, kb.probe_rule);
            rec.retrieved = retrieve(kb, *rec.fingerprint, cfg.k, &rec.warning);
            std::vector<Rule> cands;
            for (const auto& id : aggregate_candidates(kb, rec.retrieved)) cands.push_back(kb.rule(id));
            sel = select_rule(snap, cands, cfg.threads);
        } else if (cfg.strategy == Strategy::Fixed) {
            sel.rule = pool.front();
        } else {
            sel = select_rule(snap, pool, cfg.threads);
        }
        rec.table = std::move(sel.table);
        rec.chosen = sel.rule.id;
        rec.fallback = sel.fallback;
        if (sel.fallback) rec.warning = "no candidates; using SPT";
        rec.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        run.decisions.push_back(std::move(rec));
        return sel.rule;
    };
    run.schedule = simulate_dynamic(inst, policy).schedule;
    return run;
}

inline nlohmann::json decision_to_json(const DecisionRecord& d) {
    using nlohmann::json;
    json j = {{"time", d.time}, {"events", d.events}};
    j["fingerprint"] = d.fingerprint ? json(d.fingerprint->values()) : json(nullptr);
    json retrieved = json::array();
    for (const auto& r : d.retrieved) retrieved.push_back({{"case", r.index}, {"distance", r.distance}});
    j["retrieved"] = std::move(retrieved);
    json table = json::array();
    for (const auto& c : d.table) table.push_back({{"id", c.id}, {"makespan", c.makespan}});
    j["candidates"] = std::move(table);
    j["chosen"] = d.chosen;
    j["fallback"] = d.fallback;
    if (!d.warning.empty()) j["warning"] = d.warning;
    j["latency_ms"] = d.latency_ms;
    return j;
}

/// One JSON object per line.
inline std::string decisions_to_jsonl(const std::vector<DecisionRecord>& decisions) {
    std::string out;
    for (const auto& d : decisions) out += decision_to_json(d).dump() + "\n";
    return out;
}

}  // namespace qdsched
