#pragma once

// Six-component state fingerprint and the offline case knowledge base.
//
// Fingerprint order: skew_p, cpd, flex, wait_p, den, aflex. The first four
// come from an event-free probe completion of the snapshot; all are
// measured over the remainder only (work already finished at the snapshot
// is excluded):
//   L_m     in-flight residual on m at the snapshot + probe work dispatched to m
//   skew_p  max_m L_m / mean_m L_m
//   cpd     C_probe / C_LB with C_probe = probe completion - clock and
//           C_LB = max(max_m L_m, max_j (residual of j + sum of p_min of j's unstarted ops))
//   flex    sum of chosen processing times / sum of p_min over probe-dispatched ops
//   wait_p  queueing time accrued after the snapshot / probe-dispatched work
// With no remaining work the four are (1, 1, 1, 0).

#include <array>
#include <map>

#include "qdsched/archive.hpp"
#include "qdsched/parallel.hpp"

namespace qdsched {

inline constexpr std::size_t kFingerprintSize = 6;
inline constexpr double kNormEps = 1e-10;
inline constexpr const char* kKbFormat = "qdsched-kb";
inline constexpr int kKbVersion = 1;

inline const std::array<const char*, kFingerprintSize>& fingerprint_names() {
    static const std::array<const char*, kFingerprintSize> names = {"skew_p", "cpd", "flex", "wait_p", "den", "aflex"};
    return names;
}

using FeatureVector = std::array<double, kFingerprintSize>;

struct Fingerprint {
    double skew_p = 1.0;
    double cpd = 1.0;
    double flex = 1.0;
    double wait_p = 0.0;
    double den = 0.0;
    double aflex = 1.0;

    FeatureVector values() const { return {skew_p, cpd, flex, wait_p, den, aflex}; }

    static Fingerprint from_values(const FeatureVector& v) { return {v[0], v[1], v[2], v[3], v[4], v[5]}; }

    bool operator==(const Fingerprint&) const = default;
};

/// (den, aflex) of the live snapshot.
inline std::pair<double, double> state_features(const Snapshot& snap) {
    const std::size_t pool = snap.pool_size();
    const int avail = snap.available_machines();
    const double den = static_cast<double>(pool) / static_cast<double>(avail == 0 ? 1 : avail);
    if (pool == 0) return {den, 1.0};
    double cands = 0.0;
    snap.for_each_pool_op([&](const Operation& op) { cands += static_cast<double>(op.candidates.size()); });
    return {den, cands / static_cast<double>(pool)};
}

namespace detail {

// Ratios that are >= 1 in exact arithmetic can land a rounding error below.
inline double at_least_one(double ratio) { return ratio < 1.0 && ratio > 1.0 - 1e-9 ? 1.0 : ratio; }

}  // namespace detail

/// (skew_p, cpd, flex, wait_p) from a probe completion of the snapshot.
inline std::array<double, 4> probe_features(const Snapshot& snap, const Rule& probe_rule) {
    Simulator sim(snap, false);
    sim.run_to_completion(probe_rule);
    const WindowStats& w = sim.window();

    std::vector<Time> loads(w.load.size());
    double total = 0.0, top = 0.0;
    for (std::size_t m = 0; m < loads.size(); ++m) {
        loads[m] = w.residual[m] + w.load[m];
        total += loads[m];
        top = std::max(top, loads[m]);
    }
    if (total <= 0.0) return {1.0, 1.0, 1.0, 0.0};

    const double skew = detail::at_least_one(top / (total / static_cast<double>(loads.size())));

    Time chain_bound = 0.0;
    for (std::size_t j = 0; j < snap.jobs.size(); ++j) {
        const auto& p = snap.progress[j];
        const auto& data = *snap.jobs[j];
        Time chain = 0.0;
        std::size_t first = static_cast<std::size_t>(p.next_op);
        if (p.in_flight) {
            for (const auto& m : snap.machines)
                if (m.job == static_cast<JobId>(j)) chain += std::max(0.0, m.busy_until - snap.clock);
            ++first;
        }
        if (first < data.min_suffix.size()) chain += data.min_suffix[first];
        chain_bound = std::max(chain_bound, chain);
    }
    const Time lb = std::max(top, chain_bound);
    const Time c_probe = w.last_end - w.origin;
    const double cpd = lb > 0.0 ? detail::at_least_one(c_probe / lb) : 1.0;
    const double flex = w.min_time > 0.0 ? detail::at_least_one(w.processing / w.min_time) : 1.0;
    const double wait = w.processing > 0.0 ? w.wait / w.processing : 0.0;
    return {skew, cpd, flex, wait};
}

inline Fingerprint fingerprint(const Snapshot& snap, const Rule& probe_rule) {
    const auto p = probe_features(snap, probe_rule);
    const auto [den, aflex] = state_features(snap);
    return {p[0], p[1], p[2], p[3], den, aflex};
}

// ---------------------------------------------------------------------------
// Knowledge base

struct KbCase {
    std::string label;
    Fingerprint raw;
    FeatureVector normalized{};
    std::vector<std::string> rules;  // R best rule ids, best first
};

struct KnowledgeBase {
    Rule probe_rule;
    std::size_t R = 4;
    double snapshot_fraction = 0.0;
    FeatureVector mu{};
    FeatureVector sigma{};
    FeatureVector weights{};
    std::vector<KbCase> cases;
    std::map<std::string, Rule> rules;  // every id referenced by a case

    FeatureVector normalize(const Fingerprint& f) const {
        const auto v = f.values();
        FeatureVector out{};
        for (std::size_t i = 0; i < kFingerprintSize; ++i) out[i] = (v[i] - mu[i]) / (sigma[i] + kNormEps);
        return out;
    }

    const Rule& rule(const std::string& id) const {
        auto it = rules.find(id);
        if (it == rules.end()) throw ConfigError("knowledge base has no rule " + id);
        return it->second;
    }
};

struct FeatureStats {
    FeatureVector mu{};
    FeatureVector sigma{};
    FeatureVector weights{};
};

/// Population mean/std per feature and variance weights
/// w_j = Var_j / (sum Var + eps), rescaled to sum to one. An all-constant
/// corpus gets uniform weights.
inline FeatureStats feature_stats(std::span<const Fingerprint> corpus) {
    if (corpus.size() < 2) throw ConfigError("feature statistics need at least 2 fingerprints");
    FeatureStats s;
    const double n = static_cast<double>(corpus.size());
    for (const auto& f : corpus) {
        const auto v = f.values();
        for (std::size_t i = 0; i < kFingerprintSize; ++i) s.mu[i] += v[i];
    }
    for (auto& m : s.mu) m /= n;
    FeatureVector var{};
    for (const auto& f : corpus) {
        const auto v = f.values();
        for (std::size_t i = 0; i < kFingerprintSize; ++i) var[i] += (v[i] - s.mu[i]) * (v[i] - s.mu[i]);
    }
    double total = 0.0;
    for (std::size_t i = 0; i < kFingerprintSize; ++i) {
        var[i] /= n;
        s.sigma[i] = std::sqrt(var[i]);
        total += var[i];
    }
    double wsum = 0.0;
    for (std::size_t i = 0; i < kFingerprintSize; ++i) {
        s.weights[i] = var[i] / (total + kNormEps);
        wsum += s.weights[i];
    }
    for (auto& w : s.weights) w = wsum > 0.0 ? w / wsum : 1.0 / static_cast<double>(kFingerprintSize);
    return s;
}

struct KbOptions {
    std::size_t R = 4;
    double snapshot_fraction = 0.0;  // 0: fingerprint at t=0
    unsigned threads = 0;
};

/// Snapshot at which a library instance is fingerprinted: t=0, or the given
/// fraction of the probe rule's static makespan.
inline Snapshot library_snapshot(const Instance& inst, const Rule& probe_rule, double fraction) {
    if (fraction <= 0.0) return initial_snapshot(inst);
    const Time horizon = simulate_static(inst, probe_rule).makespan * fraction;
    Simulator sim(static_view(inst), false);
    sim.run_until(probe_rule, horizon);
    return sim.snapshot();
}

inline KnowledgeBase build_kb(std::span<const Instance> instances, std::span<const std::string> labels,
                              const EliteArchive& archive, const Rule& probe_rule, const KbOptions& opt = {}) {
    if (instances.size() < 2) throw ConfigError("knowledge base needs at least 2 library instances");
    if (labels.size() != instances.size()) throw ConfigError("one label per library instance required");
    if (opt.R == 0) throw ConfigError("R must be positive");
    if (archive.size() < opt.R)
        throw ConfigError("archive holds " + std::to_string(archive.size()) + " elites, fewer than R=" +
                          std::to_string(opt.R));
    if (!(opt.snapshot_fraction >= 0.0 && opt.snapshot_fraction < 1.0))
        throw ConfigError("snapshot fraction must be in [0, 1)");

    const std::vector<Rule> rules = archive.rules();
    KnowledgeBase kb;
    kb.probe_rule = probe_rule;
    kb.R = opt.R;
    kb.snapshot_fraction = opt.snapshot_fraction;
    kb.cases.resize(instances.size());

    std::vector<Snapshot> snaps(instances.size());
    parallel_for(
        instances.size(),
        [&](std::size_t i) {
            snaps[i] = library_snapshot(instances[i], probe_rule, opt.snapshot_fraction);
            kb.cases[i].label = labels[i];
            kb.cases[i].raw = fingerprint(snaps[i], probe_rule);
        },
        opt.threads);

    std::vector<std::vector<Time>> makespans(instances.size(), std::vector<Time>(rules.size()));
    parallel_for(
        instances.size() * rules.size(),
        [&](std::size_t k) {
            const std::size_t i = k / rules.size(), r = k % rules.size();
            makespans[i][r] = look_ahead(snaps[i], rules[r]);
        },
        opt.threads);

    for (std::size_t i = 0; i < instances.size(); ++i) {
        std::vector<std::size_t> order(rules.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (makespans[i][a] != makespans[i][b]) return makespans[i][a] < makespans[i][b];
            return rules[a].id < rules[b].id;
        });
        for (std::size_t r = 0; r < opt.R; ++r) {
            const Rule& rule = rules[order[r]];
            kb.cases[i].rules.push_back(rule.id);
            kb.rules.emplace(rule.id, rule);
        }
    }

    std::vector<Fingerprint> corpus;
    for (const auto& c : kb.cases) corpus.push_back(c.raw);
    const auto stats = feature_stats(corpus);
    kb.mu = stats.mu;
    kb.sigma = stats.sigma;
    kb.weights = stats.weights;
    for (auto& c : kb.cases) c.normalized = kb.normalize(c.raw);
    return kb;
}

inline KnowledgeBase build_kb(std::span<const Instance> instances, const EliteArchive& archive, const Rule& probe_rule,
                              const KbOptions& opt = {}) {
    std::vector<std::string> labels;
    for (std::size_t i = 0; i < instances.size(); ++i) labels.push_back("case-" + std::to_string(i));
    return build_kb(instances, labels, archive, probe_rule, opt);
}

// ---------------------------------------------------------------------------
// Persistence

inline nlohmann::json kb_to_json(const KnowledgeBase& kb, const nlohmann::json& meta = nullptr) {
    using nlohmann::json;
    json doc = {{"format", kKbFormat},
                {"version", kKbVersion},
                {"probe_rule", kb.probe_rule.source_text},
                {"probe_rule_id", kb.probe_rule.id},
                {"R", kb.R},
                {"snapshot_fraction", kb.snapshot_fraction},
                {"features", fingerprint_names()},
                {"mu", kb.mu},
                {"sigma", kb.sigma},
                {"weights", kb.weights}};
    if (!meta.is_null()) doc["meta"] = meta;
    json rules = json::array();
    for (const auto& [id, r] : kb.rules)
        rules.push_back({{"id", id}, {"rule", r.source_text}, {"provenance", r.provenance.str()}});
    doc["rules"] = std::move(rules);
    json cases = json::array();
    for (const auto& c : kb.cases)
        cases.push_back({{"label", c.label}, {"fingerprint", c.raw.values()}, {"rules", c.rules}});
    doc["cases"] = std::move(cases);
    return doc;
}

inline KnowledgeBase kb_from_json(const nlohmann::json& doc, const std::string& origin = "kb") {
    using detail::require;
    using detail::require_as;
    const int version = require_as<int>(doc, "version", origin);
    if (version != kKbVersion) throw ParseError(origin + ": unsupported kb version " + std::to_string(version));
    KnowledgeBase kb;
    kb.probe_rule = parse_rule(require_as<std::string>(doc, "probe_rule", origin));
    if (kb.probe_rule.id != require_as<std::string>(doc, "probe_rule_id", origin))
        throw ParseError(origin + ": probe rule id does not match its text");
    kb.R = require_as<std::size_t>(doc, "R", origin);
    kb.snapshot_fraction = require_as<double>(doc, "snapshot_fraction", origin);
    kb.mu = require_as<FeatureVector>(doc, "mu", origin);
    kb.sigma = require_as<FeatureVector>(doc, "sigma", origin);
    kb.weights = require_as<FeatureVector>(doc, "weights", origin);
    const auto& rules = require(doc, "rules", origin);
    for (std::size_t i = 0; i < rules.size(); ++i) {
        const std::string where = origin + ".rules[" + std::to_string(i) + "]";
        Rule r = parse_rule(require_as<std::string>(rules[i], "rule", where),
                            Provenance::parse(require_as<std::string>(rules[i], "provenance", where)));
        if (r.id != require_as<std::string>(rules[i], "id", where))
            throw ParseError(where + ": stored id does not match rule text");
        kb.rules.emplace(r.id, std::move(r));
    }
    const auto& cases = require(doc, "cases", origin);
    for (std::size_t i = 0; i < cases.size(); ++i) {
        const std::string where = origin + ".cases[" + std::to_string(i) + "]";
        KbCase c;
        c.label = require_as<std::string>(cases[i], "label", where);
        c.raw = Fingerprint::from_values(require_as<FeatureVector>(cases[i], "fingerprint", where));
        c.rules = require_as<std::vector<std::string>>(cases[i], "rules", where);
        if (c.rules.size() != kb.R) throw ParseError(where + ": expected " + std::to_string(kb.R) + " rules");
        for (const auto& id : c.rules)
            if (!kb.rules.count(id)) throw ParseError(where + ": unknown rule id " + id);
        c.normalized = kb.normalize(c.raw);
        kb.cases.push_back(std::move(c));
    }
    return kb;
}

inline std::string kb_to_text(const KnowledgeBase& kb, const nlohmann::json& meta = nullptr) {
    return kb_to_json(kb, meta).dump(1) + "\n";
}

inline KnowledgeBase kb_from_text(const std::string& text, const std::string& origin = "kb") {
    return kb_from_json(detail::parse_json_text(text, origin), origin);
}

inline void save_kb(const KnowledgeBase& kb, const std::string& path, const nlohmann::json& meta = nullptr) {
    detail::write_file(path, kb_to_text(kb, meta));
}

inline KnowledgeBase load_kb(const std::string& path) { return kb_from_text(detail::read_file(path), path); }

}  // namespace qdsched
