#pragma once

// Behavioral descriptor of a rule: load skewness and waiting ratio of the
// schedules it produces on a fixed calibration set, plus its code-level
// novelty relative to the archive. All three components live in [0, 1].

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "qdsched/sim_engine.hpp"

namespace qdsched {

struct Descriptor {
    double skew = 0.0;
    double wait = 0.0;
    double div = 0.0;

    std::array<double, 3> values() const { return {skew, wait, div}; }

    double distance(const Descriptor& o) const {
        const double a = skew - o.skew, b = wait - o.wait, c = div - o.div;
        return std::sqrt(a * a + b * b + c * c);
    }

    bool operator==(const Descriptor&) const = default;
};

/// Unnormalized schedule features, averaged over calibration instances.
struct RawBehavior {
    double skew = 1.0;
    double wait = 0.0;

    bool operator==(const RawBehavior&) const = default;
};

/// max_m L_m / mean_m L_m; 1 when every machine load is zero.
inline double skew_of(const std::vector<Time>& loads) {
    if (loads.empty()) return 1.0;
    double sum = 0.0, top = 0.0;
    for (Time l : loads) {
        sum += l;
        top = std::max(top, l);
    }
    if (sum <= 0.0) return 1.0;
    return std::max(1.0, top / (sum / static_cast<double>(loads.size())));
}

/// sum_j W_j / sum_j P_j; 0 when nothing was processed.
inline double wait_ratio(const std::vector<Time>& waits, const std::vector<Time>& processing) {
    double w = 0.0, p = 0.0;
    for (Time x : waits) w += x;
    for (Time x : processing) p += x;
    return p > 0.0 ? w / p : 0.0;
}

inline double raw_skew(std::span<const Schedule> schedules) {
    if (schedules.empty()) throw ConfigError("raw_skew: at least one schedule required");
    double acc = 0.0;
    for (const auto& s : schedules) acc += skew_of(s.machine_loads);
    return acc / static_cast<double>(schedules.size());
}

inline double raw_wait(std::span<const Schedule> schedules) {
    if (schedules.empty()) throw ConfigError("raw_wait: at least one schedule required");
    double acc = 0.0;
    for (const auto& s : schedules) acc += wait_ratio(s.job_waits, s.job_processing);
    return acc / static_cast<double>(schedules.size());
}

/// Minimum edit distance to any archive member; 1 for an empty archive.
inline double diversity(const CanonicalRule& rule, std::span<const CanonicalRule> archive) {
    double best = 1.0;
    for (const auto& other : archive) {
        best = std::min(best, edit_distance(rule, other));
        if (best == 0.0) break;
    }
    return best;
}

inline double diversity(const Rule& rule, std::span<const Rule> archive) {
    std::vector<CanonicalRule> canon;
    canon.reserve(archive.size());
    for (const auto& r : archive) canon.push_back(canonicalize(r));
    return diversity(canonicalize(rule), canon);
}

/// Running min/max of raw skew and wait over every evaluated rule.
class CorpusStats {
public:
    void observe(const RawBehavior& raw) {
        if (count_ == 0) {
            lo_ = hi_ = raw;
        } else {
            lo_.skew = std::min(lo_.skew, raw.skew);
            lo_.wait = std::min(lo_.wait, raw.wait);
            hi_.skew = std::max(hi_.skew, raw.skew);
            hi_.wait = std::max(hi_.wait, raw.wait);
        }
        ++count_;
    }

    /// Min-max normalization into [0, 1]; a degenerate range maps to 0.5.
    std::pair<double, double> normalize(const RawBehavior& raw) const {
        return {scale(raw.skew, lo_.skew, hi_.skew), scale(raw.wait, lo_.wait, hi_.wait)};
    }

    std::size_t count() const { return count_; }
    const RawBehavior& min() const { return lo_; }
    const RawBehavior& max() const { return hi_; }

private:
    static double scale(double v, double lo, double hi) {
        if (!(hi - lo > 0.0)) return 0.5;
        return std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
    }

    RawBehavior lo_, hi_;
    std::size_t count_ = 0;
};

/// Static performance of a rule over the calibration set.
struct RuleEvaluation {
    double fitness = 0.0;  // mean makespan
    RawBehavior raw;
};

/// nullopt when the rule cannot complete some calibration instance.
inline std::optional<RuleEvaluation> evaluate_rule(const Rule& rule, std::span<const Instance> calibration) {
    if (calibration.empty()) throw ConfigError("calibration set is empty");
    std::vector<Schedule> schedules;
    schedules.reserve(calibration.size());
    try {
        for (const auto& inst : calibration) schedules.push_back(simulate_static(inst, rule));
    } catch (const SimulationError&) {
        return std::nullopt;
    }
    RuleEvaluation ev;
    for (const auto& s : schedules) ev.fitness += s.makespan;
    ev.fitness /= static_cast<double>(schedules.size());
    ev.raw = {raw_skew(schedules), raw_wait(schedules)};
    return ev;
}

/// Folds the raw features into the corpus, then normalizes against it.
inline Descriptor make_descriptor(const RawBehavior& raw, double div, CorpusStats& corpus) {
    corpus.observe(raw);
    const auto [s, w] = corpus.normalize(raw);
    return {s, w, std::clamp(div, 0.0, 1.0)};
}

struct DescribedRule {
    RuleEvaluation evaluation;
    Descriptor descriptor;
};

inline std::optional<DescribedRule> extract_descriptor(const Rule& rule, std::span<const Instance> calibration,
                                                       CorpusStats& corpus, std::span<const Rule> archive_rules) {
    auto ev = evaluate_rule(rule, calibration);
    if (!ev) return std::nullopt;
    return DescribedRule{*ev, make_descriptor(ev->raw, diversity(rule, archive_rules), corpus)};
}

/// Three static calibration instances of increasing size.
inline std::vector<Instance> calibration_set(std::uint64_t seed) {
    std::vector<Instance> out;
    const Scale scales[3] = {
        {{6, 6}, {4, 4}, {3, 4}, {1, 3}, {10, 50}, 0.10},
        {{10, 10}, {6, 6}, {3, 5}, {1, 3}, {10, 50}, 0.10},
        {{15, 15}, {8, 8}, {4, 6}, {1, 4}, {10, 50}, 0.10},
    };
    for (int i = 0; i < 3; ++i) {
        out.push_back(generate_synthetic(derive_seed(seed, "calibration-" + std::to_string(i)), scales[i], {}));
        out.back().bucket = "calibration";
    }
    return out;
}

}  // namespace qdsched
