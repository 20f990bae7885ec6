#pragma once

// Flexible job shop problem data: jobs, operations with machine-dependent
// processing times, and the dynamic event stream (order arrivals and
// machine breakdowns).

#include <algorithm>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "qdsched/core.hpp"

namespace qdsched {

struct Candidate {
    MachineId machine = 0;
    Time time = 0.0;

    bool operator==(const Candidate&) const = default;
};

struct Operation {
    JobId job = 0;
    int index = 0;  // position within the job's precedence chain
    std::vector<Candidate> candidates;

    Time min_time() const {
        Time best = kInfinity;
        for (const auto& c : candidates) best = std::min(best, c.time);
        return best;
    }

    bool operator==(const Operation&) const = default;
};

struct Job {
    JobId id = 0;
    std::vector<Operation> ops;

    Time min_work() const {
        Time sum = 0.0;
        for (const auto& op : ops) sum += op.min_time();
        return sum;
    }

    bool operator==(const Job&) const = default;
};

struct OrderArrival {
    Job job;
    bool operator==(const OrderArrival&) const = default;
};

struct MachineBreakdown {
    MachineId machine = 0;
    std::optional<Time> repair;  // nullopt: permanent

    bool permanent() const { return !repair.has_value(); }
    bool operator==(const MachineBreakdown&) const = default;
};

struct DynamicEvent {
    Time time = 0.0;
    std::variant<MachineBreakdown, OrderArrival> what;

    bool is_breakdown() const { return std::holds_alternative<MachineBreakdown>(what); }
    bool operator==(const DynamicEvent&) const = default;
};

/// A problem instance. Initial jobs carry ids 0..jobs.size()-1; the k-th
/// order arrival carries id jobs.size()+k.
struct Instance {
    int machines = 0;
    std::vector<Job> jobs;
    std::vector<DynamicEvent> events;
    std::string bucket;  // free-form difficulty label, used by reports

    std::size_t operation_count() const {
        std::size_t n = 0;
        for (const auto& j : jobs) n += j.ops.size();
        return n;
    }

    bool operator==(const Instance&) const = default;
};

namespace detail {

inline void validate_job(const Job& job, JobId expected_id, int machines, const std::string& where) {
    if (job.id != expected_id)
        throw ConfigError(where + ": job id " + std::to_string(job.id) + ", expected " +
                          std::to_string(expected_id));
    if (job.ops.empty()) throw ConfigError(where + ": job has no operations");
    for (std::size_t i = 0; i < job.ops.size(); ++i) {
        const auto& op = job.ops[i];
        const std::string here = where + ".ops[" + std::to_string(i) + "]";
        if (op.job != job.id || op.index != static_cast<int>(i))
            throw ConfigError(here + ": inconsistent job/index");
        if (op.candidates.empty()) throw ConfigError(here + ": no candidate machines");
        for (const auto& c : op.candidates) {
            if (c.machine < 0 || c.machine >= machines)
                throw ConfigError(here + ": unknown machine " + std::to_string(c.machine));
            if (!(c.time > 0.0) || !std::isfinite(c.time))
                throw ConfigError(here + ": processing time must be positive and finite");
        }
        for (std::size_t a = 0; a < op.candidates.size(); ++a)
            for (std::size_t b = a + 1; b < op.candidates.size(); ++b)
                if (op.candidates[a].machine == op.candidates[b].machine)
                    throw ConfigError(here + ": duplicate candidate machine");
    }
}

}  // namespace detail

/// Throws ConfigError describing the first violated invariant.
inline void validate(const Instance& inst) {
    if (inst.machines < 1) throw ConfigError("instance: machines must be >= 1");
    for (std::size_t j = 0; j < inst.jobs.size(); ++j)
        detail::validate_job(inst.jobs[j], static_cast<JobId>(j), inst.machines,
                             "jobs[" + std::to_string(j) + "]");
    Time last = 0.0;
    JobId next_arrival = static_cast<JobId>(inst.jobs.size());
    for (std::size_t e = 0; e < inst.events.size(); ++e) {
        const auto& ev = inst.events[e];
        const std::string where = "events[" + std::to_string(e) + "]";
        if (!(ev.time >= 0.0) || !std::isfinite(ev.time)) throw ConfigError(where + ": negative time");
        if (ev.time < last) throw ConfigError(where + ": events not sorted by time");
        last = ev.time;
        if (const auto* b = std::get_if<MachineBreakdown>(&ev.what)) {
            if (b->machine < 0 || b->machine >= inst.machines)
                throw ConfigError(where + ": unknown machine " + std::to_string(b->machine));
            if (b->repair && !(*b->repair > 0.0))
                throw ConfigError(where + ": repair duration must be positive");
        } else {
            detail::validate_job(std::get<OrderArrival>(ev.what).job, next_arrival++, inst.machines,
                                 where + ".job");
        }
    }
}

/// Makespan lower bound: max(largest machine load, longest job chain of
/// minimal processing times).
inline Time lower_bound(const Instance& inst, const std::vector<Time>& assigned_loads) {
    Time bound = 0.0;
    for (Time l : assigned_loads) bound = std::max(bound, l);
    for (const auto& job : inst.jobs) bound = std::max(bound, job.min_work());
    return bound;
}

// ---------------------------------------------------------------------------
// Synthetic generation

struct IntRange {
    int lo = 1;
    int hi = 1;
};

struct Scale {
    IntRange jobs{6, 10};
    IntRange machines{4, 6};
    IntRange ops_per_job{2, 5};
    IntRange candidates{1, 3};    // eligible machines per operation
    IntRange proc_time{10, 50};   // base processing time before jitter
    double jitter = 0.10;         // relative, uniform in [-jitter, +jitter]
};

struct EventProfile {
    double arrival_rate = 0.0;    // expected arrivals per time unit
    double breakdown_rate = 0.0;  // expected breakdowns per time unit
    Time horizon = 0.0;           // events are drawn in [0, horizon)
    IntRange repair{10, 40};
    double permanent_probability = 0.0;
};

namespace detail {

inline void check_range(const IntRange& r, const char* name, int min_lo) {
    if (r.lo < min_lo || r.hi < r.lo)
        throw ConfigError(std::string("scale.") + name + ": invalid range [" + std::to_string(r.lo) +
                          ", " + std::to_string(r.hi) + "]");
}

inline Job synth_job(Rng& rng, JobId id, int machines, const Scale& s) {
    Job job;
    job.id = id;
    const int n_ops = static_cast<int>(rng.uniform_int(s.ops_per_job.lo, s.ops_per_job.hi));
    std::vector<MachineId> pool(static_cast<std::size_t>(machines));
    for (int m = 0; m < machines; ++m) pool[static_cast<std::size_t>(m)] = m;
    for (int i = 0; i < n_ops; ++i) {
        Operation op;
        op.job = id;
        op.index = i;
        const int flex = std::min(machines, static_cast<int>(rng.uniform_int(s.candidates.lo, s.candidates.hi)));
        rng.shuffle(pool);
        std::vector<MachineId> chosen(pool.begin(), pool.begin() + flex);
        std::sort(chosen.begin(), chosen.end());
        for (MachineId m : chosen) {
            const double base = static_cast<double>(rng.uniform_int(s.proc_time.lo, s.proc_time.hi));
            const double t = base * (1.0 + rng.uniform(-s.jitter, s.jitter));
            op.candidates.push_back({m, std::max(t, 1e-3)});
        }
        job.ops.push_back(std::move(op));
    }
    return job;
}

}  // namespace detail

/// Deterministic synthetic instance. Permanent breakdowns are only emitted when
/// every operation (initial and arriving) keeps at least one surviving
/// candidate; otherwise the breakdown is downgraded to a temporary one.
inline Instance generate_synthetic(std::uint64_t seed, const Scale& scale, const EventProfile& profile) {
    detail::check_range(scale.jobs, "jobs", 1);
    detail::check_range(scale.machines, "machines", 1);
    detail::check_range(scale.ops_per_job, "ops_per_job", 1);
    detail::check_range(scale.candidates, "candidates", 1);
    detail::check_range(scale.proc_time, "proc_time", 1);
    detail::check_range(profile.repair, "repair", 1);
    if (scale.jitter < 0.0 || scale.jitter >= 1.0) throw ConfigError("scale.jitter must be in [0, 1)");
    if (profile.arrival_rate < 0.0 || profile.breakdown_rate < 0.0)
        throw ConfigError("event rates must be >= 0");
    if (profile.horizon < 0.0) throw ConfigError("event horizon must be >= 0");

    Rng rng(seed);
    Instance inst;
    inst.machines = static_cast<int>(rng.uniform_int(scale.machines.lo, scale.machines.hi));
    const int n_jobs = static_cast<int>(rng.uniform_int(scale.jobs.lo, scale.jobs.hi));
    for (int j = 0; j < n_jobs; ++j) inst.jobs.push_back(detail::synth_job(rng, j, inst.machines, scale));

    std::vector<DynamicEvent> arrivals;
    if (profile.arrival_rate > 0.0 && profile.horizon > 0.0) {
        JobId next_id = n_jobs;
        for (Time t = rng.exponential(profile.arrival_rate); t < profile.horizon;
             t += rng.exponential(profile.arrival_rate))
            arrivals.push_back({t, OrderArrival{detail::synth_job(rng, next_id++, inst.machines, scale)}});
    }

    std::vector<DynamicEvent> breakdowns;
    if (profile.breakdown_rate > 0.0 && profile.horizon > 0.0) {
        std::vector<bool> dead(static_cast<std::size_t>(inst.machines), false);
        auto survives_without = [&](MachineId m) {
            auto ok = [&](const Job& job) {
                return std::all_of(job.ops.begin(), job.ops.end(), [&](const Operation& op) {
                    return std::any_of(op.candidates.begin(), op.candidates.end(), [&](const Candidate& c) {
                        return c.machine != m && !dead[static_cast<std::size_t>(c.machine)];
                    });
                });
            };
            return std::all_of(inst.jobs.begin(), inst.jobs.end(), ok) &&
                   std::all_of(arrivals.begin(), arrivals.end(),
                               [&](const DynamicEvent& e) { return ok(std::get<OrderArrival>(e.what).job); });
        };
        for (Time t = rng.exponential(profile.breakdown_rate); t < profile.horizon;
             t += rng.exponential(profile.breakdown_rate)) {
            MachineBreakdown b;
            b.machine = static_cast<MachineId>(rng.uniform_int(0, inst.machines - 1));
            const bool want_permanent = rng.bernoulli(profile.permanent_probability);
            const double repair = static_cast<double>(rng.uniform_int(profile.repair.lo, profile.repair.hi));
            if (want_permanent && !dead[static_cast<std::size_t>(b.machine)] && survives_without(b.machine)) {
                dead[static_cast<std::size_t>(b.machine)] = true;
            } else {
                b.repair = repair;
            }
            breakdowns.push_back({t, b});
        }
    }

    // Breakdowns sort before arrivals at equal timestamps.
    inst.events = std::move(breakdowns);
    inst.events.insert(inst.events.end(), arrivals.begin(), arrivals.end());
    std::stable_sort(inst.events.begin(), inst.events.end(), [](const DynamicEvent& a, const DynamicEvent& b) {
        if (a.time != b.time) return a.time < b.time;
        return a.is_breakdown() && !b.is_breakdown();
    });
    // Arrival ids must follow event order.
    JobId next_id = n_jobs;
    for (auto& ev : inst.events)
        if (auto* arr = std::get_if<OrderArrival>(&ev.what)) {
            arr->job.id = next_id++;
            for (auto& op : arr->job.ops) op.job = arr->job.id;
        }
    validate(inst);
    return inst;
}

/// Named generator settings for the difficulty buckets. Higher buckets have
/// larger shops and more frequent arrivals and breakdowns. Event horizons sit
/// around half the typical static makespan so disruptions land mid-run.
struct Difficulty {
    std::string name;
    Scale scale;
    EventProfile events;
};

inline const std::vector<std::string>& difficulty_names() {
    static const std::vector<std::string> names = {"S1", "S2", "S3"};
    return names;
}

inline Difficulty difficulty(const std::string& name) {
    Difficulty d;
    d.name = name;
    if (name == "S1") {
        d.scale.jobs = {8, 12};
        d.scale.machines = {4, 6};
        d.events = {0.02, 0.01, 120.0, {10, 30}, 0.0};
    } else if (name == "S2") {
        d.scale.jobs = {12, 16};
        d.scale.machines = {5, 8};
        d.events = {0.03, 0.015, 150.0, {10, 40}, 0.05};
    } else if (name == "S3") {
        d.scale.jobs = {16, 20};
        d.scale.machines = {6, 10};
        d.events = {0.04, 0.02, 150.0, {20, 60}, 0.1};
    } else {
        throw ConfigError("unknown difficulty '" + name + "' (expected S1, S2 or S3)");
    }
    return d;
}

/// `count` instances of one bucket; instance i is seeded from (seed, bucket, i).
inline std::vector<Instance> generate_suite(std::uint64_t seed, const Difficulty& d, int count, bool dynamic = true) {
    std::vector<Instance> out;
    for (int i = 0; i < count; ++i) {
        Instance inst = generate_synthetic(derive_seed(seed, d.name + "-" + std::to_string(i)), d.scale,
                                           dynamic ? d.events : EventProfile{});
        inst.bucket = d.name;
        out.push_back(std::move(inst));
    }
    return out;
}

/// Same instance without its event stream.
inline Instance static_view(const Instance& inst) {
    Instance out = inst;
    out.events.clear();
    return out;
}

}  // namespace qdsched
