#pragma once

// Deterministic discrete-event simulation of rule-driven flexible job shop
// dispatching. A decision is taken whenever a machine is idle and some ready
// operation can run on an idle machine: the job expression picks the
// operation (argmin; ties by job id), then the machine expression picks among
// that operation's idle candidates (argmin; ties by machine id).
//
// Order of processing at a single timestamp: completions, repairs, dynamic
// events (breakdowns before arrivals), rule selection, dispatch.

#include <functional>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "qdsched/instance.hpp"
#include "qdsched/rule_lang.hpp"

namespace qdsched {

struct Assignment {
    JobId job = 0;
    int op = 0;
    MachineId machine = 0;
    Time start = 0.0;
    Time end = 0.0;
};

struct Schedule {
    std::vector<Assignment> assignments;  // completion order
    Time makespan = 0.0;
    std::vector<Time> machine_loads;   // L_m, completed processing per machine
    std::vector<Time> job_waits;       // W_j, indexed by job id
    std::vector<Time> job_processing;  // P_j, indexed by job id
};

/// Immutable per-job data with precomputed minimal processing times.
struct JobData {
    Job job;
    std::vector<Time> min_time;    // p_min per operation
    std::vector<Time> min_suffix;  // min_suffix[i] = sum of min_time[i..]; size ops+1

    explicit JobData(Job j) : job(std::move(j)) {
        const std::size_t n = job.ops.size();
        min_time.resize(n);
        min_suffix.assign(n + 1, 0.0);
        for (std::size_t i = 0; i < n; ++i) min_time[i] = job.ops[i].min_time();
        for (std::size_t i = n; i-- > 0;) min_suffix[i] = min_suffix[i + 1] + min_time[i];
    }
};
using JobDataPtr = std::shared_ptr<const JobData>;

struct JobProgress {
    int next_op = 0;        // first operation not yet completed
    bool in_flight = false;  // next_op is currently being processed
    Time ready_since = 0.0;  // when next_op became ready
    Time wait = 0.0;         // W_j so far
    Time processed = 0.0;    // P_j so far (completed operations)
};

struct MachineStatus {
    Time load = 0.0;  // processing assigned so far, in-flight operation included
    JobId job = -1;   // in-flight job or -1
    int candidate = -1;
    Time started = 0.0;
    Time busy_until = 0.0;
    Time down_until = 0.0;
    bool permanently_down = false;

    bool busy() const { return job >= 0; }
    bool down(Time t) const { return permanently_down || t < down_until - kTimeEps; }
};

/// Frozen simulator state. Snapshots are plain values: copying one and
/// simulating from the copy never affects the original.
struct Snapshot {
    Time clock = 0.0;
    std::vector<JobDataPtr> jobs;  // released jobs, indexed by job id
    std::vector<JobProgress> progress;
    std::vector<MachineStatus> machines;
    Time makespan_so_far = 0.0;

    int machine_count() const { return static_cast<int>(machines.size()); }

    /// Operations of released jobs that have not started (ready or not).
    std::size_t pool_size() const {
        std::size_t n = 0;
        for (std::size_t j = 0; j < jobs.size(); ++j) {
            const auto& p = progress[j];
            n += jobs[j]->job.ops.size() - static_cast<std::size_t>(p.next_op) - (p.in_flight ? 1 : 0);
        }
        return n;
    }

    template <class Fn>
    void for_each_pool_op(Fn&& fn) const {
        for (std::size_t j = 0; j < jobs.size(); ++j) {
            const auto& p = progress[j];
            const auto& ops = jobs[j]->job.ops;
            for (std::size_t i = static_cast<std::size_t>(p.next_op) + (p.in_flight ? 1 : 0); i < ops.size(); ++i)
                fn(ops[i]);
        }
    }

    /// Machines that are not down at the current clock (busy ones included).
    int available_machines() const {
        int n = 0;
        for (const auto& m : machines)
            if (!m.down(clock)) ++n;
        return n;
    }

    bool finished() const {
        for (const auto& m : machines)
            if (m.busy()) return false;
        return pool_size() == 0;
    }
};

/// Accumulators over the operations dispatched since a simulator was created.
struct WindowStats {
    Time origin = 0.0;
    std::vector<Time> residual;      // in-flight work per machine at the origin
    std::vector<Time> load;          // work dispatched per machine in the window
    Time wait = 0.0;                 // queueing time accrued after the origin
    Time processing = 0.0;           // work dispatched in the window
    Time min_time = 0.0;             // sum of p_min of dispatched operations
    Time last_end = 0.0;             // latest completion of any work in the window
    std::size_t dispatched = 0;
};

class Simulator {
public:
    /// Static start: all initial jobs released at t=0; the instance's event
    /// list is not applied automatically.
    explicit Simulator(const Instance& inst, bool record = true) : record_(record) {
        state_.machines.assign(static_cast<std::size_t>(inst.machines), MachineStatus{});
        for (const auto& job : inst.jobs) release(job);
        start_window();
    }

    explicit Simulator(Snapshot snap, bool record = false) : state_(std::move(snap)), record_(record) {
        start_window();
    }

    const Snapshot& state() const { return state_; }
    Snapshot snapshot() const { return state_; }
    const WindowStats& window() const { return window_; }
    Time clock() const { return state_.clock; }

    /// Dispatches with `rule` and advances internal events (completions,
    /// repairs) up to `stop_at`. No dispatch happens at `stop_at` itself.
    /// With stop_at = infinity the run continues until all released work is
    /// done; an unfinishable remainder throws SimulationError.
    void run_until(const Rule& rule, Time stop_at) {
        for (;;) {
            if (state_.clock < stop_at - kTimeEps) dispatch_all(rule);
            const Time next = next_internal_time();
            if (next == kInfinity || next > stop_at + kTimeEps) {
                if (stop_at != kInfinity) {
                    state_.clock = std::max(state_.clock, stop_at);
                } else if (!state_.finished()) {
                    throw SimulationError("simulation stalled at t=" + format_number(state_.clock) +
                                          ": pending operations have no operational machine");
                }
                return;
            }
            state_.clock = std::max(state_.clock, next);
            process_internal();
        }
    }

    void run_to_completion(const Rule& rule) { run_until(rule, kInfinity); }

    /// Applies a dynamic event at the current clock.
    void apply(const DynamicEvent& ev) {
        if (const auto* b = std::get_if<MachineBreakdown>(&ev.what)) {
            auto& m = state_.machines.at(static_cast<std::size_t>(b->machine));
            if (m.busy()) cancel(b->machine);
            if (b->permanent())
                m.permanently_down = true;
            else
                m.down_until = std::max(m.down_until, state_.clock + *b->repair);
        } else {
            release(std::get<OrderArrival>(ev.what).job);
        }
    }

    Schedule schedule() const {
        Schedule s;
        s.assignments = done_;
        s.makespan = state_.makespan_so_far;
        s.machine_loads.assign(state_.machines.size(), 0.0);
        for (const auto& a : done_) s.machine_loads[static_cast<std::size_t>(a.machine)] += a.end - a.start;
        for (const auto& p : state_.progress) {
            s.job_waits.push_back(p.wait);
            s.job_processing.push_back(p.processed);
        }
        return s;
    }

private:
    void release(const Job& job) {
        if (job.id != static_cast<JobId>(state_.jobs.size()))
            throw SimulationError("job " + std::to_string(job.id) + " released out of order");
        state_.jobs.push_back(std::make_shared<const JobData>(job));
        JobProgress p;
        p.ready_since = state_.clock;
        state_.progress.push_back(p);
    }

    void start_window() {
        window_ = WindowStats{};
        window_.origin = state_.clock;
        window_.residual.assign(state_.machines.size(), 0.0);
        window_.load.assign(state_.machines.size(), 0.0);
        window_.last_end = state_.clock;
        for (std::size_t m = 0; m < state_.machines.size(); ++m) {
            const auto& ms = state_.machines[m];
            if (ms.busy()) {
                window_.residual[m] = std::max(0.0, ms.busy_until - state_.clock);
                window_.last_end = std::max(window_.last_end, ms.busy_until);
            }
        }
    }

    Time next_internal_time() const {
        Time next = kInfinity;
        for (const auto& m : state_.machines) {
            if (m.busy()) next = std::min(next, m.busy_until);
            if (!m.permanently_down && m.down_until > state_.clock + kTimeEps) next = std::min(next, m.down_until);
        }
        return next;
    }

    void process_internal() {
        const Time t = state_.clock;
        for (std::size_t mi = 0; mi < state_.machines.size(); ++mi) {
            auto& m = state_.machines[mi];
            if (!m.busy() || m.busy_until > t + kTimeEps) continue;
            auto& p = state_.progress[static_cast<std::size_t>(m.job)];
            const Time proc = m.busy_until - m.started;
            if (record_) done_.push_back({m.job, p.next_op, static_cast<MachineId>(mi), m.started, m.busy_until});
            state_.makespan_so_far = std::max(state_.makespan_so_far, m.busy_until);
            p.processed += proc;
            p.next_op += 1;
            p.in_flight = false;
            p.ready_since = m.busy_until;
            m.job = -1;
            m.candidate = -1;
        }
    }

    void cancel(MachineId mi) {
        auto& m = state_.machines[static_cast<std::size_t>(mi)];
        auto& p = state_.progress[static_cast<std::size_t>(m.job)];
        const Time proc = m.busy_until - m.started;
        m.load -= proc;
        if (m.started >= window_.origin - kTimeEps) {
            window_.load[static_cast<std::size_t>(mi)] -= proc;
            window_.processing -= proc;
            window_.min_time -= state_.jobs[static_cast<std::size_t>(m.job)]->min_time[static_cast<std::size_t>(p.next_op)];
        }
        p.in_flight = false;
        p.ready_since = state_.clock;
        m.job = -1;
        m.candidate = -1;
    }

    void dispatch_all(const Rule& rule) {
        const Time t = state_.clock;
        const std::size_t n_machines = state_.machines.size();
        std::vector<int> queue_len(n_machines);
        for (;;) {
            std::vector<bool> idle(n_machines);
            bool any_idle = false;
            for (std::size_t m = 0; m < n_machines; ++m) {
                idle[m] = !state_.machines[m].busy() && !state_.machines[m].down(t);
                any_idle = any_idle || idle[m];
            }
            if (!any_idle) return;

            std::fill(queue_len.begin(), queue_len.end(), 0);
            for (std::size_t j = 0; j < state_.jobs.size(); ++j) {
                if (!ready(j, t)) continue;
                for (const auto& c : current_op(j).candidates) ++queue_len[static_cast<std::size_t>(c.machine)];
            }
            const double den = static_cast<double>(state_.pool_size()) /
                               static_cast<double>(std::max(1, state_.available_machines()));

            auto context = [&](std::size_t j, const Candidate& c, double pt) {
                const auto& data = *state_.jobs[j];
                const auto next = static_cast<std::size_t>(state_.progress[j].next_op);
                const auto& ms = state_.machines[static_cast<std::size_t>(c.machine)];
                DispatchContext ctx;
                ctx.pt = pt;
                ctx.wkr = data.min_suffix[next];
                ctx.rm = static_cast<double>(data.job.ops.size() - next);
                ctx.so = next + 1 < data.min_time.size() ? data.min_time[next + 1] : 0.0;
                ctx.ptm = ms.load;
                ctx.ur = t > 0.0 ? ms.load / t : 0.0;
                ctx.ql = static_cast<double>(queue_len[static_cast<std::size_t>(c.machine)]);
                ctx.den = den;
                ctx.now = t;
                return ctx;
            };

            std::size_t best_job = SIZE_MAX;
            double best_score = 0.0;
            for (std::size_t j = 0; j < state_.jobs.size(); ++j) {
                if (!ready(j, t)) continue;
                const Candidate* fastest = nullptr;
                for (const auto& c : current_op(j).candidates)
                    if (idle[static_cast<std::size_t>(c.machine)] &&
                        (!fastest || c.time < fastest->time ||
                         (c.time == fastest->time && c.machine < fastest->machine)))
                        fastest = &c;
                if (!fastest) continue;
                const double score = evaluate(rule.job, context(j, *fastest, state_.jobs[j]->min_time[static_cast<std::size_t>(state_.progress[j].next_op)]));
                if (best_job == SIZE_MAX || score < best_score) {
                    best_job = j;
                    best_score = score;
                }
            }
            if (best_job == SIZE_MAX) return;

            const auto& op = current_op(best_job);
            int best_cand = -1;
            double best_mscore = 0.0;
            for (std::size_t ci = 0; ci < op.candidates.size(); ++ci) {
                const auto& c = op.candidates[ci];
                if (!idle[static_cast<std::size_t>(c.machine)]) continue;
                const double score = evaluate(rule.machine, context(best_job, c, c.time));
                if (best_cand < 0 || score < best_mscore ||
                    (score == best_mscore && c.machine < op.candidates[static_cast<std::size_t>(best_cand)].machine)) {
                    best_cand = static_cast<int>(ci);
                    best_mscore = score;
                }
            }
            start(best_job, static_cast<std::size_t>(best_cand));
        }
    }

    bool ready(std::size_t j, Time t) const {
        const auto& p = state_.progress[j];
        return !p.in_flight && p.next_op < static_cast<int>(state_.jobs[j]->job.ops.size()) &&
               p.ready_since <= t + kTimeEps;
    }

    const Operation& current_op(std::size_t j) const {
        return state_.jobs[j]->job.ops[static_cast<std::size_t>(state_.progress[j].next_op)];
    }

    void start(std::size_t j, std::size_t cand) {
        const Time t = state_.clock;
        auto& p = state_.progress[j];
        const auto& c = current_op(j).candidates[cand];
        auto& m = state_.machines[static_cast<std::size_t>(c.machine)];
        p.wait += std::max(0.0, t - p.ready_since);
        p.in_flight = true;
        m.job = static_cast<JobId>(j);
        m.candidate = static_cast<int>(cand);
        m.started = t;
        m.busy_until = t + c.time;
        m.load += c.time;

        window_.wait += std::max(0.0, t - std::max(p.ready_since, window_.origin));
        window_.load[static_cast<std::size_t>(c.machine)] += c.time;
        window_.processing += c.time;
        window_.min_time += state_.jobs[j]->min_time[static_cast<std::size_t>(p.next_op)];
        window_.last_end = std::max(window_.last_end, m.busy_until);
        window_.dispatched += 1;
    }

    Snapshot state_;
    bool record_ = true;
    std::vector<Assignment> done_;
    WindowStats window_;
};

inline Snapshot initial_snapshot(const Instance& inst) { return Simulator(static_view(inst), false).snapshot(); }

/// Runs the instance's initial jobs to completion; events are ignored.
inline Schedule simulate_static(const Instance& inst, const Rule& rule) {
    Simulator sim(inst);
    sim.run_to_completion(rule);
    return sim.schedule();
}

/// Makespan of an event-free completion from the snapshot. Pure.
inline Time look_ahead(const Snapshot& snap, const Rule& rule) {
    Simulator sim(snap, false);
    sim.run_to_completion(rule);
    return sim.state().makespan_so_far;
}

// ---------------------------------------------------------------------------
// Dynamic runs

struct EventBatchRecord {
    Time time = 0.0;
    std::vector<std::string> events;  // human-readable event descriptions
    std::string rule_id;
};

struct DynamicRun {
    Schedule schedule;
    std::vector<EventBatchRecord> log;
};

/// Called once at t=0 and once per distinct event timestamp, after the
/// events at that timestamp have been applied. Returns the rule to dispatch
/// with until the next call.
using Policy = std::function<Rule(const Snapshot&, std::span<const DynamicEvent>)>;

inline std::string describe(const DynamicEvent& ev) {
    if (const auto* b = std::get_if<MachineBreakdown>(&ev.what))
        return "breakdown m" + std::to_string(b->machine) +
               (b->repair ? " repair " + format_number(*b->repair) : std::string(" permanent"));
    return "arrival j" + std::to_string(std::get<OrderArrival>(ev.what).job.id);
}

inline DynamicRun simulate_dynamic(const Instance& inst, const Policy& policy) {
    validate(inst);
    Simulator sim(static_view(inst));
    DynamicRun run;
    std::size_t e = 0;

    auto decide = [&](std::span<const DynamicEvent> batch) {
        Rule rule = policy(sim.state(), batch);
        if (rule.id.empty()) throw SimulationError("policy returned an invalid rule at t=" + format_number(sim.clock()));
        EventBatchRecord rec;
        rec.time = sim.clock();
        for (const auto& ev : batch) rec.events.push_back(describe(ev));
        rec.rule_id = rule.id;
        run.log.push_back(std::move(rec));
        return rule;
    };
    auto take_batch = [&](Time t) {
        const std::size_t first = e;
        while (e < inst.events.size() && inst.events[e].time <= t + kTimeEps) sim.apply(inst.events[e++]);
        return std::span<const DynamicEvent>(inst.events.data() + first, e - first);
    };

    Rule rule = decide(take_batch(0.0));
    while (e < inst.events.size()) {
        const Time te = inst.events[e].time;
        sim.run_until(rule, te);
        rule = decide(take_batch(te));
    }
    sim.run_to_completion(rule);
    run.schedule = sim.schedule();
    return run;
}

/// Flat text export: one "job op machine start end" row per operation, then a
/// summary line.
inline std::string schedule_to_text(const Schedule& s) {
    std::ostringstream out;
    out << "# job\top\tmachine\tstart\tend\n";
    for (const auto& a : s.assignments)
        out << a.job << '\t' << a.op << '\t' << a.machine << '\t' << format_number(a.start) << '\t'
            << format_number(a.end) << '\n';
    Time wait = 0.0, proc = 0.0;
    for (Time w : s.job_waits) wait += w;
    for (Time p : s.job_processing) proc += p;
    out << "# summary\tmakespan=" << format_number(s.makespan) << "\toperations=" << s.assignments.size()
        << "\ttotal_wait=" << format_number(wait) << "\ttotal_processing=" << format_number(proc) << '\n';
    return out.str();
}

}  // namespace qdsched
