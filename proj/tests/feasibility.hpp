#pragma once

#include <gtest/gtest.h>

#include <algorithm>
#include <map>

#include "qdsched/sim_engine.hpp"

// Checks the Schedule invariants: every operation of every released job
// appears once, durations match the chosen candidate, precedence holds,
// machines never overlap and makespan is the latest end.
inline ::testing::AssertionResult feasible(const qdsched::Instance& inst, const qdsched::Schedule& s,
                                           bool include_arrivals = false) {
    using namespace qdsched;
    std::vector<Job> jobs = inst.jobs;
    std::map<JobId, Time> release;
    if (include_arrivals)
        for (const auto& e : inst.events)
            if (const auto* a = std::get_if<OrderArrival>(&e.what)) {
                jobs.push_back(a->job);
                release[a->job.id] = e.time;
            }
    std::size_t expected = 0;
    for (const auto& j : jobs) expected += j.ops.size();
    if (s.assignments.size() != expected)
        return ::testing::AssertionFailure() << "assignments " << s.assignments.size() << " != ops " << expected;

    std::map<std::pair<JobId, int>, Assignment> by_op;
    Time makespan = 0;
    for (const auto& a : s.assignments) {
        if (!by_op.emplace(std::make_pair(a.job, a.op), a).second)
            return ::testing::AssertionFailure() << "operation scheduled twice: " << a.job << "/" << a.op;
        const auto& op = jobs.at(static_cast<std::size_t>(a.job)).ops.at(static_cast<std::size_t>(a.op));
        auto it = std::find_if(op.candidates.begin(), op.candidates.end(),
                               [&](const Candidate& c) { return c.machine == a.machine; });
        if (it == op.candidates.end()) return ::testing::AssertionFailure() << "ineligible machine";
        if (std::abs((a.end - a.start) - it->time) > 1e-9) return ::testing::AssertionFailure() << "bad duration";
        makespan = std::max(makespan, a.end);
        if (release.count(a.job) && a.start < release[a.job] - 1e-9)
            return ::testing::AssertionFailure() << "started before release";
    }
    for (const auto& [key, a] : by_op)
        if (key.second > 0) {
            const auto& prev = by_op.at({key.first, key.second - 1});
            if (a.start < prev.end - 1e-9) return ::testing::AssertionFailure() << "precedence violated";
        }
    std::vector<std::vector<Assignment>> per_machine(static_cast<std::size_t>(inst.machines));
    for (const auto& a : s.assignments) per_machine[static_cast<std::size_t>(a.machine)].push_back(a);
    for (auto& v : per_machine) {
        std::sort(v.begin(), v.end(), [](const Assignment& x, const Assignment& y) { return x.start < y.start; });
        for (std::size_t i = 1; i < v.size(); ++i)
            if (v[i].start < v[i - 1].end - 1e-9) return ::testing::AssertionFailure() << "machine overlap";
    }
    if (std::abs(makespan - s.makespan) > 1e-9) return ::testing::AssertionFailure() << "makespan mismatch";
    return ::testing::AssertionSuccess();
}
