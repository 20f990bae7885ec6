#include <gtest/gtest.h>

#include <filesystem>

#include "oracles.hpp"
#include "qdsched/instance_io.hpp"

using namespace qdsched;

namespace {

Scale desk_scale() {
    Scale s;
    s.jobs = {5, 8};
    s.machines = {3, 5};
    s.ops_per_job = {2, 4};
    s.candidates = {1, 3};
    return s;
}

EventProfile busy_profile() {
    EventProfile p;
    p.arrival_rate = 0.02;
    p.breakdown_rate = 0.02;
    p.horizon = 300;
    p.permanent_probability = 0.3;
    return p;
}

Job job_of(JobId id, std::vector<std::vector<Candidate>> ops) {
    Job j;
    j.id = id;
    for (std::size_t i = 0; i < ops.size(); ++i) j.ops.push_back({id, static_cast<int>(i), ops[i]});
    return j;
}

}  // namespace

TEST(Generator, SameSeedIsByteIdentical) {
    const auto a = generate_synthetic(1, desk_scale(), busy_profile());
    const auto b = generate_synthetic(1, desk_scale(), busy_profile());
    EXPECT_EQ(instance_to_text(a), instance_to_text(b));
}

TEST(Generator, ZeroRatesGiveNoEvents) {
    EventProfile p = busy_profile();
    p.arrival_rate = 0;
    p.breakdown_rate = 0;
    EXPECT_TRUE(generate_synthetic(3, desk_scale(), p).events.empty());
}

TEST(Generator, DifferentSeedsDiffer) {
    const auto a = generate_synthetic(1, desk_scale(), {});
    const auto b = generate_synthetic(2, desk_scale(), {});
    EXPECT_NE(instance_to_text(a), instance_to_text(b));
}

TEST(Generator, EventsSortedAndPermanentLossesSurvivable) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        auto p = busy_profile();
        p.permanent_probability = 0.9;
        p.breakdown_rate = 0.1;
        const auto inst = generate_synthetic(seed, desk_scale(), p);
        std::vector<bool> dead(static_cast<std::size_t>(inst.machines), false);
        for (std::size_t e = 0; e < inst.events.size(); ++e) {
            if (e > 0) EXPECT_LE(inst.events[e - 1].time, inst.events[e].time);
            if (const auto* b = std::get_if<MachineBreakdown>(&inst.events[e].what); b && b->permanent())
                dead[static_cast<std::size_t>(b->machine)] = true;
        }
        auto alive = [&](const Job& job) {
            for (const auto& op : job.ops) {
                bool ok = false;
                for (const auto& c : op.candidates) ok = ok || !dead[static_cast<std::size_t>(c.machine)];
                if (!ok) return false;
            }
            return true;
        };
        for (const auto& j : inst.jobs) EXPECT_TRUE(alive(j));
        for (const auto& e : inst.events)
            if (const auto* a = std::get_if<OrderArrival>(&e.what)) EXPECT_TRUE(alive(a->job));
        EXPECT_LT(std::count(dead.begin(), dead.end(), true), inst.machines);
    }
}

TEST(Generator, RejectsInfeasibleScale) {
    Scale s = desk_scale();
    s.jobs = {0, 0};
    EXPECT_THROW(generate_synthetic(1, s, {}), ConfigError);
    EventProfile p;
    p.arrival_rate = -1;
    EXPECT_THROW(generate_synthetic(1, desk_scale(), p), ConfigError);
}

TEST(LowerBound, SingleMachineChain) {
    Instance inst;
    inst.machines = 1;
    inst.jobs.push_back(job_of(0, {{{0, 3}}, {{0, 4}}}));
    EXPECT_DOUBLE_EQ(lower_bound(inst, {0.0}), 7.0);
    EXPECT_DOUBLE_EQ(lower_bound(inst, {9.0}), 9.0);
}

TEST(LowerBound, PicksMinimalCandidate) {
    Instance inst;
    inst.machines = 2;
    inst.jobs.push_back(job_of(0, {{{0, 5}, {1, 9}}}));
    EXPECT_DOUBLE_EQ(lower_bound(inst, {0.0, 0.0}), 5.0);
}

TEST(LowerBound, EmptyInstanceIsZero) {
    Instance inst;
    inst.machines = 2;
    EXPECT_DOUBLE_EQ(lower_bound(inst, {0.0, 0.0}), 0.0);
}

TEST(LowerBound, NeverExceedsExhaustiveOptimum) {
    for (std::uint64_t seed = 0; seed < 60; ++seed) {
        const auto inst = oracle::tiny_instance(seed);
        const Time lb = lower_bound(inst, std::vector<Time>(static_cast<std::size_t>(inst.machines), 0.0));
        EXPECT_LE(lb, oracle::min_makespan_exhaustive(inst) + 1e-9) << "seed " << seed;
    }
}

TEST(LowerBound, MonotoneUnderAddedOperation) {
    Rng rng(5);
    for (int trial = 0; trial < 100; ++trial) {
        auto inst = oracle::tiny_instance(rng.next());
        std::vector<Time> loads(static_cast<std::size_t>(inst.machines));
        for (auto& l : loads) l = rng.uniform(0, 20);
        const Time before = lower_bound(inst, loads);
        auto& job = inst.jobs[rng.index(inst.jobs.size())];
        job.ops.push_back({job.id, static_cast<int>(job.ops.size()), {{0, rng.uniform(0.1, 10)}}});
        EXPECT_GE(lower_bound(inst, loads), before);
    }
}

TEST(InstanceIo, RoundTrip) {
    const auto inst = generate_synthetic(11, desk_scale(), busy_profile());
    const auto path = std::filesystem::temp_directory_path() / "qdsched_roundtrip.json";
    save_instance(inst, path.string());
    EXPECT_EQ(load_instance(path.string()), inst);
    std::filesystem::remove(path);
}

TEST(InstanceIo, MissingMachinesFieldIsNamed) {
    try {
        instance_from_text(R"({"version": 1, "jobs": []})");
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("machines"), std::string::npos) << e.what();
    }
}

TEST(InstanceIo, RejectsUnknownVersion) {
    EXPECT_THROW(instance_from_text(R"({"version": 7, "machines": 1, "jobs": []})"), ParseError);
}

TEST(InstanceIo, SyntaxErrorReportsLine) {
    try {
        instance_from_text("{\n \"version\": 1,\n \"machines\": ,\n}", "broken.json");
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("broken.json:3"), std::string::npos) << e.what();
    }
}

TEST(InstanceIo, HandWrittenFixtureMatchesProgrammaticInstance) {
    Instance expected;
    expected.machines = 2;
    expected.bucket = "fixture";
    expected.jobs.push_back(job_of(0, {{{0, 3.0}, {1, 4.5}}, {{1, 2.0}}}));
    expected.jobs.push_back(job_of(1, {{{0, 5.0}}}));
    expected.events.push_back({4.0, MachineBreakdown{1, 6.0}});
    expected.events.push_back({7.5, OrderArrival{job_of(2, {{{0, 1.0}, {1, 1.5}}})}});
    expected.events.push_back({9.0, MachineBreakdown{0, std::nullopt}});
    EXPECT_EQ(load_instance(QDSCHED_TEST_DATA "/two_jobs.json"), expected);
}

TEST(InstanceIo, ValidationErrorsSurfaceAsParseErrors) {
    // machine 5 does not exist
    EXPECT_THROW(instance_from_text(
                     R"({"version":1,"machines":2,"jobs":[{"id":0,"ops":[{"candidates":[[5,1.0]]}]}]})"),
                 ParseError);
    // zero processing time
    EXPECT_THROW(instance_from_text(
                     R"({"version":1,"machines":2,"jobs":[{"id":0,"ops":[{"candidates":[[0,0]]}]}]})"),
                 ParseError);
}
