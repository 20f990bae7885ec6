#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "qdsched/probe.hpp"

using namespace qdsched;

namespace {

Job job_of(JobId id, std::vector<std::vector<Candidate>> ops) {
    Job j;
    j.id = id;
    for (std::size_t i = 0; i < ops.size(); ++i) j.ops.push_back({id, static_cast<int>(i), ops[i]});
    return j;
}

// Reference statistics: long-double accumulation, variance as E[x^2] - E[x]^2.
struct RefStats {
    FeatureVector mu, sigma, weights;
};

RefStats reference_stats(const std::vector<Fingerprint>& corpus) {
    RefStats r{};
    long double var[kFingerprintSize] = {};
    long double total = 0;
    for (std::size_t i = 0; i < kFingerprintSize; ++i) {
        long double s = 0, sq = 0;
        for (const auto& f : corpus) {
            s += f.values()[i];
            sq += static_cast<long double>(f.values()[i]) * f.values()[i];
        }
        const long double n = static_cast<long double>(corpus.size());
        const long double mean = s / n;
        var[i] = std::max<long double>(0, sq / n - mean * mean);
        r.mu[i] = static_cast<double>(mean);
        r.sigma[i] = static_cast<double>(std::sqrt(var[i]));
        total += var[i];
    }
    long double wsum = 0;
    for (std::size_t i = 0; i < kFingerprintSize; ++i) wsum += var[i] / (total + 1e-10L);
    for (std::size_t i = 0; i < kFingerprintSize; ++i)
        r.weights[i] = wsum > 0 ? static_cast<double>(var[i] / (total + 1e-10L) / wsum) : 1.0 / 6.0;
    return r;
}

Snapshot snapshot_after(const Instance& inst, const Rule& rule, Time t) {
    Simulator sim(static_view(inst), false);
    sim.run_until(rule, t);
    return sim.snapshot();
}

}  // namespace

TEST(StateFeatures, DensityAndGuards) {
    Instance inst;
    inst.machines = 3;
    inst.jobs.push_back(job_of(0, {{{0, 1}, {1, 2}}, {{1, 1}}, {{2, 1}}}));
    inst.jobs.push_back(job_of(1, {{{0, 1}}, {{1, 1}, {2, 3}}, {{2, 1}}}));
    auto snap = initial_snapshot(inst);
    auto [den, aflex] = state_features(snap);
    EXPECT_DOUBLE_EQ(den, 2.0);                // 6 ops / 3 machines
    EXPECT_DOUBLE_EQ(aflex, 8.0 / 6.0);

    Instance four;
    four.machines = 2;
    four.jobs.push_back(job_of(0, {{{0, 1}}, {{1, 1}}, {{0, 1}}, {{1, 1}}}));
    auto down = initial_snapshot(four);
    for (auto& m : down.machines) m.down_until = 50;
    EXPECT_EQ(down.available_machines(), 0);
    EXPECT_DOUBLE_EQ(state_features(down).first, 4.0);  // M_avail guard

    Instance empty;
    empty.machines = 2;
    EXPECT_DOUBLE_EQ(state_features(initial_snapshot(empty)).second, 1.0);
}

TEST(ProbeFeatures, SingleOperationHasNoSlack) {
    Instance inst;
    inst.machines = 1;
    inst.jobs.push_back(job_of(0, {{{0, 4}}}));
    const auto f = fingerprint(initial_snapshot(inst), classical("SPT"));
    EXPECT_DOUBLE_EQ(f.cpd, 1.0);
    EXPECT_DOUBLE_EQ(f.flex, 1.0);
    EXPECT_DOUBLE_EQ(f.skew_p, 1.0);
    EXPECT_DOUBLE_EQ(f.wait_p, 0.0);
}

TEST(ProbeFeatures, RoutingToSlowMachineShowsInFlex) {
    Instance inst;
    inst.machines = 2;
    inst.jobs.push_back(job_of(0, {{{0, 5}, {1, 9}}}));
    const Rule slow = parse_rule("job: PT | machine: neg(PT)");
    const auto f = fingerprint(initial_snapshot(inst), slow);
    EXPECT_DOUBLE_EQ(f.flex, 9.0 / 5.0);
    EXPECT_DOUBLE_EQ(f.cpd, 1.0);  // C_LB = L_m1 = 9
    EXPECT_DOUBLE_EQ(f.skew_p, 2.0);
}

TEST(ProbeFeatures, NoRemainingWorkIsDegenerate) {
    Instance inst;
    inst.machines = 2;
    inst.jobs.push_back(job_of(0, {{{0, 3}}}));
    const auto done = snapshot_after(inst, classical("SPT"), 10);
    ASSERT_TRUE(done.finished());
    const auto p = probe_features(done, classical("SPT"));
    EXPECT_EQ(p, (std::array<double, 4>{1.0, 1.0, 1.0, 0.0}));
}

TEST(ProbeFeatures, SerialQueueWaitRatio) {
    Instance inst;
    inst.machines = 1;
    inst.jobs.push_back(job_of(0, {{{0, 2}}}));
    inst.jobs.push_back(job_of(1, {{{0, 3}}}));
    const auto f = fingerprint(initial_snapshot(inst), classical("SPT"));
    EXPECT_DOUBLE_EQ(f.wait_p, 2.0 / 5.0);
    EXPECT_DOUBLE_EQ(f.cpd, 1.0);
}

TEST(ProbeFeatures, InFlightWorkCountsTowardLoad) {
    Instance inst;
    inst.machines = 2;
    inst.jobs.push_back(job_of(0, {{{0, 10}}}));
    inst.jobs.push_back(job_of(1, {{{1, 2}}, {{1, 2}}}));
    const auto snap = snapshot_after(inst, classical("SPT"), 4);  // m0 has 6 left, job1 is done
    const auto f = fingerprint(snap, classical("SPT"));
    EXPECT_DOUBLE_EQ(f.skew_p, 2.0);  // loads {6, 0}
    EXPECT_DOUBLE_EQ(f.cpd, 1.0);
    EXPECT_DOUBLE_EQ(f.flex, 1.0);
    EXPECT_DOUBLE_EQ(f.wait_p, 0.0);
}

TEST(ProbeFeatures, BoundsHoldOnRandomSnapshots) {
    EventProfile p;
    p.arrival_rate = 0.02;
    p.breakdown_rate = 0.02;
    p.horizon = 200;
    Scale s;
    s.jobs = {3, 10};
    s.machines = {2, 6};
    Rng rng(77);
    int checked = 0;
    while (checked < 300) {
        const auto inst = generate_synthetic(rng.next(), s, p);
        const Rule probe_rule = rng.bernoulli(0.5) ? classical("SPT") : oracle::random_rule(rng, 3);
        Policy policy = [&](const Snapshot& snap, std::span<const DynamicEvent>) {
            const auto f = fingerprint(snap, probe_rule);
            EXPECT_GE(f.cpd, 1.0);
            EXPECT_GE(f.flex, 1.0);
            EXPECT_GE(f.skew_p, 1.0);
            EXPECT_GE(f.wait_p, 0.0);
            EXPECT_GE(f.den, 0.0);
            if (snap.pool_size() > 0) EXPECT_GE(f.aflex, 1.0);
            ++checked;
            return classical(classical_names()[rng.index(5)]);
        };
        simulate_dynamic(inst, policy);
    }
}

TEST(FeatureStats, IdenticalCorpusHitsEpsilonGuards) {
    const std::vector<Fingerprint> corpus(4, Fingerprint{1.2, 1.1, 1.3, 0.4, 2.0, 1.5});
    const auto st = feature_stats(corpus);
    for (std::size_t i = 0; i < kFingerprintSize; ++i) {
        EXPECT_EQ(st.sigma[i], 0.0);
        EXPECT_DOUBLE_EQ(st.weights[i], 1.0 / 6.0);
    }
    KnowledgeBase kb;
    kb.mu = st.mu;
    kb.sigma = st.sigma;
    for (double z : kb.normalize(corpus[0])) EXPECT_EQ(z, 0.0);
    EXPECT_THROW(feature_stats(std::vector<Fingerprint>(1)), ConfigError);
}

TEST(FeatureStats, MatchesReferenceImplementation) {
    Rng rng(13);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<Fingerprint> corpus;
        const std::size_t n = 2 + rng.index(40);
        const bool constant_den = rng.bernoulli(0.3);
        for (std::size_t i = 0; i < n; ++i)
            corpus.push_back({rng.uniform(1, 3), rng.uniform(1, 2), rng.uniform(1, 1.5), rng.uniform(0, 5),
                              constant_den ? 2.0 : rng.uniform(0, 10), rng.uniform(1, 4)});
        const auto st = feature_stats(corpus);
        const auto ref = reference_stats(corpus);
        double wsum = 0;
        for (std::size_t i = 0; i < kFingerprintSize; ++i) {
            EXPECT_NEAR(st.mu[i], ref.mu[i], 1e-9);
            EXPECT_NEAR(st.sigma[i], ref.sigma[i], 1e-9);
            EXPECT_NEAR(st.weights[i], ref.weights[i], 1e-9);
            EXPECT_GE(st.weights[i], 0.0);
            wsum += st.weights[i];
        }
        EXPECT_NEAR(wsum, 1.0, 1e-9);
    }
}

TEST(KnowledgeBase, NormalizedFeaturesAreStandardized) {
    const auto archive = random_rule_archive(2, 30);
    const auto lib = library(4, 12);
    const auto kb = build_kb(lib, archive, classical("SPT"));
    for (std::size_t i = 0; i < kFingerprintSize; ++i) {
        if (kb.sigma[i] < 1e-3) continue;
        double mean = 0, sq = 0;
        for (const auto& c : kb.cases) mean += c.normalized[i];
        mean /= static_cast<double>(kb.cases.size());
        for (const auto& c : kb.cases) sq += (c.normalized[i] - mean) * (c.normalized[i] - mean);
        EXPECT_LE(std::abs(mean), 1e-6) << fingerprint_names()[i];
        EXPECT_NEAR(std::sqrt(sq / static_cast<double>(kb.cases.size())), 1.0, 1e-6) << fingerprint_names()[i];
    }
    double wsum = 0;
    for (double w : kb.weights) wsum += w;
    EXPECT_NEAR(wsum, 1.0, 1e-9);
}

TEST(KnowledgeBase, CasesHoldTheBestRRulesByLookAhead) {
    const auto archive = random_rule_archive(3, 25);
    const auto lib = library(5, 4);
    KbOptions opt;
    opt.R = 3;
    const auto kb = build_kb(lib, archive, classical("SPT"), opt);
    ASSERT_EQ(kb.cases.size(), 4u);
    for (std::size_t i = 0; i < lib.size(); ++i) {
        std::vector<std::pair<Time, std::string>> all;
        for (const auto* e : archive.elites()) all.push_back({simulate_static(lib[i], e->rule).makespan, e->rule.id});
        std::sort(all.begin(), all.end());
        ASSERT_EQ(kb.cases[i].rules.size(), 3u);
        for (std::size_t r = 0; r < 3; ++r) EXPECT_EQ(kb.cases[i].rules[r], all[r].second);
        EXPECT_EQ(kb.cases[i].raw, fingerprint(initial_snapshot(lib[i]), classical("SPT")));
    }
}

TEST(KnowledgeBase, DeterministicAcrossThreadCounts) {
    const auto archive = random_rule_archive(6, 25);
    const auto lib = library(6, 6);
    KbOptions one, four;
    one.threads = 1;
    four.threads = 4;
    EXPECT_EQ(kb_to_text(build_kb(lib, archive, classical("SPT"), one)),
              kb_to_text(build_kb(lib, archive, classical("SPT"), four)));
}

TEST(KnowledgeBase, PreconditionErrors) {
    const auto archive = random_rule_archive(7, 10);
    const auto lib = library(7, 3);
    EXPECT_THROW(build_kb(std::span(lib.data(), 1), archive, classical("SPT")), ConfigError);
    KbOptions big;
    big.R = archive.size() + 1;
    EXPECT_THROW(build_kb(lib, archive, classical("SPT"), big), ConfigError);
}

TEST(KnowledgeBase, MidRunSnapshotOption) {
    const auto archive = random_rule_archive(8, 20);
    const auto lib = library(8, 5);
    KbOptions opt;
    opt.snapshot_fraction = 0.5;
    const auto kb = build_kb(lib, archive, classical("SPT"), opt);
    for (std::size_t i = 0; i < lib.size(); ++i) {
        const auto snap = library_snapshot(lib[i], classical("SPT"), 0.5);
        EXPECT_GT(snap.clock, 0.0);
        EXPECT_LT(snap.pool_size(), initial_snapshot(lib[i]).pool_size());
        EXPECT_EQ(kb.cases[i].raw, fingerprint(snap, classical("SPT")));
    }
    opt.snapshot_fraction = 1.5;
    EXPECT_THROW(build_kb(lib, archive, classical("SPT"), opt), ConfigError);
}

TEST(KnowledgeBase, PersistenceRoundTrip) {
    const auto archive = random_rule_archive(9, 25);
    const auto lib = library(9, 6);
    const auto kb = build_kb(lib, archive, parse_rule("job: add(PT, WKR) | machine: PTM"));
    const auto back = kb_from_text(kb_to_text(kb));
    EXPECT_EQ(kb_to_text(back), kb_to_text(kb));
    EXPECT_EQ(back.probe_rule.id, kb.probe_rule.id);
    for (std::size_t i = 0; i < kb.cases.size(); ++i) EXPECT_EQ(back.cases[i].normalized, kb.cases[i].normalized);

    auto doc = kb_to_json(kb);
    doc["cases"][0]["rules"].push_back(doc["cases"][0]["rules"][0]);
    EXPECT_THROW(kb_from_json(doc), ParseError);
}
