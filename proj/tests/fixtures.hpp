#pragma once

#include "oracles.hpp"
#include "qdsched/archive.hpp"

// Archive filled with classical and random rules scored on a calibration set.
inline qdsched::EliteArchive random_rule_archive(std::uint64_t seed, int offers) {
    using namespace qdsched;
    const auto calib = calibration_set(seed);
    EliteArchive archive;
    CorpusStats corpus;
    Rng rng(seed);
    std::vector<Rule> offered;
    for (const auto& name : classical_names()) offered.push_back(classical(name));
    while (static_cast<int>(offered.size()) < offers) offered.push_back(oracle::random_rule(rng, 4));
    std::vector<Rule> members;
    for (const auto& r : offered) {
        const auto d = extract_descriptor(r, calib, corpus, members);
        if (!d) continue;
        if (archive.insert(r, d->descriptor, d->evaluation.fitness, d->evaluation.raw).outcome !=
            InsertOutcome::Rejected)
            members = archive.rules();
    }
    return archive;
}

inline std::vector<qdsched::Instance> library(std::uint64_t seed, int n) {
    qdsched::Scale s;
    s.jobs = {5, 10};
    s.machines = {3, 6};
    std::vector<qdsched::Instance> out;
    for (int i = 0; i < n; ++i) out.push_back(qdsched::generate_synthetic(qdsched::derive_seed(seed, std::to_string(i)), s, {}));
    return out;
}
