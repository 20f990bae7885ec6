#pragma once

// Offline quality-diversity loop: persona seeding, then per generation
// distance-maximizing crossover, elitist mutation and contrastive mutation.
// Requests of one generation are built from the archive as it stood when the
// generation began; their children are inserted in request order afterwards.

#include <deque>
#include <map>

#include "qdsched/archive.hpp"
#include "qdsched/generator.hpp"
#include "qdsched/parallel.hpp"

namespace qdsched {

struct EvolutionConfig {
    std::uint64_t seed = 1;
    std::uint64_t calibration_seed = 1;
    int variants_per_persona = 3;
    int generations = 10;
    int crossovers = 4;   // per generation
    int elitist = 2;      // per generation
    int contrastive = 3;  // per generation
    std::size_t max_rules = 0;  // valid evaluated rules; 0 = unlimited
    double seed_temperature = 1.0;
    double temperature = 0.7;
    bool enable_personas = true;
    bool enable_feature_space = true;
    int retries = 3;  // attempts per request
    int insight_window = 3;
    std::size_t crowded_pool = 5;
    int resolution = 10;
    unsigned threads = 1;

    void validate() const {
        if (variants_per_persona < 1) throw ConfigError("variants_per_persona must be >= 1");
        if (generations < 0 || crossovers < 0 || elitist < 0 || contrastive < 0)
            throw ConfigError("generation and operator counts must be >= 0");
        if (retries < 1) throw ConfigError("retries must be >= 1");
        if (insight_window < 0) throw ConfigError("insight_window must be >= 0");
        if (crowded_pool < 1) throw ConfigError("crowded_pool must be >= 1");
        if (!(seed_temperature >= 0.0) || !(temperature >= 0.0)) throw ConfigError("temperatures must be >= 0");
    }
};

inline nlohmann::json config_to_json(const EvolutionConfig& c) {
    return {{"seed", c.seed},
            {"calibration_seed", c.calibration_seed},
            {"variants_per_persona", c.variants_per_persona},
            {"generations", c.generations},
            {"crossovers", c.crossovers},
            {"elitist", c.elitist},
            {"contrastive", c.contrastive},
            {"max_rules", c.max_rules},
            {"seed_temperature", c.seed_temperature},
            {"temperature", c.temperature},
            {"enable_personas", c.enable_personas},
            {"enable_feature_space", c.enable_feature_space},
            {"retries", c.retries},
            {"insight_window", c.insight_window},
            {"crowded_pool", c.crowded_pool},
            {"resolution", c.resolution}};
}

/// Overlays the keys present in `j` onto `base`; unknown keys are errors.
inline EvolutionConfig config_from_json(const nlohmann::json& j, EvolutionConfig base = {},
                                        const std::string& origin = "config") {
    if (!j.is_object()) throw ParseError(origin + ": expected an object");
    const auto known = config_to_json(base);
    for (const auto& [key, value] : j.items())
        if (!known.contains(key)) throw ParseError(origin + ": unknown key '" + key + "'");
    auto get = [&](const char* key, auto& field) {
        if (!j.contains(key)) return;
        try {
            field = j.at(key).get<std::decay_t<decltype(field)>>();
        } catch (const nlohmann::json::exception&) {
            throw ParseError(origin + "." + key + ": wrong type");
        }
    };
    get("seed", base.seed);
    get("calibration_seed", base.calibration_seed);
    get("variants_per_persona", base.variants_per_persona);
    get("generations", base.generations);
    get("crossovers", base.crossovers);
    get("elitist", base.elitist);
    get("contrastive", base.contrastive);
    get("max_rules", base.max_rules);
    get("seed_temperature", base.seed_temperature);
    get("temperature", base.temperature);
    get("enable_personas", base.enable_personas);
    get("enable_feature_space", base.enable_feature_space);
    get("retries", base.retries);
    get("insight_window", base.insight_window);
    get("crowded_pool", base.crowded_pool);
    get("resolution", base.resolution);
    return base;
}

struct GenerationRecord {
    int generation = 0;  // 0 = seeding
    double best_fitness = 0.0;
    std::size_t occupied_cells = 0;
    std::size_t inserted = 0;
    std::size_t replaced = 0;
    std::size_t rejected = 0;
    std::size_t invalid = 0;   // parsed but failed evaluation
    std::size_t failures = 0;  // requests that produced no rule after all retries
    std::size_t rules_evaluated = 0;  // cumulative
    std::map<std::string, std::size_t> inserted_by_kind;  // new cells per request kind
};

inline nlohmann::json record_to_json(const GenerationRecord& r) {
    return {{"generation", r.generation}, {"best_fitness", r.best_fitness}, {"occupied_cells", r.occupied_cells},
            {"inserted", r.inserted},     {"replaced", r.replaced},         {"rejected", r.rejected},
            {"invalid", r.invalid},       {"failures", r.failures},         {"rules_evaluated", r.rules_evaluated},
            {"inserted_by_kind", r.inserted_by_kind}};
}

inline std::string run_log_to_jsonl(const std::vector<GenerationRecord>& log) {
    std::string out;
    for (const auto& r : log) out += record_to_json(r).dump() + "\n";
    return out;
}

struct EvolutionResult {
    EliteArchive archive;
    std::vector<GenerationRecord> log;
    std::vector<std::string> warnings;
    std::size_t rules_evaluated = 0;
    bool generator_failed = false;  // every request of some phase failed
};

namespace detail {

struct Outcome {
    std::optional<Rule> rule;
    std::string error;
};

inline Outcome request_rule(RuleGenerator& gen, GeneratorRequest req, Provenance prov, int retries) {
    Outcome out;
    const std::uint64_t base = req.nonce;
    for (int attempt = 0; attempt < retries; ++attempt) {
        req.nonce = derive_seed(base, "attempt-" + std::to_string(attempt));
        try {
            out.rule = parse_reply(gen.generate(req), prov);
            return out;
        } catch (const ParseError& e) {
            out.error = std::string("unparseable reply: ") + e.what();
        } catch (const ConfigError& e) {
            out.error = std::string("invalid rule: ") + e.what();
        } catch (const GeneratorError& e) {
            out.error = std::string("generator error: ") + e.what();
        }
    }
    return out;
}

class EvolutionRun {
public:
    EvolutionRun(const EvolutionConfig& cfg, RuleGenerator& gen, std::span<const Instance> calibration)
        : cfg_(cfg), gen_(gen), calibration_(calibration), rng_(derive_seed(cfg.seed, "evolution")) {
        result_.archive = EliteArchive(cfg.resolution);
    }

    EvolutionResult run() {
        std::vector<std::pair<GeneratorRequest, Provenance>> seeds;
        for (std::size_t k = 0; k < kPersonaCount; ++k)
            for (int v = 0; v < cfg_.variants_per_persona; ++v) {
                GeneratorRequest req;
                req.kind = RequestKind::Seed;
                req.persona = cfg_.enable_personas ? static_cast<int>(k) : -1;
                req.temperature = cfg_.seed_temperature;
                Provenance prov{Provenance::Kind::Persona, req.persona};
                if (!cfg_.enable_personas) prov = {Provenance::Kind::External};
                seeds.emplace_back(std::move(req), prov);
            }
        process(0, seeds);
        if (result_.archive.empty()) {
            result_.generator_failed = true;
            result_.warnings.push_back("seeding produced no valid rule; aborting");
            return std::move(result_);
        }
        for (int g = 1; g <= cfg_.generations && !budget_spent(); ++g) process(g, generation_requests());
        return std::move(result_);
    }

private:
    bool budget_spent() const { return cfg_.max_rules > 0 && result_.rules_evaluated >= cfg_.max_rules; }

    const Elite& uniform_elite(const std::vector<const Elite*>& pool) { return *pool[rng_.index(pool.size())]; }

    std::vector<std::pair<GeneratorRequest, Provenance>> generation_requests() {
        std::vector<std::pair<GeneratorRequest, Provenance>> reqs;
        const EliteArchive& archive = result_.archive;
        const auto all = archive.elites();
        const auto ranked = archive.top_elites(archive.size());
        const std::size_t quartile = std::max<std::size_t>(1, (ranked.size() + 3) / 4);
        const std::vector<const Elite*> top(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(quartile));

        if (archive.size() >= 2)
            for (int i = 0; i < cfg_.crossovers; ++i) {
                const Elite& a = uniform_elite(top);
                const Elite* b = nullptr;
                if (cfg_.enable_feature_space) {
                    b = &archive.farthest_from(a.descriptor);
                } else {
                    do b = &uniform_elite(all);
                    while (b == &a);
                }
                GeneratorRequest req;
                req.kind = RequestKind::Crossover;
                req.parents = {a.rule, b->rule};
                req.temperature = cfg_.temperature;
                reqs.emplace_back(std::move(req), Provenance{Provenance::Kind::Crossover});
            }
        for (int i = 0; i < cfg_.elitist; ++i) {
            GeneratorRequest req;
            req.kind = RequestKind::ElitistMutation;
            req.parents = {ranked.front()->rule};
            req.insights = insights_text();
            req.temperature = cfg_.temperature;
            reqs.emplace_back(std::move(req), Provenance{Provenance::Kind::Mutation});
        }
        if (archive.size() >= 2) {
            const auto crowded = cfg_.enable_feature_space ? archive.most_crowded(cfg_.crowded_pool) : all;
            for (int i = 0; i < cfg_.contrastive; ++i) {
                const Elite& p = uniform_elite(crowded);
                GeneratorRequest req;
                req.kind = RequestKind::ContrastiveMutation;
                req.parents = {p.rule};
                req.profile = p.descriptor;
                req.temperature = cfg_.temperature;
                reqs.emplace_back(std::move(req), Provenance{Provenance::Kind::Mutation});
            }
        }
        return reqs;
    }

    std::string insights_text() const {
        std::string out;
        for (const auto& line : insights_) out += line + "\n";
        return out;
    }

    void process(int generation, std::vector<std::pair<GeneratorRequest, Provenance>> reqs) {
        for (std::size_t i = 0; i < reqs.size(); ++i)
            reqs[i].first.nonce = derive_seed(cfg_.seed, "g" + std::to_string(generation) + "-r" + std::to_string(i));

        std::vector<Outcome> outcomes(reqs.size());
        parallel_for(
            reqs.size(),
            [&](std::size_t i) { outcomes[i] = request_rule(gen_, reqs[i].first, reqs[i].second, cfg_.retries); },
            cfg_.threads);
        std::vector<std::optional<RuleEvaluation>> evals(reqs.size());
        parallel_for(
            reqs.size(),
            [&](std::size_t i) {
                if (outcomes[i].rule) evals[i] = evaluate_rule(*outcomes[i].rule, calibration_);
            },
            cfg_.threads);

        GenerationRecord rec;
        rec.generation = generation;
        const double best_before = result_.archive.empty() ? kInfinity : result_.archive.best()->fitness;
        std::vector<CanonicalRule> members;
        for (const auto* e : result_.archive.elites()) members.push_back(canonicalize(e->rule));
        std::size_t produced = 0;
        for (std::size_t i = 0; i < reqs.size(); ++i) {
            if (!outcomes[i].rule) {
                ++rec.failures;
                result_.warnings.push_back("generation " + std::to_string(generation) + " request " +
                                           std::to_string(i) + " (" + request_kind_name(reqs[i].first.kind) +
                                           "): skipped after " + std::to_string(cfg_.retries) + " attempts; " +
                                           outcomes[i].error);
                continue;
            }
            ++produced;
            if (budget_spent()) continue;
            if (!evals[i]) {
                ++rec.invalid;
                continue;
            }
            ++result_.rules_evaluated;
            const Rule& rule = *outcomes[i].rule;
            const CanonicalRule canon = canonicalize(rule);
            const Descriptor d = make_descriptor(evals[i]->raw, diversity(canon, members), corpus_);
            const auto res = result_.archive.insert(rule, d, evals[i]->fitness, evals[i]->raw);
            switch (res.outcome) {
                case InsertOutcome::Inserted:
                    ++rec.inserted;
                    ++rec.inserted_by_kind[request_kind_name(reqs[i].first.kind)];
                    break;
                case InsertOutcome::Replaced: ++rec.replaced; break;
                case InsertOutcome::Rejected: ++rec.rejected; break;
            }
            if (res.outcome != InsertOutcome::Rejected) {
                members.clear();
                for (const auto* e : result_.archive.elites()) members.push_back(canonicalize(e->rule));
            }
        }
        if (!reqs.empty() && produced == 0) {
            result_.generator_failed = true;
            result_.warnings.push_back("generation " + std::to_string(generation) + ": every request failed");
        }
        rec.occupied_cells = result_.archive.occupied_cells();
        rec.best_fitness = result_.archive.empty() ? 0.0 : result_.archive.best()->fitness;
        rec.rules_evaluated = result_.rules_evaluated;
        result_.log.push_back(rec);

        if (!result_.archive.empty()) {
            const Elite& best = *result_.archive.best();
            const double delta = std::isfinite(best_before) ? best.fitness - best_before : 0.0;
            insights_.push_back("generation " + std::to_string(generation) + ": best " + best.rule.source_text +
                                " fitness " + format_number(best.fitness) + " change " + format_number(delta));
            while (insights_.size() > static_cast<std::size_t>(cfg_.insight_window)) insights_.pop_front();
        }
    }

    const EvolutionConfig& cfg_;
    RuleGenerator& gen_;
    std::span<const Instance> calibration_;
    Rng rng_;
    CorpusStats corpus_;
    std::deque<std::string> insights_;
    EvolutionResult result_;
};

}  // namespace detail

inline EvolutionResult run_evolution(const EvolutionConfig& cfg, RuleGenerator& gen,
                                     std::span<const Instance> calibration) {
    cfg.validate();
    if (calibration.empty()) throw ConfigError("calibration set is empty");
    return detail::EvolutionRun(cfg, gen, calibration).run();
}

}  // namespace qdsched
