#pragma once

// Rule generator interface shared by the scripted synthesizer and the
// remote chat-completion backend, plus the prompt texts both see.

#include <optional>

#include "qdsched/behavior_space.hpp"

namespace qdsched {

class GeneratorError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class RequestKind { Seed, Crossover, ElitistMutation, ContrastiveMutation };

inline const char* request_kind_name(RequestKind k) {
    switch (k) {
        case RequestKind::Seed: return "seed";
        case RequestKind::Crossover: return "crossover";
        case RequestKind::ElitistMutation: return "elitist_mutation";
        case RequestKind::ContrastiveMutation: return "contrastive_mutation";
    }
    return "seed";
}

struct GeneratorRequest {
    RequestKind kind = RequestKind::Seed;
    int persona = -1;          // seed requests; -1 selects the generic prompt
    std::vector<Rule> parents;  // crossover: 2, mutations: 1
    std::string insights;       // elitist mutation
    std::optional<Descriptor> profile;  // contrastive mutation
    double temperature = 0.7;
    std::uint64_t nonce = 0;  // per-request seed; differs between retries
};

class RuleGenerator {
public:
    virtual ~RuleGenerator() = default;
    /// Free-form reply expected to contain one rule in a fenced block.
    virtual std::string generate(const GeneratorRequest& req) = 0;
    virtual std::string name() const = 0;
    virtual bool deterministic() const = 0;
};

// ---------------------------------------------------------------------------
// Prompts

struct Persona {
    const char* name;
    const char* philosophy;
};

inline constexpr std::size_t kPersonaCount = 7;

inline const std::array<Persona, kPersonaCount>& personas() {
    static const std::array<Persona, kPersonaCount> list = {{
        {"Extreme Greedy",
         "Chase immediate local optimality. Favour whatever finishes soonest right now and route each operation "
         "to the machine that processes it fastest. Ignore the future."},
        {"Load Balancer",
         "Fairness across machines comes first. Keep machine workloads even, avoid queues piling up on a single "
         "machine and prefer lightly loaded, under-utilised machines."},
        {"Global Planner",
         "Think about downstream burden. Prefer jobs whose remaining work and remaining operations make them "
         "likely to become the critical path, and account for the size of the next operation."},
        {"Deadline Chaser",
         "Urgency dominates. Jobs with much remaining work or many remaining operations are at risk of finishing "
         "late and must be pushed forward aggressively."},
        {"Contrarian",
         "Go against conventional wisdom: front-load long operations so that short ones fill the gaps later, and "
         "be willing to reverse the usual preferences."},
        {"Formula Synthesizer",
         "Build nonlinear scoring functions: ratios, products, minima and maxima of several shop-floor "
         "quantities, with tuned constants."},
        {"Hybrid Hierarchical",
         "Use conditional, regime-based logic: detect whether the shop is congested or calm (for example through "
         "the pool density) and switch between different priority formulas accordingly."},
    }};
    return list;
}

inline const std::string& task_description() {
    static const std::string text =
        "You design priority dispatching rules for a dynamic flexible job shop. Each operation can run on one of "
        "several eligible machines with machine-dependent processing times; orders arrive and machines break down "
        "while the shop runs. The objective is to minimise makespan.\n"
        "A rule has two expressions. The job expression scores every ready operation and the lowest score is "
        "dispatched first. The machine expression then scores the idle eligible machines for that operation and "
        "the lowest score wins.\n"
        "Terminals: PT (processing time; in the job expression the fastest eligible time), WKR (work remaining "
        "in the job), RM (operations remaining), SO (processing time of the job's next operation, 0 if last), "
        "PTM (work assigned to the machine), UR (machine utilisation), QL (ready operations that could use the "
        "machine), DEN (pending operations per available machine), NOW (current time).\n"
        "Functions: add(a,b) sub(a,b) mul(a,b) pdiv(a,b) (protected division) min(a,b) max(a,b) neg(a) "
        "ifgt(a,b,then,else). Numeric constants are allowed; infix + - * / and parentheses also work.\n"
        "Syntax: job: <expr> | machine: <expr>\n"
        "Example: job: add(PT, mul(0.5, WKR)) | machine: PTM\n"
        "Reply with exactly one rule inside a fenced block that starts with ```dsl.";
    return text;
}

inline std::string describe_profile(const Descriptor& d) {
    auto level = [](double v) { return v < 0.34 ? "low" : v < 0.67 ? "medium" : "high"; };
    return "load skewness " + format_number(d.skew) + " (" + level(d.skew) + "), waiting ratio " +
           format_number(d.wait) + " (" + level(d.wait) + "), code novelty " + format_number(d.div) + " (" +
           level(d.div) + ")";
}

struct Prompt {
    std::string system;
    std::string user;
};

inline Prompt render_prompt(const GeneratorRequest& req) {
    Prompt p;
    p.system = task_description();
    switch (req.kind) {
        case RequestKind::Seed:
            if (req.persona >= 0) {
                const auto& persona = personas().at(static_cast<std::size_t>(req.persona));
                p.user = "Adopt the scheduling philosophy \"" + std::string(persona.name) + "\": " + persona.philosophy +
                         "\nWrite one original rule that embodies this philosophy.";
            } else {
                p.user = "Write one good dispatching rule.";
            }
            break;
        case RequestKind::Crossover:
            p.user = "Two strong rules with very different behaviour:\nRule A: " + req.parents.at(0).source_text +
                     "\nRule B: " + req.parents.at(1).source_text +
                     "\nSynthesize a single rule that combines the strengths of both.";
            break;
        case RequestKind::ElitistMutation:
            p.user = "The best rule found so far:\n" + req.parents.at(0).source_text +
                     "\nDesign insights from recent generations:\n" +
                     (req.insights.empty() ? std::string("(none yet)") : req.insights) +
                     "\nMake a small, targeted modification that could improve it further.";
            break;
        case RequestKind::ContrastiveMutation:
            p.user = "This rule sits in a crowded region of behaviour space:\n" + req.parents.at(0).source_text +
                     "\nIts behavioural profile: " + (req.profile ? describe_profile(*req.profile) : "unknown") +
                     "\nWrite a variant with deliberately opposing characteristics, for example reversing its "
                     "monotonic preferences or changing how far ahead it looks.";
            break;
    }
    return p;
}

/// Contents of the first fenced code block (preferring one tagged dsl), or
/// the whole reply when it has no fence.
inline std::string extract_dsl(const std::string& reply) {
    auto block_at = [&](std::size_t open) -> std::optional<std::string> {
        const std::size_t eol = reply.find('\n', open);
        if (eol == std::string::npos) return std::nullopt;
        const std::size_t close = reply.find("```", eol + 1);
        if (close == std::string::npos) return std::nullopt;
        return reply.substr(eol + 1, close - eol - 1);
    };
    if (auto tagged = reply.find("```dsl"); tagged != std::string::npos)
        if (auto b = block_at(tagged)) return *b;
    if (auto any = reply.find("```"); any != std::string::npos)
        if (auto b = block_at(any)) return *b;
    return reply;
}

/// Parses the first non-empty, non-comment line of the extracted block.
inline Rule parse_reply(const std::string& reply, Provenance prov) {
    std::istringstream in(extract_dsl(reply));
    std::string line, text;
    while (std::getline(in, line)) {
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        text = line.substr(first);
        while (!text.empty() && (text.back() == '\r' || text.back() == ' ')) text.pop_back();
        break;
    }
    if (text.empty()) throw ParseError("reply contains no rule");
    return parse_rule(text, prov);
}

}  // namespace qdsched
