#include <gtest/gtest.h>

#include <set>

#include "oracles.hpp"
#include "qdsched/scripted_generator.hpp"

using namespace qdsched;

namespace {

GeneratorRequest seed_request(int persona, std::uint64_t nonce) {
    GeneratorRequest r;
    r.kind = RequestKind::Seed;
    r.persona = persona;
    r.temperature = 1.0;
    r.nonce = nonce;
    return r;
}

bool mentions(const Expr& e, Terminal t) {
    if (e.op() == OpCode::Terminal) return e.term() == t;
    for (const auto& a : e.args())
        if (mentions(a, t)) return true;
    return false;
}

std::size_t argmin(const Expr& e, const std::vector<DispatchContext>& ctxs) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < ctxs.size(); ++i)
        if (evaluate(e, ctxs[i]) < evaluate(e, ctxs[best])) best = i;
    return best;
}

std::size_t argmax(const Expr& e, const std::vector<DispatchContext>& ctxs) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < ctxs.size(); ++i)
        if (evaluate(e, ctxs[i]) > evaluate(e, ctxs[best])) best = i;
    return best;
}

}  // namespace

TEST(ScriptedGenerator, SameRequestSameReply) {
    ScriptedGenerator a, b;
    for (int k = -1; k < 7; ++k)
        for (std::uint64_t nonce = 1; nonce <= 20; ++nonce)
            EXPECT_EQ(a.generate(seed_request(k, nonce)), b.generate(seed_request(k, nonce)));
}

TEST(ScriptedGenerator, NoncesVaryTheReply) {
    ScriptedGenerator gen;
    std::set<std::string> replies;
    for (std::uint64_t nonce = 1; nonce <= 30; ++nonce) replies.insert(gen.generate(seed_request(5, nonce)));
    EXPECT_GT(replies.size(), 20u);
}

TEST(ScriptedGenerator, SevenPersonasTimesThreeVariantsAreAllValid) {
    ScriptedGenerator gen;
    int valid = 0;
    for (int k = 0; k < 7; ++k)
        for (int v = 0; v < 3; ++v) {
            const Rule r = parse_reply(gen.generate(seed_request(k, derive_seed(k, std::to_string(v)))),
                                       {Provenance::Kind::Persona, k});
            EXPECT_LE(r.job.depth(), kMaxDepth);
            ++valid;
        }
    EXPECT_EQ(valid, 21);
}

TEST(ScriptedGenerator, PersonasFavourTheirTerminals) {
    ScriptedGenerator gen;
    int chaser_urgency = 0, balancer_load = 0;
    for (std::uint64_t nonce = 0; nonce < 40; ++nonce) {
        const Rule chaser = parse_reply(gen.generate(seed_request(3, nonce)), {});
        if (mentions(chaser.job, Terminal::WKR) || mentions(chaser.job, Terminal::RM)) ++chaser_urgency;
        const Rule balancer = parse_reply(gen.generate(seed_request(1, nonce)), {});
        if (mentions(balancer.machine, Terminal::PTM) || mentions(balancer.machine, Terminal::UR)) ++balancer_load;
    }
    EXPECT_EQ(chaser_urgency, 40);
    EXPECT_EQ(balancer_load, 40);
}

TEST(ScriptedGenerator, GarbageRateOneNeverParses) {
    ScriptedGenerator gen({.garbage_rate = 1.0});
    for (std::uint64_t nonce = 0; nonce < 20; ++nonce)
        EXPECT_THROW(parse_reply(gen.generate(seed_request(0, nonce)), {}), ParseError);
}

TEST(ScriptedGenerator, CrossoverChildIsValidAndDistinctFromBothParents) {
    Rng rng(11);
    for (int i = 0; i < 300; ++i) {
        const Rule a = oracle::random_rule(rng, 1 + static_cast<int>(rng.index(5)));
        Rule b = oracle::random_rule(rng, 1 + static_cast<int>(rng.index(5)));
        if (b.id == a.id) continue;
        Rng op(derive_seed(7, std::to_string(i)));
        const Rule child = ScriptedGenerator::crossover(op, a, b);
        const Rule reparsed = parse_rule(pretty(child));
        EXPECT_EQ(reparsed.id, child.id);
        EXPECT_NE(child.id, a.id);
        EXPECT_NE(child.id, b.id);
    }
}

TEST(ScriptedGenerator, ElitistChildStaysClose) {
    Rng rng(12);
    int checked = 0;
    while (checked < 200) {
        const Rule parent = oracle::random_rule(rng, 5);
        const auto c = canonicalize(parent);
        if (c.job.size() < 10 || c.machine.size() < 10) continue;
        Rng op(derive_seed(8, std::to_string(checked)));
        const Rule child = ScriptedGenerator::elitist(op, parent, "");
        EXPECT_NE(child.id, parent.id);
        EXPECT_LE(edit_distance(child, parent), 0.3) << pretty(parent) << "  ->  " << pretty(child);
        ++checked;
    }
}

TEST(ScriptedGenerator, ElitistExampleSingleNodeGrowth) {
    const Rule parent = parse_rule("job: sub(add(mul(PT, WKR), min(SO, RM)), max(QL, DEN)) | machine: PTM");
    const Rule child =
        parse_rule("job: sub(add(mul(add(PT, mul(0.1, WKR)), WKR), min(SO, RM)), max(QL, DEN)) | machine: PTM");
    EXPECT_LE(edit_distance(child, parent), 0.3);
}

TEST(ScriptedGenerator, ReversedPreferenceReversesArgmin) {
    Rng rng(13);
    for (int i = 0; i < 200; ++i) {
        const Rule parent = oracle::random_rule(rng, 4);
        std::vector<DispatchContext> ctxs;
        for (int c = 0; c < 8; ++c) ctxs.push_back(oracle::random_context(rng));
        std::set<double> scores;
        for (const auto& ctx : ctxs) scores.insert(evaluate(parent.job, ctx));
        if (scores.size() != ctxs.size()) continue;  // ties make argmin ambiguous
        const Expr reversed = ScriptedGenerator::reverse_preference(parent.job);
        EXPECT_EQ(argmin(reversed, ctxs), argmax(parent.job, ctxs));
    }
}

TEST(ScriptedGenerator, ShiftHorizonTogglesLookAhead) {
    Rng rng(14);
    const Expr far = parse_expr("add(PT, mul(0.5, WKR))");
    const Expr myopic = ScriptedGenerator::shift_horizon(rng, far);
    for (Terminal t : {Terminal::SO, Terminal::WKR, Terminal::RM}) EXPECT_FALSE(mentions(myopic, t));
    const Expr grown = ScriptedGenerator::shift_horizon(rng, parse_expr("PT"));
    EXPECT_TRUE(mentions(grown, Terminal::SO) || mentions(grown, Terminal::WKR) || mentions(grown, Terminal::RM));
}

TEST(ScriptedGenerator, ContrastiveOpposesSkewProfile) {
    const Rule parent = parse_rule("job: PT | machine: PT");
    for (std::uint64_t nonce = 0; nonce < 30; ++nonce) {
        Rng skewed(nonce), even(nonce);
        const Rule from_skewed = ScriptedGenerator::contrastive(skewed, parent, Descriptor{0.9, 0.5, 0.5});
        EXPECT_TRUE(mentions(from_skewed.machine, Terminal::PTM) || mentions(from_skewed.machine, Terminal::UR));
        const Rule from_even = ScriptedGenerator::contrastive(even, parent, Descriptor{0.1, 0.5, 0.5});
        EXPECT_TRUE(mentions(from_even.machine, Terminal::PT));
        EXPECT_NE(from_even.id, parent.id);
    }
}

TEST(ScriptedGenerator, ContrastiveRepliesVary) {
    ScriptedGenerator gen;
    GeneratorRequest req;
    req.kind = RequestKind::ContrastiveMutation;
    req.parents = {classical("SPT")};
    req.profile = Descriptor{0.2, 0.4, 0.6};
    std::set<std::string> ids;
    for (std::uint64_t nonce = 0; nonce < 30; ++nonce) {
        req.nonce = nonce;
        ids.insert(parse_reply(gen.generate(req), {}).id);
    }
    EXPECT_GT(ids.size(), 15u);
}

TEST(Prompts, SeedPromptsNameTheirPersona) {
    for (int k = 0; k < 7; ++k) {
        const Prompt p = render_prompt(seed_request(k, 0));
        EXPECT_NE(p.user.find(personas()[static_cast<std::size_t>(k)].name), std::string::npos);
        EXPECT_EQ(p.system, task_description());
    }
    const Prompt generic = render_prompt(seed_request(-1, 0));
    for (const auto& persona : personas()) EXPECT_EQ(generic.user.find(persona.name), std::string::npos);
}

TEST(Prompts, OperatorPromptsEmbedTheirInputs) {
    GeneratorRequest req;
    req.kind = RequestKind::Crossover;
    req.parents = {classical("SPT"), classical("SRM")};
    Prompt p = render_prompt(req);
    EXPECT_NE(p.user.find(req.parents[0].source_text), std::string::npos);
    EXPECT_NE(p.user.find(req.parents[1].source_text), std::string::npos);

    req.kind = RequestKind::ElitistMutation;
    req.parents = {classical("SPT")};
    req.insights = "generation 2: best job: PT | machine: PTM fitness 10 change -1";
    p = render_prompt(req);
    EXPECT_NE(p.user.find(req.insights), std::string::npos);

    req.kind = RequestKind::ContrastiveMutation;
    req.profile = Descriptor{0.8, 0.1, 0.5};
    p = render_prompt(req);
    EXPECT_NE(p.user.find("load skewness 0.8 (high)"), std::string::npos);
    EXPECT_NE(p.user.find("waiting ratio 0.1 (low)"), std::string::npos);
}

TEST(Prompts, MentionOnlyTheRuleGrammar) {
    const std::string& t = task_description();
    for (Terminal term : kAllTerminals) EXPECT_NE(t.find(std::string(terminal_name(term))), std::string::npos);
    EXPECT_NE(t.find("```dsl"), std::string::npos);
}

TEST(ReplyParsing, PrefersTaggedFence) {
    const std::string reply = "Here you go:\n```\nnot a rule\n```\n```dsl\n# comment\n\njob: PT | machine: PTM\n```\n";
    EXPECT_EQ(parse_reply(reply, {}).id, parse_rule("job: PT | machine: PTM").id);
}

TEST(ReplyParsing, AcceptsUntaggedFenceAndBareText) {
    EXPECT_EQ(parse_reply("```\njob: WKR | machine: PT\n```", {}).id, parse_rule("job: WKR | machine: PT").id);
    EXPECT_EQ(parse_reply("job: WKR | machine: PT\n", {}).id, parse_rule("job: WKR | machine: PT").id);
    EXPECT_EQ(parse_reply("```dsl\r\njob: WKR | machine: PT\r\n```", {}).id, parse_rule("job: WKR | machine: PT").id);
}

TEST(ReplyParsing, RejectsEmptyAndMalformedReplies) {
    EXPECT_THROW(parse_reply("```dsl\n\n# nothing\n```", {}), ParseError);
    EXPECT_THROW(parse_reply("", {}), ParseError);
    EXPECT_THROW(parse_reply("```dsl\njob: PT + | machine: PT\n```", {}), ParseError);
}

TEST(ReplyParsing, KeepsProvenance) {
    const Rule r = parse_reply("job: PT | machine: PT", {Provenance::Kind::Persona, 4});
    EXPECT_EQ(r.provenance.str(), "persona:4");
}
