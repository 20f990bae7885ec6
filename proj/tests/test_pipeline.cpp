#include <gtest/gtest.h>

#include <filesystem>

#include "qdsched/report.hpp"
#include "qdsched/scripted_generator.hpp"

using namespace qdsched;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("qdsched-pipeline-" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::vector<NamedInstance> small_suite(std::uint64_t seed, int per_bucket) {
    std::vector<NamedInstance> out;
    for (const auto& b : difficulty_names())
        for (auto& n : name_instances(generate_suite(seed, difficulty(b), per_bucket), "")) out.push_back(n);
    return out;
}

EliteArchive small_archive() {
    EvolutionConfig cfg;
    cfg.generations = 2;
    ScriptedGenerator gen;
    return run_evolution(cfg, gen, calibration_set(1)).archive;
}

}  // namespace

TEST(Strategies, ParsesEveryForm) {
    EXPECT_EQ(parse_strategy("probe").strategy, Strategy::Probe);
    EXPECT_EQ(parse_strategy("top").strategy, Strategy::Top);
    EXPECT_EQ(parse_strategy("random").strategy, Strategy::Random);
    const auto gp = parse_strategy("gp");
    EXPECT_TRUE(gp.needs_gp);
    EXPECT_FALSE(gp.rule);
    EXPECT_EQ(parse_strategy("SPT").rule->id, classical("SPT").id);
    const auto fixed = parse_strategy("fixed:job: WKR | machine: PTM");
    EXPECT_EQ(fixed.strategy, Strategy::Fixed);
    EXPECT_EQ(fixed.rule->id, parse_rule("job: WKR | machine: PTM").id);
    EXPECT_THROW(parse_strategy("best"), ConfigError);
    EXPECT_THROW(parse_strategy("fixed:job: PT +"), ParseError);
}

TEST(Strategies, CommaListKeepsOrder) {
    const auto s = parse_strategies("probe,,SRM,top");
    ASSERT_EQ(s.size(), 3u);
    EXPECT_EQ(s[0].label, "probe");
    EXPECT_EQ(s[1].label, "SRM");
    EXPECT_EQ(s[2].label, "top");
    EXPECT_THROW(parse_strategies(","), ConfigError);
}

TEST(InstanceDir, SortedByNameAndTolerantOfBrokenFiles) {
    const auto dir = fresh_dir("dir");
    const auto suite = small_suite(4, 1);
    for (auto it = suite.rbegin(); it != suite.rend(); ++it) save_instance(it->instance, (dir / (it->name + ".json")).string());
    detail::write_file((dir / "notes.txt").string(), "ignored");
    auto loaded = load_instance_dir(dir.string());
    ASSERT_EQ(loaded.size(), 3u);
    EXPECT_EQ(loaded[0].name, "S1-000");
    EXPECT_EQ(loaded[2].name, "S3-000");
    EXPECT_EQ(loaded[1].instance, suite[1].instance);

    detail::write_file((dir / "S0-bad.json").string(), "{\"machines\": ");
    EXPECT_THROW(load_instance_dir(dir.string()), ParseError);
    loaded = load_instance_dir(dir.string(), true);
    ASSERT_EQ(loaded.size(), 4u);
    EXPECT_EQ(loaded[0].name, "S0-bad");
    EXPECT_FALSE(loaded[0].error.empty());
    EXPECT_THROW(load_instance_dir((dir / "missing").string()), ConfigError);
}

TEST(Bench, OneRowPerStrategyPerBucketAndErrorsRecorded) {
    auto tests = small_suite(6, 2);
    tests.push_back({"broken", {}, "broken.json: cannot open file"});
    const auto archive = small_archive();
    const auto kb = build_kb(std::vector<Instance>{tests[0].instance, tests[2].instance, tests[4].instance}, archive,
                             classical("SPT"), {});
    const auto strategies = parse_strategies("probe,top,random,SPT");
    const auto results = run_bench(tests, strategies, &kb, &archive, {5, 1, 2});
    ASSERT_EQ(results.size(), tests.size() * strategies.size());
    std::size_t errors = 0;
    for (const auto& r : results) {
        if (r.instance == "broken") {
            ++errors;
            EXPECT_NE(r.error.find("cannot open"), std::string::npos);
        } else {
            EXPECT_TRUE(r.error.empty()) << r.error;
            EXPECT_GT(r.makespan, 0.0);
        }
    }
    EXPECT_EQ(errors, strategies.size());

    const auto rows = summarize(results, strategies);
    ASSERT_EQ(rows.size(), strategies.size() * 4);  // S1, S2, S3, all
    EXPECT_EQ(rows[0].bucket, "S1");
    EXPECT_EQ(rows[3].bucket, "all");
    EXPECT_EQ(rows[3].instances, 6u);
    const std::string csv = rows_to_csv(rows, {{"seed", 1}});
    EXPECT_EQ(csv.rfind("# seed=1\nstrategy,bucket,instances,mean_makespan,best_makespan\n", 0), 0u);
    const auto back = rows_from_csv(csv);
    ASSERT_EQ(back.size(), rows.size());
    EXPECT_EQ(back[5].strategy, rows[5].strategy);
    EXPECT_NEAR(back[5].mean, rows[5].mean, 1e-9);
    EXPECT_NE(rows_to_markdown(rows).find("| probe | S2 | 2 |"), std::string::npos);
}

TEST(Bench, ThreadCountDoesNotChangeResults) {
    const auto tests = small_suite(8, 2);
    const auto archive = small_archive();
    const auto strategies = parse_strategies("top,random,LPT");
    const auto a = results_to_csv(run_bench(tests, strategies, nullptr, &archive, {5, 3, 1}));
    const auto b = results_to_csv(run_bench(tests, strategies, nullptr, &archive, {5, 3, 4}));
    EXPECT_EQ(a, b);
}

TEST(Statistics, SignTestMatchesBinomialTail) {
    EXPECT_DOUBLE_EQ(sign_test_p(0, 0), 1.0);
    EXPECT_NEAR(sign_test_p(5, 0), 1.0 / 32.0, 1e-12);
    EXPECT_NEAR(sign_test_p(4, 1), 6.0 / 32.0, 1e-12);
    EXPECT_NEAR(sign_test_p(0, 3), 1.0, 1e-12);
    EXPECT_NEAR(sign_test_p(15, 5), 0.020694732666015625, 1e-12);
}

TEST(Statistics, PairedComparisonCountsAndError) {
    const std::vector<double> a = {1, 2, 3, 4, 5}, b = {2, 2, 4, 5, 7};
    const auto c = compare_paired(a, b);
    EXPECT_EQ(c.wins, 4u);
    EXPECT_EQ(c.ties, 1u);
    EXPECT_EQ(c.losses, 0u);
    EXPECT_NEAR(c.mean_difference, -1.0, 1e-12);
    EXPECT_NEAR(c.standard_error, std::sqrt(0.5 / 5.0), 1e-12);
    EXPECT_NEAR(c.p_value, 1.0 / 16.0, 1e-12);
    EXPECT_THROW(compare_paired(a, std::vector<double>{1}), ConfigError);
}

TEST(Ablation, ArmsShareBudgetsAndSeeds) {
    const auto library = small_suite(10, 1);
    const auto tests = small_suite(11, 1);
    AblationOptions opt;
    opt.evolution.max_rules = 30;
    ScriptedGenerator gen;
    const std::vector<std::uint64_t> seeds = {1, 2};
    const auto results = run_ablation(gen, seeds, library, tests, opt);
    ASSERT_EQ(results.size(), 6u);
    for (const auto& r : results) {
        EXPECT_EQ(r.rules_evaluated, 30u) << r.arm;
        EXPECT_EQ(r.bench.size(), tests.size());
        EXPECT_GT(r.occupied_cells, 0u);
    }
    const std::string csv = ablation_to_csv(results);
    EXPECT_NE(csv.find("no-feature-space,2,"), std::string::npos);
    EXPECT_EQ(csv, ablation_to_csv(run_ablation(gen, seeds, library, tests, opt)));
}

TEST(Report, GanttRoundTripAndSvg) {
    const auto inst = small_suite(12, 1)[0].instance;
    const auto schedule = simulate_static(inst, classical("SPT"));
    const std::string csv = "# strategy=SPT\n" + gantt_to_csv(schedule);
    const auto bars = gantt_from_csv(csv);
    ASSERT_EQ(bars.size(), schedule.assignments.size());
    double end = 0.0;
    for (const auto& b : bars) end = std::max(end, b.end);
    EXPECT_NEAR(end, schedule.makespan, 1e-9);
    const std::string svg = gantt_svg(bars);
    EXPECT_EQ(svg.rfind("<svg", 0), 0u);
    std::size_t rects = 0;
    for (std::size_t p = svg.find("<rect x="); p != std::string::npos; p = svg.find("<rect x=", p + 1)) ++rects;
    EXPECT_EQ(rects, bars.size());
    EXPECT_NE(svg.find("</svg>"), std::string::npos);
    EXPECT_THROW(gantt_from_csv("machine,job\n1,2\n"), ParseError);
    EXPECT_THROW(gantt_from_csv("machine,job,op,start,end\n0,0,0,5,x\n"), ParseError);
    EXPECT_THROW(gantt_from_csv("machine,job,op,start,end\n0,0,0,5,4\n"), ParseError);
}

TEST(Report, RunLogSkipsHeaderAndPlotsCells) {
    EvolutionConfig cfg;
    cfg.generations = 3;
    ScriptedGenerator gen;
    const auto res = run_evolution(cfg, gen, calibration_set(1));
    const std::string text = "{\"header\": {\"command\": \"evolve\"}}\n" + run_log_to_jsonl(res.log);
    const auto log = run_log_from_jsonl(text);
    ASSERT_EQ(log.size(), res.log.size());
    EXPECT_EQ(log.back().occupied_cells, res.log.back().occupied_cells);
    const std::string csv = cells_to_csv(log);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), static_cast<long>(log.size() + 1));
    const std::string svg = cells_svg(log);
    EXPECT_NE(svg.find("<polyline"), std::string::npos);
    EXPECT_THROW(run_log_from_jsonl("{\"header\": {}}\n"), ParseError);
    EXPECT_THROW(run_log_from_jsonl("{\"generation\": 1}\n"), ParseError);
}

TEST(Report, FingerprintScatterUsesHeaviestFeatures) {
    const auto library = small_suite(13, 3);
    std::vector<Instance> insts;
    for (const auto& l : library) insts.push_back(l.instance);
    const auto kb = build_kb(insts, small_archive(), classical("SPT"), {});
    const auto [x, y] = scatter_axes(kb);
    EXPECT_LT(x, y);
    for (std::size_t j = 0; j < kFingerprintSize; ++j)
        if (j != x && j != y) EXPECT_LE(kb.weights[j], std::min(kb.weights[x], kb.weights[y]));
    const std::string csv = fingerprints_to_csv(kb);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), static_cast<long>(kb.cases.size() + 1));
    const std::string svg = fingerprints_svg(kb);
    std::size_t circles = 0;
    for (std::size_t p = svg.find("<circle"); p != std::string::npos; p = svg.find("<circle", p + 1)) ++circles;
    EXPECT_EQ(circles, kb.cases.size());
}
