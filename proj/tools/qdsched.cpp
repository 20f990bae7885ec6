#include <CLI11.hpp>

#include <filesystem>
#include <functional>
#include <iostream>
#include <memory>

#include "qdsched/remote_generator.hpp"
#include "qdsched/report.hpp"
#include "qdsched/scripted_generator.hpp"

using namespace qdsched;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0;
constexpr int kPartial = 1;
constexpr int kUsage = 2;

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Command options that can also come from a JSON config file. Precedence:
// command-line flag, then the file section named after the command, then
// the built-in default.
class Settings {
public:
    explicit Settings(CLI::App* app) : app_(app) {
        app_->add_option("--config", config_path_, "JSON config file; the section named '" + app_->get_name() +
                                                       "' supplies defaults for this command")
            ->check(CLI::ExistingFile);
    }

    template <class T>
    CLI::Option* option(const std::string& flags, const std::string& key, T& var, const std::string& help,
                        bool echo = true) {
        auto* opt = app_->add_option(flags, var, help)->capture_default_str();
        bind(opt, key, var, echo);
        return opt;
    }

    CLI::Option* flag(const std::string& flags, const std::string& key, bool& var, const std::string& help) {
        auto* opt = app_->add_flag(flags, var, help);
        bind(opt, key, var, true);
        return opt;
    }

    /// Fills options not given on the command line from the config file and
    /// returns every echoed setting.
    json resolve() {
        json section = json::object();
        const std::string cmd = app_->get_name();
        if (!config_path_.empty()) {
            const json file = detail::parse_json_text(detail::read_file(config_path_), config_path_);
            if (!file.is_object()) throw UsageError(config_path_ + ": expected an object");
            if (file.contains(cmd)) section = file.at(cmd);
            if (!section.is_object()) throw UsageError(config_path_ + ": section '" + cmd + "' must be an object");
        }
        for (const auto& [key, value] : section.items())
            if (std::none_of(binds_.begin(), binds_.end(), [&](const Binding& b) { return b.key == key; }))
                throw UsageError(config_path_ + ": unknown key '" + cmd + "." + key + "'");
        json echo = json::object();
        for (const auto& b : binds_) {
            if (b.opt->count() == 0 && section.contains(b.key)) {
                try {
                    b.set(section.at(b.key));
                } catch (const json::exception&) {
                    throw UsageError(config_path_ + ": '" + cmd + "." + b.key + "' has the wrong type");
                }
            }
            if (b.echo) echo[b.key] = b.get();
        }
        return echo;
    }

private:
    struct Binding {
        CLI::Option* opt;
        std::string key;
        bool echo;
        std::function<void(const json&)> set;
        std::function<json()> get;
    };

    template <class T>
    void bind(CLI::Option* opt, const std::string& key, T& var, bool echo) {
        binds_.push_back({opt, key, echo, [&var](const json& j) { var = j.get<T>(); }, [&var] { return json(var); }});
    }

    CLI::App* app_;
    std::string config_path_;
    std::vector<Binding> binds_;
};

std::string digest_file(const std::string& path) { return hex64(fnv1a(detail::read_file(path))); }

// Content digest of every instance file in a directory, so headers identify
// inputs without depending on where they live.
std::string digest_dir(const std::string& dir) {
    if (!fs::is_directory(dir)) throw UsageError("not a directory: " + dir);
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::uint64_t h = fnv1a("");
    for (const auto& f : files) h = fnv1a(f.filename().string() + "\n" + detail::read_file(f.string()), h);
    return hex64(h);
}

void require_input(const std::string& value, const std::string& flag) {
    if (value.empty()) throw UsageError(flag + " is required");
    if (!fs::exists(value)) throw UsageError(flag + ": no such file or directory: " + value);
}

void make_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw UsageError("cannot create output directory " + dir + ": " + ec.message());
}

std::string join(const std::string& dir, const std::string& file) { return (fs::path(dir) / file).string(); }

void write(const std::string& path, const std::string& text) {
    detail::write_file(path, text);
    std::cout << "wrote " << path << "\n";
}

Rule rule_arg(const std::string& text) {
    const auto& names = classical_names();
    if (std::find(names.begin(), names.end(), text) != names.end()) return classical(text);
    try {
        return parse_rule(text, {Provenance::Kind::External});
    } catch (const ParseError& e) {
        throw UsageError("rule '" + text + "': " + e.what());
    }
}

std::string jsonl_header(const json& meta) { return json{{"header", meta}}.dump() + "\n"; }

// ---------------------------------------------------------------------------

struct GenArgs {
    std::vector<std::string> buckets = difficulty_names();
    int count = 10;
    std::uint64_t seed = 1;
    bool static_only = false;
    std::string out;
};

int run_gen(GenArgs& a, Settings& s) {
    const json echo = s.resolve();
    if (a.count < 1) throw UsageError("--count must be >= 1");
    std::vector<Difficulty> buckets;
    for (const auto& b : a.buckets) buckets.push_back(difficulty(b));
    make_dir(a.out);
    std::string manifest = config_header(json{{"command", "gen"}}) + config_header(echo) +
                           "file,bucket,jobs,machines,operations,events\n";
    for (const auto& d : buckets)
        for (const auto& n : name_instances(generate_suite(a.seed, d, a.count, !a.static_only), "")) {
            save_instance(n.instance, join(a.out, n.name + ".json"));
            manifest += n.name + ".json," + n.instance.bucket + "," + std::to_string(n.instance.jobs.size()) + "," +
                        std::to_string(n.instance.machines) + "," + std::to_string(n.instance.operation_count()) + "," +
                        std::to_string(n.instance.events.size()) + "\n";
        }
    write(join(a.out, "manifest.csv"), manifest);
    std::cout << buckets.size() * static_cast<std::size_t>(a.count) << " instances in " << a.out << "\n";
    return kOk;
}

// ---------------------------------------------------------------------------

struct GeneratorArgs {
    std::string backend = "scripted";
    double garbage_rate = 0.0;
    RemoteConfig remote;
};

void add_generator_options(Settings& s, GeneratorArgs& g) {
    s.option("--backend", "backend", g.backend, "rule generator: scripted (offline, deterministic) or remote")
        ->check(CLI::IsMember({"scripted", "remote"}));
    s.option("--garbage-rate", "garbage_rate", g.garbage_rate, "scripted backend: fraction of unparseable replies")
        ->check(CLI::Range(0.0, 1.0));
    s.option("--base-url", "base_url", g.remote.base_url, "remote backend: OpenAI-compatible API base URL");
    s.option("--model", "model", g.remote.model, "remote backend: model name");
    s.option("--api-key-env", "api_key_env", g.remote.api_key_env,
             "remote backend: environment variable holding the API key");
    s.option("--timeout", "timeout_s", g.remote.timeout_s, "remote backend: per-request timeout in seconds");
}

std::unique_ptr<RuleGenerator> make_generator(const GeneratorArgs& g) {
    if (g.backend == "scripted") return std::make_unique<ScriptedGenerator>(ScriptedOptions{g.garbage_rate});
    if (g.backend == "remote") return std::make_unique<RemoteGenerator>(g.remote);
    throw UsageError("unknown backend '" + g.backend + "' (expected scripted or remote)");
}

void add_evolution_options(Settings& s, EvolutionConfig& c) {
    s.option("--calibration-seed", "calibration_seed", c.calibration_seed, "seed of the calibration instance set");
    s.option("--variants", "variants_per_persona", c.variants_per_persona, "seed rules requested per persona");
    s.option("--generations", "generations", c.generations, "evolution generations after seeding");
    s.option("--crossovers", "crossovers", c.crossovers, "crossover requests per generation");
    s.option("--elitist", "elitist", c.elitist, "elitist mutation requests per generation");
    s.option("--contrastive", "contrastive", c.contrastive, "contrastive mutation requests per generation");
    s.option("--max-rules", "max_rules", c.max_rules, "stop after this many evaluated rules (0 = no limit)");
    s.option("--seed-temperature", "seed_temperature", c.seed_temperature, "sampling temperature of seed requests");
    s.option("--temperature", "temperature", c.temperature, "sampling temperature of operator requests");
    s.flag("--no-personas{false}", "enable_personas", c.enable_personas, "seed with one generic prompt family");
    s.flag("--no-feature-space{false}", "enable_feature_space", c.enable_feature_space,
           "pick operator parents without behaviour-space guidance");
    s.option("--retries", "retries", c.retries, "attempts per generator request");
    s.option("--insight-window", "insight_window", c.insight_window, "generations summarized for elitist mutation");
    s.option("--crowded-pool", "crowded_pool", c.crowded_pool, "contrastive parents are drawn from this many most crowded elites");
    s.option("--resolution", "resolution", c.resolution, "archive bins per behaviour axis");
}

struct EvolveArgs {
    EvolutionConfig cfg;
    GeneratorArgs gen;
    std::string out;
};

int run_evolve(EvolveArgs& a, Settings& s) {
    json echo = s.resolve();
    a.cfg.validate();
    auto gen = make_generator(a.gen);
    echo["generator"] = gen->name();
    echo["deterministic"] = gen->deterministic();
    const json meta = {{"command", "evolve"}, {"config", echo}};
    const auto calibration = calibration_set(a.cfg.calibration_seed);
    const auto res = run_evolution(a.cfg, *gen, calibration);
    for (const auto& w : res.warnings) std::cerr << "warning: " << w << "\n";
    make_dir(a.out);
    res.archive.save(join(a.out, "archive.json"), meta);
    std::cout << "wrote " << join(a.out, "archive.json") << "\n";
    write(join(a.out, "run_log.jsonl"), jsonl_header(meta) + run_log_to_jsonl(res.log));
    std::cout << res.archive.size() << " elites, " << res.archive.occupied_cells() << " occupied cells, "
              << res.rules_evaluated << " rules evaluated";
    if (!res.archive.empty()) std::cout << ", best fitness " << format_number(res.archive.best()->fitness);
    std::cout << (gen->deterministic() ? "" : " (non-deterministic backend)") << "\n";
    return res.generator_failed ? kPartial : kOk;
}

// ---------------------------------------------------------------------------

struct BuildKbArgs {
    std::string archive;
    std::string library;
    std::string probe_rule = "SPT";
    KbOptions kb{4, 0.0, 0};
    std::string out;
};

void add_kb_options(Settings& s, std::string& probe_rule, KbOptions& kb) {
    s.option("--probe-rule", "probe_rule", probe_rule, "probe rule: a classical name or rule text");
    s.option("--R", "R", kb.R, "best rules bound to each library case")->check(CLI::PositiveNumber);
    s.option("--snapshot-fraction", "snapshot_fraction", kb.snapshot_fraction,
             "fingerprint library instances at this fraction of the probe makespan (0 = at t=0)")
        ->check(CLI::Range(0.0, 1.0));
}

int run_build_kb(BuildKbArgs& a, Settings& s) {
    json echo = s.resolve();
    require_input(a.archive, "--archive");
    require_input(a.library, "--library");
    const Rule probe = rule_arg(a.probe_rule);
    echo["archive_digest"] = digest_file(a.archive);
    echo["library_digest"] = digest_dir(a.library);
    const auto archive = EliteArchive::load(a.archive);
    const auto library = load_instance_dir(a.library);
    std::vector<Instance> insts;
    std::vector<std::string> labels;
    for (const auto& l : library) {
        insts.push_back(l.instance);
        labels.push_back(l.name);
    }
    const auto kb = build_kb(insts, labels, archive, probe, a.kb);
    if (const auto dir = fs::path(a.out).parent_path(); !dir.empty()) make_dir(dir.string());
    save_kb(kb, a.out, json{{"command", "build-kb"}, {"config", echo}});
    std::cout << "wrote " << a.out << "\n" << kb.cases.size() << " cases, " << kb.rules.size() << " distinct rules\n";
    return kOk;
}

// ---------------------------------------------------------------------------

struct ScheduleArgs {
    std::string instance;
    std::string kb;
    std::string archive;
    std::string strategy = "probe";
    std::size_t k = 5;
    std::uint64_t seed = 1;
    unsigned threads = 1;
    std::string out;
};

int run_schedule(ScheduleArgs& a, Settings& s) {
    json echo = s.resolve();
    require_input(a.instance, "--instance");
    const StrategySpec spec = parse_strategy(a.strategy);
    if (spec.needs_gp) throw UsageError("the gp strategy needs a training set; use bench --gp-train");
    if (spec.strategy == Strategy::Probe) require_input(a.kb, "--kb");
    if (spec.strategy == Strategy::Top || spec.strategy == Strategy::Random) require_input(a.archive, "--archive");
    echo["instance_digest"] = digest_file(a.instance);
    KnowledgeBase kb;
    std::optional<EliteArchive> archive;
    if (!a.kb.empty()) {
        require_input(a.kb, "--kb");
        echo["kb_digest"] = digest_file(a.kb);
        kb = load_kb(a.kb);
    }
    if (!a.archive.empty()) {
        require_input(a.archive, "--archive");
        echo["archive_digest"] = digest_file(a.archive);
        archive = EliteArchive::load(a.archive);
    }
    const Instance inst = load_instance(a.instance);
    OnlineConfig cfg;
    cfg.strategy = spec.strategy;
    cfg.k = a.k;
    cfg.seed = a.seed;
    cfg.fixed_rule = spec.rule;
    cfg.threads = a.threads;
    const auto run = run_online(inst, kb, archive ? &*archive : nullptr, cfg);
    const json meta = {{"command", "schedule"}, {"config", echo}};
    const std::string header = config_header(json{{"command", "schedule"}}) + config_header(echo);
    make_dir(a.out);
    write(join(a.out, "schedule.txt"), header + schedule_to_text(run.schedule));
    write(join(a.out, "decisions.jsonl"), jsonl_header(meta) + decisions_to_jsonl(run.decisions));
    write(join(a.out, "gantt.csv"), header + gantt_to_csv(run.schedule));
    double worst = 0.0;
    for (const auto& d : run.decisions) worst = std::max(worst, d.latency_ms);
    std::cout << "makespan " << format_number(run.schedule.makespan) << ", " << run.decisions.size()
              << " decisions, slowest " << format_number(std::round(worst * 1000.0) / 1000.0) << " ms\n";
    return kOk;
}

// ---------------------------------------------------------------------------

struct BenchArgs {
    std::string tests;
    std::string kb;
    std::string archive;
    std::string strategies = "probe,top,random";
    BenchOptions opt{5, 1, 0};
    std::string gp_train;
    GpConfig gp;
    std::string out;
};

int run_bench_cmd(BenchArgs& a, Settings& s) {
    json echo = s.resolve();
    require_input(a.tests, "--tests");
    auto strategies = parse_strategies(a.strategies);
    const bool needs_kb = std::any_of(strategies.begin(), strategies.end(),
                                      [](const StrategySpec& x) { return x.strategy == Strategy::Probe; });
    const bool needs_archive = std::any_of(strategies.begin(), strategies.end(), [](const StrategySpec& x) {
        return x.strategy == Strategy::Top || x.strategy == Strategy::Random;
    });
    const bool needs_gp =
        std::any_of(strategies.begin(), strategies.end(), [](const StrategySpec& x) { return x.needs_gp; });
    if (needs_kb) require_input(a.kb, "--kb");
    if (needs_archive) require_input(a.archive, "--archive");
    if (needs_gp) require_input(a.gp_train, "--gp-train");
    if (needs_gp) a.gp.validate();

    echo["tests_digest"] = digest_dir(a.tests);
    KnowledgeBase kb;
    std::optional<EliteArchive> archive;
    if (!a.kb.empty()) {
        require_input(a.kb, "--kb");
        echo["kb_digest"] = digest_file(a.kb);
        kb = load_kb(a.kb);
    }
    if (!a.archive.empty()) {
        require_input(a.archive, "--archive");
        echo["archive_digest"] = digest_file(a.archive);
        archive = EliteArchive::load(a.archive);
    }
    const auto tests = load_instance_dir(a.tests, true);
    make_dir(a.out);

    if (needs_gp) {
        echo["gp_train_digest"] = digest_dir(a.gp_train);
        std::vector<Instance> train;
        for (const auto& t : load_instance_dir(a.gp_train)) train.push_back(static_view(t.instance));
        GpConfig gp = a.gp;
        gp.threads = a.opt.threads;
        const auto res = run_gp(train, gp);
        for (auto& st : strategies)
            if (st.needs_gp) st.rule = res.best;
        write(join(a.out, "gp_history.csv"), config_header(gp_config_to_json(a.gp)) + gp_history_to_csv(res));
        std::cout << "gp best: " << res.best.source_text << " (training fitness " << format_number(res.best_fitness)
                  << ")\n";
    }

    const auto results = run_bench(tests, strategies, needs_kb ? &kb : nullptr, archive ? &*archive : nullptr, a.opt);
    const json header = json{{"command", "bench"}};
    const auto rows = summarize(results, strategies);
    write(join(a.out, "per_instance.csv"), config_header(header) + results_to_csv(results, echo));
    write(join(a.out, "results.csv"), config_header(header) + rows_to_csv(rows, echo));
    write(join(a.out, "results.md"), "# Bench results\n\n```\n" + config_header(echo) + "```\n\n" + rows_to_markdown(rows));
    std::size_t failed = 0;
    for (const auto& r : results)
        if (!r.error.empty()) {
            ++failed;
            std::cerr << "error: " << r.instance << " [" << r.strategy << "]: " << r.error << "\n";
        }
    std::cout << rows_to_markdown(rows);
    if (failed) {
        std::cerr << failed << " of " << results.size() << " runs failed\n";
        return kPartial;
    }
    return kOk;
}

// ---------------------------------------------------------------------------

struct AblateArgs {
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    std::string library;
    std::string tests;
    std::string probe_rule = "SPT";
    AblationOptions opt;
    GeneratorArgs gen;
    std::string out;
};

int run_ablate(AblateArgs& a, Settings& s) {
    json echo = s.resolve();
    require_input(a.library, "--library");
    require_input(a.tests, "--tests");
    if (a.seeds.empty()) throw UsageError("--seeds needs at least one seed");
    a.opt.evolution.validate();
    a.opt.probe_rule = rule_arg(a.probe_rule);
    a.opt.kb.threads = a.opt.bench.threads;
    auto gen = make_generator(a.gen);
    echo["generator"] = gen->name();
    echo["deterministic"] = gen->deterministic();
    echo["library_digest"] = digest_dir(a.library);
    echo["tests_digest"] = digest_dir(a.tests);
    const auto library = load_instance_dir(a.library);
    const auto tests = load_instance_dir(a.tests, true);
    const auto results = run_ablation(*gen, a.seeds, library, tests, a.opt);

    std::string summary = "arm,seeds,mean_occupied_cells,mean_makespan,full_more_cells,full_lower_makespan\n";
    std::string md = "| arm | mean occupied cells | mean makespan | seeds where full has more cells | seeds where "
                     "full has lower makespan |\n|---|---:|---:|---:|---:|\n";
    for (const auto& arm : ablation_arms()) {
        double cells = 0.0, makespan = 0.0;
        std::size_t n = 0, more_cells = 0, lower = 0;
        for (const auto& r : results) {
            if (r.arm != arm.name) continue;
            ++n;
            cells += static_cast<double>(r.occupied_cells);
            makespan += r.mean_makespan;
            const auto full = std::find_if(results.begin(), results.end(),
                                           [&](const AblationResult& f) { return f.arm == "full" && f.seed == r.seed; });
            if (full->occupied_cells > r.occupied_cells) ++more_cells;
            if (time_less(full->mean_makespan, r.mean_makespan)) ++lower;
        }
        const double cn = cells / static_cast<double>(n), mn = makespan / static_cast<double>(n);
        const bool self = arm.name == "full";
        summary += arm.name + "," + std::to_string(n) + "," + format_number(cn) + "," + format_number(mn) + "," +
                   (self ? "" : std::to_string(more_cells)) + "," + (self ? "" : std::to_string(lower)) + "\n";
        md += "| " + arm.name + " | " + format_number(std::round(cn * 100) / 100) + " | " +
              format_number(std::round(mn * 100) / 100) + " | " +
              (self ? "-" : std::to_string(more_cells) + "/" + std::to_string(n)) + " | " +
              (self ? "-" : std::to_string(lower) + "/" + std::to_string(n)) + " |\n";
    }
    make_dir(a.out);
    const json header = json{{"command", "ablate"}};
    write(join(a.out, "ablation.csv"), config_header(header) + ablation_to_csv(results, echo));
    write(join(a.out, "ablation_summary.csv"), config_header(header) + config_header(echo) + summary);
    write(join(a.out, "ablation.md"), "# Ablation\n\n```\n" + config_header(echo) + "```\n\n" + md);
    std::cout << md;
    std::size_t failed = 0;
    for (const auto& r : results)
        for (const auto& b : r.bench)
            if (!b.error.empty()) {
                ++failed;
                std::cerr << "error: " << r.arm << " seed " << r.seed << " " << b.instance << ": " << b.error << "\n";
            }
    return failed ? kPartial : kOk;
}

// ---------------------------------------------------------------------------

struct ReportArgs {
    std::string run_log;
    std::string gantt;
    std::string kb;
    std::string results;
    std::string out;
};

int run_report(ReportArgs& a, Settings& s) {
    json echo = s.resolve();
    if (a.run_log.empty() && a.gantt.empty() && a.kb.empty() && a.results.empty())
        throw UsageError("nothing to report: give at least one of --run-log, --gantt, --kb, --results");
    for (const auto& [value, flag] : {std::pair{a.run_log, "--run-log"}, std::pair{a.gantt, "--gantt"},
                                      std::pair{a.kb, "--kb"}, std::pair{a.results, "--results"}})
        if (!value.empty()) require_input(value, flag);
    make_dir(a.out);
    if (!a.run_log.empty()) {
        const auto log = run_log_from_jsonl(detail::read_file(a.run_log), a.run_log);
        write(join(a.out, "cells.csv"), cells_to_csv(log));
        write(join(a.out, "cells.svg"), cells_svg(log));
    }
    if (!a.gantt.empty()) write(join(a.out, "gantt.svg"), gantt_svg(gantt_from_csv(detail::read_file(a.gantt), a.gantt)));
    if (!a.kb.empty()) {
        const auto kb = load_kb(a.kb);
        write(join(a.out, "fingerprints.csv"), fingerprints_to_csv(kb));
        write(join(a.out, "fingerprints.svg"), fingerprints_svg(kb));
    }
    if (!a.results.empty())
        write(join(a.out, "results.md"),
              "# Results\n\n" + rows_to_markdown(rows_from_csv(detail::read_file(a.results), a.results)));
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Quality-diversity evolution of dispatching rules for dynamic flexible job shops"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "qdsched 1.0");

    GenArgs gen;
    auto* gen_cmd = app.add_subcommand("gen", "generate synthetic instance files");
    Settings gen_s(gen_cmd);
    gen_s.option("--bucket", "buckets", gen.buckets, "difficulty buckets (S1, S2, S3)")->delimiter(',');
    gen_s.option("--count", "count", gen.count, "instances per bucket");
    gen_s.option("--seed", "seed", gen.seed, "generator seed");
    gen_s.flag("--static", "static", gen.static_only, "omit dynamic events");
    gen_s.option("--out", "out", gen.out, "output directory", false)->required();

    EvolveArgs evo;
    auto* evo_cmd = app.add_subcommand("evolve", "evolve an elite archive of dispatching rules");
    Settings evo_s(evo_cmd);
    evo_s.option("--seed", "seed", evo.cfg.seed, "evolution seed");
    add_evolution_options(evo_s, evo.cfg);
    add_generator_options(evo_s, evo.gen);
    evo_s.option("--threads", "threads", evo.cfg.threads, "evaluation threads (0 = all cores)");
    evo_s.option("--out", "out", evo.out, "output directory", false)->required();

    BuildKbArgs kb;
    auto* kb_cmd = app.add_subcommand("build-kb", "fingerprint library instances and bind their best rules");
    Settings kb_s(kb_cmd);
    kb_s.option("--archive", "archive", kb.archive, "archive file from evolve", false);
    kb_s.option("--library", "library", kb.library, "directory of library instance files", false);
    add_kb_options(kb_s, kb.probe_rule, kb.kb);
    kb_s.option("--threads", "threads", kb.kb.threads, "threads (0 = all cores)");
    kb_s.option("--out", "out", kb.out, "output knowledge-base file", false)->required();

    ScheduleArgs sch;
    auto* sch_cmd = app.add_subcommand("schedule", "schedule one instance online");
    Settings sch_s(sch_cmd);
    sch_s.option("--instance", "instance", sch.instance, "instance file", false);
    sch_s.option("--kb", "kb", sch.kb, "knowledge-base file (probe strategy)", false);
    sch_s.option("--archive", "archive", sch.archive, "archive file (top and random strategies)", false);
    sch_s.option("--strategy", "strategy", sch.strategy, "probe, top, random, a classical rule name or fixed:<rule>");
    sch_s.option("--k", "k", sch.k, "cases retrieved per decision")->check(CLI::PositiveNumber);
    sch_s.option("--seed", "seed", sch.seed, "seed of the random strategy");
    sch_s.option("--threads", "threads", sch.threads, "look-ahead threads per decision (0 = all cores)");
    sch_s.option("--out", "out", sch.out, "output directory", false)->required();

    BenchArgs bench;
    auto* bench_cmd = app.add_subcommand("bench", "schedule a test directory with several strategies");
    Settings bench_s(bench_cmd);
    bench_s.option("--tests", "tests", bench.tests, "directory of test instance files", false);
    bench_s.option("--kb", "kb", bench.kb, "knowledge-base file (probe strategy)", false);
    bench_s.option("--archive", "archive", bench.archive, "archive file (top and random strategies)", false);
    bench_s.option("--strategies", "strategies", bench.strategies,
                   "comma list of probe, top, random, gp, classical rule names and fixed:<rule>");
    bench_s.option("--k", "k", bench.opt.k, "cases retrieved per decision")->check(CLI::PositiveNumber);
    bench_s.option("--seed", "seed", bench.opt.seed, "seed of the random strategy");
    bench_s.option("--threads", "threads", bench.opt.threads, "instances run in parallel (0 = all cores)");
    bench_s.option("--gp-train", "gp_train", bench.gp_train, "training instances for the gp strategy", false);
    bench_s.option("--gp-seed", "gp_seed", bench.gp.seed, "gp seed");
    bench_s.option("--gp-generations", "gp_generations", bench.gp.generations, "gp generations");
    bench_s.option("--gp-population", "gp_population", bench.gp.population, "gp population size");
    bench_s.option("--out", "out", bench.out, "output directory", false)->required();

    AblateArgs abl;
    abl.opt.evolution.max_rules = 60;
    abl.opt.bench.threads = 0;
    auto* abl_cmd = app.add_subcommand("ablate", "compare the full evolution against its ablations");
    Settings abl_s(abl_cmd);
    abl_s.option("--seeds", "seeds", abl.seeds, "evolution seeds, one replicate each")->delimiter(',');
    abl_s.option("--library", "library", abl.library, "directory of library instance files", false);
    abl_s.option("--tests", "tests", abl.tests, "directory of test instance files", false);
    add_evolution_options(abl_s, abl.opt.evolution);
    add_generator_options(abl_s, abl.gen);
    add_kb_options(abl_s, abl.probe_rule, abl.opt.kb);
    abl_s.option("--k", "k", abl.opt.bench.k, "cases retrieved per decision")->check(CLI::PositiveNumber);
    abl_s.option("--threads", "threads", abl.opt.bench.threads, "threads (0 = all cores)");
    abl_s.option("--out", "out", abl.out, "output directory", false)->required();

    ReportArgs rep;
    auto* rep_cmd = app.add_subcommand("report", "render tables and plots from pipeline outputs");
    Settings rep_s(rep_cmd);
    rep_s.option("--run-log", "run_log", rep.run_log, "run_log.jsonl from evolve", false);
    rep_s.option("--gantt", "gantt", rep.gantt, "gantt.csv from schedule", false);
    rep_s.option("--kb", "kb", rep.kb, "knowledge-base file from build-kb", false);
    rep_s.option("--results", "results", rep.results, "results.csv from bench", false);
    rep_s.option("--out", "out", rep.out, "output directory", false)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*gen_cmd) return run_gen(gen, gen_s);
        if (*evo_cmd) return run_evolve(evo, evo_s);
        if (*kb_cmd) return run_build_kb(kb, kb_s);
        if (*sch_cmd) return run_schedule(sch, sch_s);
        if (*bench_cmd) return run_bench_cmd(bench, bench_s);
        if (*abl_cmd) return run_ablate(abl, abl_s);
        if (*rep_cmd) return run_report(rep, rep_s);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kUsage;
    } catch (const ConfigError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kUsage;
    } catch (const ParseError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kPartial;
    }
    return kUsage;
}
