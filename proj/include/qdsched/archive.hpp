#pragma once

// MAP-Elites grid over the unit cube of descriptors: one elite per cell,
// replaced only by a strictly fitter rule.

#include <algorithm>
#include <map>
#include <numeric>

#include "qdsched/behavior_space.hpp"
#include "qdsched/instance_io.hpp"

namespace qdsched {

inline constexpr const char* kArchiveFormat = "qdsched-archive";
inline constexpr int kArchiveVersion = 1;

struct Elite {
    Rule rule;
    Descriptor descriptor;
    double fitness = 0.0;
    RawBehavior raw;
};

enum class InsertOutcome { Inserted, Replaced, Rejected };

inline const char* outcome_name(InsertOutcome o) {
    switch (o) {
        case InsertOutcome::Inserted: return "inserted";
        case InsertOutcome::Replaced: return "replaced";
        case InsertOutcome::Rejected: return "rejected";
    }
    return "rejected";
}

struct InsertResult {
    InsertOutcome outcome = InsertOutcome::Rejected;
    std::size_t cell = 0;
    std::string diagnostic;
};

class EliteArchive {
public:
    explicit EliteArchive(int resolution = 10) : resolution_(resolution) {
        if (resolution < 1 || resolution > 1000) throw ConfigError("archive resolution must be in [1, 1000]");
    }

    int resolution() const { return resolution_; }
    std::size_t size() const { return cells_.size(); }
    bool empty() const { return cells_.empty(); }
    std::size_t occupied_cells() const { return cells_.size(); }

    std::size_t bin(double component) const {
        const double scaled = std::floor(component * resolution_);
        return static_cast<std::size_t>(std::clamp(scaled, 0.0, static_cast<double>(resolution_ - 1)));
    }

    std::size_t cell_index(const Descriptor& d) const {
        const auto r = static_cast<std::size_t>(resolution_);
        return (bin(d.skew) * r + bin(d.wait)) * r + bin(d.div);
    }

    InsertResult insert(Rule rule, const Descriptor& d, double fitness, const RawBehavior& raw = {}) {
        InsertResult res;
        if (std::isnan(fitness)) {
            res.diagnostic = "rule " + rule.id + ": NaN fitness";
            return res;
        }
        for (double c : d.values())
            if (!(c >= 0.0 && c <= 1.0)) {
                res.diagnostic = "rule " + rule.id + ": descriptor component outside [0, 1]";
                return res;
            }
        res.cell = cell_index(d);
        if (find(rule.id)) {
            res.diagnostic = "rule " + rule.id + " is already archived";
            return res;
        }
        auto it = cells_.find(res.cell);
        if (it == cells_.end()) {
            cells_.emplace(res.cell, Elite{std::move(rule), d, fitness, raw});
            res.outcome = InsertOutcome::Inserted;
        } else if (fitness < it->second.fitness) {
            it->second = Elite{std::move(rule), d, fitness, raw};
            res.outcome = InsertOutcome::Replaced;
        } else {
            res.diagnostic = "cell occupied by a rule at least as fit";
        }
        return res;
    }

    /// Elites in ascending cell order.
    std::vector<const Elite*> elites() const {
        std::vector<const Elite*> out;
        out.reserve(cells_.size());
        for (const auto& [cell, e] : cells_) out.push_back(&e);
        return out;
    }

    std::vector<Rule> rules() const {
        std::vector<Rule> out;
        out.reserve(cells_.size());
        for (const auto& [cell, e] : cells_) out.push_back(e.rule);
        return out;
    }

    const Elite* find(std::string_view id) const {
        for (const auto& [cell, e] : cells_)
            if (e.rule.id == id) return &e;
        return nullptr;
    }

    const Elite* at_cell(std::size_t cell) const {
        auto it = cells_.find(cell);
        return it == cells_.end() ? nullptr : &it->second;
    }

    /// Elite maximizing descriptor distance to d; ties by fitness, then id.
    const Elite& farthest_from(const Descriptor& d) const {
        if (cells_.empty()) throw ConfigError("farthest_from: archive is empty");
        const Elite* best = nullptr;
        double best_dist = -1.0;
        for (const auto& [cell, e] : cells_) {
            const double dist = e.descriptor.distance(d);
            if (!best || dist > best_dist || (dist == best_dist && better(e, *best))) {
                best = &e;
                best_dist = dist;
            }
        }
        return *best;
    }

    /// Minimum descriptor distance from each elite to any other, in elites() order.
    std::vector<double> isolation() const {
        const auto all = elites();
        std::vector<double> iso(all.size(), kInfinity);
        for (std::size_t i = 0; i < all.size(); ++i)
            for (std::size_t j = i + 1; j < all.size(); ++j) {
                const double dist = all[i]->descriptor.distance(all[j]->descriptor);
                iso[i] = std::min(iso[i], dist);
                iso[j] = std::min(iso[j], dist);
            }
        return iso;
    }

    /// The n elites with the smallest isolation index; ties by fitness, then id.
    std::vector<const Elite*> most_crowded(std::size_t n) const {
        if (cells_.size() < 2) throw ConfigError("most_crowded: archive needs at least 2 elites");
        const auto all = elites();
        const auto iso = isolation();
        std::vector<std::size_t> order(all.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (iso[a] != iso[b]) return iso[a] < iso[b];
            return better(*all[a], *all[b]);
        });
        order.resize(std::min(n, order.size()));
        std::vector<const Elite*> out;
        for (std::size_t i : order) out.push_back(all[i]);
        return out;
    }

    /// The n fittest elites, ascending by fitness then id.
    std::vector<const Elite*> top_elites(std::size_t n) const {
        auto all = elites();
        std::sort(all.begin(), all.end(), [](const Elite* a, const Elite* b) { return better(*a, *b); });
        all.resize(std::min(n, all.size()));
        return all;
    }

    const Elite* best() const {
        auto top = top_elites(1);
        return top.empty() ? nullptr : top.front();
    }

    nlohmann::json to_json(const nlohmann::json& meta = nullptr) const {
        nlohmann::json elites_json = nlohmann::json::array();
        for (const auto& [cell, e] : cells_) {
            elites_json.push_back({{"cell", cell},
                                   {"id", e.rule.id},
                                   {"rule", e.rule.source_text},
                                   {"provenance", e.rule.provenance.str()},
                                   {"descriptor", {e.descriptor.skew, e.descriptor.wait, e.descriptor.div}},
                                   {"raw", {e.raw.skew, e.raw.wait}},
                                   {"fitness", e.fitness}});
        }
        nlohmann::json doc = {{"format", kArchiveFormat}, {"version", kArchiveVersion}, {"resolution", resolution_}};
        if (!meta.is_null()) doc["meta"] = meta;
        doc["elites"] = std::move(elites_json);
        return doc;
    }

    static EliteArchive from_json(const nlohmann::json& doc, const std::string& origin = "archive") {
        using detail::require;
        using detail::require_as;
        const int version = require_as<int>(doc, "version", origin);
        if (version != kArchiveVersion) throw ParseError(origin + ": unsupported archive version " + std::to_string(version));
        EliteArchive a(require_as<int>(doc, "resolution", origin));
        const auto& list = require(doc, "elites", origin);
        if (!list.is_array()) throw ParseError(origin + ".elites: expected an array");
        for (std::size_t i = 0; i < list.size(); ++i) {
            const std::string where = origin + ".elites[" + std::to_string(i) + "]";
            const auto& e = list[i];
            Rule rule = parse_rule(require_as<std::string>(e, "rule", where),
                                   Provenance::parse(require_as<std::string>(e, "provenance", where)));
            if (rule.id != require_as<std::string>(e, "id", where))
                throw ParseError(where + ": stored id does not match rule text");
            const auto d = require_as<std::vector<double>>(e, "descriptor", where);
            const auto raw = require_as<std::vector<double>>(e, "raw", where);
            if (d.size() != 3 || raw.size() != 2) throw ParseError(where + ": malformed descriptor");
            const Descriptor desc{d[0], d[1], d[2]};
            const auto res = a.insert(std::move(rule), desc, require_as<double>(e, "fitness", where), {raw[0], raw[1]});
            if (res.outcome != InsertOutcome::Inserted) throw ParseError(where + ": duplicate or invalid cell");
            if (res.cell != require_as<std::size_t>(e, "cell", where)) throw ParseError(where + ": cell mismatch");
        }
        return a;
    }

    std::string to_text(const nlohmann::json& meta = nullptr) const { return to_json(meta).dump(1) + "\n"; }

    static EliteArchive from_text(const std::string& text, const std::string& origin = "archive") {
        return from_json(detail::parse_json_text(text, origin), origin);
    }

    void save(const std::string& path, const nlohmann::json& meta = nullptr) const {
        detail::write_file(path, to_text(meta));
    }

    static EliteArchive load(const std::string& path) { return from_text(detail::read_file(path), path); }

private:
    static bool better(const Elite& a, const Elite& b) {
        if (a.fitness != b.fitness) return a.fitness < b.fitness;
        return a.rule.id < b.rule.id;
    }

    int resolution_;
    std::map<std::size_t, Elite> cells_;
};

}  // namespace qdsched
