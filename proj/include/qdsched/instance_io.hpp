#pragma once

// Instance file format (JSON, see docs/formats.md).

#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "qdsched/instance.hpp"

namespace qdsched {

inline constexpr const char* kInstanceFormat = "qdsched-instance";
inline constexpr int kInstanceVersion = 1;

namespace detail {

using nlohmann::json;

inline const json& require(const json& obj, const char* key, const std::string& where) {
    if (!obj.is_object()) throw ParseError(where + ": expected an object");
    auto it = obj.find(key);
    if (it == obj.end()) throw ParseError(where + ": missing field '" + key + "'");
    return *it;
}

template <class T>
T require_as(const json& obj, const char* key, const std::string& where) {
    const json& v = require(obj, key, where);
    try {
        return v.get<T>();
    } catch (const json::exception&) {
        throw ParseError(where + "." + key + ": wrong type");
    }
}

inline json job_to_json(const Job& job) {
    json ops = json::array();
    for (const auto& op : job.ops) {
        json cands = json::array();
        for (const auto& c : op.candidates) cands.push_back(json::array({c.machine, c.time}));
        ops.push_back(json{{"candidates", std::move(cands)}});
    }
    return json{{"id", job.id}, {"ops", std::move(ops)}};
}

inline Job job_from_json(const json& j, const std::string& where) {
    Job job;
    job.id = require_as<int>(j, "id", where);
    const json& ops = require(j, "ops", where);
    if (!ops.is_array()) throw ParseError(where + ".ops: expected an array");
    for (std::size_t i = 0; i < ops.size(); ++i) {
        const std::string here = where + ".ops[" + std::to_string(i) + "]";
        Operation op;
        op.job = job.id;
        op.index = static_cast<int>(i);
        const json& cands = require(ops[i], "candidates", here);
        if (!cands.is_array()) throw ParseError(here + ".candidates: expected an array");
        for (std::size_t c = 0; c < cands.size(); ++c) {
            const json& pair = cands[c];
            if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number_integer() || !pair[1].is_number())
                throw ParseError(here + ".candidates[" + std::to_string(c) + "]: expected [machine, time]");
            op.candidates.push_back({pair[0].get<int>(), pair[1].get<double>()});
        }
        job.ops.push_back(std::move(op));
    }
    return job;
}

inline std::size_t line_of(const std::string& text, std::size_t byte) {
    byte = std::min(byte, text.size());
    return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n'));
}

inline json parse_json_text(const std::string& text, const std::string& origin) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(origin + ":" + std::to_string(line_of(text, e.byte)) + ": " + e.what());
    }
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path + ": cannot open file");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError(path + ": cannot open for writing");
    out << text;
    if (!out) throw ConfigError(path + ": write failed");
}

}  // namespace detail

inline nlohmann::json instance_to_json(const Instance& inst) {
    using nlohmann::json;
    json jobs = json::array();
    for (const auto& j : inst.jobs) jobs.push_back(detail::job_to_json(j));
    json events = json::array();
    for (const auto& ev : inst.events) {
        if (const auto* b = std::get_if<MachineBreakdown>(&ev.what)) {
            json e{{"time", ev.time}, {"type", "breakdown"}, {"machine", b->machine}};
            e["repair"] = b->repair ? json(*b->repair) : json(nullptr);
            events.push_back(std::move(e));
        } else {
            events.push_back(json{{"time", ev.time},
                                  {"type", "arrival"},
                                  {"job", detail::job_to_json(std::get<OrderArrival>(ev.what).job)}});
        }
    }
    return json{{"format", kInstanceFormat}, {"version", kInstanceVersion}, {"bucket", inst.bucket},
                {"machines", inst.machines},  {"jobs", std::move(jobs)},      {"events", std::move(events)}};
}

inline Instance instance_from_json(const nlohmann::json& doc, const std::string& origin = "instance") {
    const auto version = detail::require_as<int>(doc, "version", origin);
    if (version != kInstanceVersion)
        throw ParseError(origin + ": unsupported version " + std::to_string(version));
    if (auto it = doc.find("format"); it != doc.end() && *it != kInstanceFormat)
        throw ParseError(origin + ": not an instance document");
    Instance inst;
    inst.machines = detail::require_as<int>(doc, "machines", origin);
    if (auto it = doc.find("bucket"); it != doc.end() && it->is_string()) inst.bucket = it->get<std::string>();
    const auto& jobs = detail::require(doc, "jobs", origin);
    if (!jobs.is_array()) throw ParseError(origin + ".jobs: expected an array");
    for (std::size_t j = 0; j < jobs.size(); ++j)
        inst.jobs.push_back(detail::job_from_json(jobs[j], origin + ".jobs[" + std::to_string(j) + "]"));
    if (auto it = doc.find("events"); it != doc.end()) {
        if (!it->is_array()) throw ParseError(origin + ".events: expected an array");
        for (std::size_t e = 0; e < it->size(); ++e) {
            const auto& ej = (*it)[e];
            const std::string where = origin + ".events[" + std::to_string(e) + "]";
            DynamicEvent ev;
            ev.time = detail::require_as<double>(ej, "time", where);
            const auto type = detail::require_as<std::string>(ej, "type", where);
            if (type == "breakdown") {
                MachineBreakdown b;
                b.machine = detail::require_as<int>(ej, "machine", where);
                const auto& rep = detail::require(ej, "repair", where);
                if (!rep.is_null()) {
                    if (!rep.is_number()) throw ParseError(where + ".repair: expected a number or null");
                    b.repair = rep.get<double>();
                }
                ev.what = b;
            } else if (type == "arrival") {
                ev.what = OrderArrival{detail::job_from_json(detail::require(ej, "job", where), where + ".job")};
            } else {
                throw ParseError(where + ".type: unknown event type '" + type + "'");
            }
            inst.events.push_back(std::move(ev));
        }
    }
    try {
        validate(inst);
    } catch (const ConfigError& e) {
        throw ParseError(origin + ": " + e.what());
    }
    return inst;
}

inline std::string instance_to_text(const Instance& inst) { return instance_to_json(inst).dump(1) + "\n"; }

inline Instance instance_from_text(const std::string& text, const std::string& origin = "instance") {
    return instance_from_json(detail::parse_json_text(text, origin), origin);
}

inline void save_instance(const Instance& inst, const std::string& path) {
    detail::write_file(path, instance_to_text(inst));
}

inline Instance load_instance(const std::string& path) { return instance_from_text(detail::read_file(path), path); }

}  // namespace qdsched
