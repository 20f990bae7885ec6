#pragma once

// Plot data and a minimal static SVG renderer for schedules, evolution runs
// and knowledge-base fingerprints.

#include "qdsched/pipeline.hpp"

namespace qdsched {

struct GanttBar {
    MachineId machine = 0;
    JobId job = 0;
    int op = 0;
    Time start = 0.0;
    Time end = 0.0;
};

inline std::string gantt_to_csv(const Schedule& s) {
    std::vector<Assignment> rows = s.assignments;
    std::stable_sort(rows.begin(), rows.end(), [](const Assignment& a, const Assignment& b) {
        return a.machine != b.machine ? a.machine < b.machine : a.start < b.start;
    });
    std::string out = "machine,job,op,start,end\n";
    for (const auto& a : rows)
        out += std::to_string(a.machine) + "," + std::to_string(a.job) + "," + std::to_string(a.op) + "," +
               format_number(a.start) + "," + format_number(a.end) + "\n";
    return out;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    bool quoted = false;
    for (char c : line) {
        if (c == '"') {
            quoted = !quoted;
        } else if (c == ',' && !quoted) {
            cells.push_back(cell);
            cell.clear();
        } else if (c != '\r') {
            cell += c;
        }
    }
    cells.push_back(cell);
    return cells;
}

/// Rows of a CSV text with '#' comment lines skipped; the first row is the header.
inline std::vector<std::vector<std::string>> read_csv(const std::string& text, const std::string& origin,
                                                      const std::vector<std::string>& expected_header) {
    std::istringstream in(text);
    std::string line;
    std::vector<std::vector<std::string>> rows;
    bool header_seen = false;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        auto cells = split_csv_line(line);
        if (!header_seen) {
            if (cells != expected_header) throw ParseError(origin + ":" + std::to_string(line_no) + ": unexpected header");
            header_seen = true;
            continue;
        }
        if (cells.size() != expected_header.size())
            throw ParseError(origin + ":" + std::to_string(line_no) + ": expected " +
                             std::to_string(expected_header.size()) + " columns");
        rows.push_back(std::move(cells));
    }
    if (!header_seen) throw ParseError(origin + ": missing header");
    return rows;
}

inline double to_number(const std::string& s, const std::string& origin) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ParseError(origin + ": not a number: '" + s + "'");
    }
}

inline std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

inline std::string fixed(double v, int digits = 1) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

// Colour per job from a fixed 10-colour palette.
inline const char* job_colour(JobId j) {
    static const char* palette[] = {"#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f",
                                    "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac"};
    return palette[static_cast<std::size_t>(j) % 10];
}

struct Frame {
    double width = 720, height = 400, left = 60, right = 20, top = 30, bottom = 45;
    double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    double px(double x) const { return left + (x - x0) / (x1 - x0) * (width - left - right); }
    double py(double y) const { return height - bottom - (y - y0) / (y1 - y0) * (height - top - bottom); }
};

inline std::string svg_open(const Frame& f, const std::string& title) {
    return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fixed(f.width, 0) + "\" height=\"" +
           fixed(f.height, 0) + "\" font-family=\"sans-serif\" font-size=\"11\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n<text x=\"" +
           fixed(f.width / 2, 0) + "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">" + xml_escape(title) +
           "</text>\n";
}

inline std::string svg_axes(const Frame& f, const std::string& xlabel, const std::string& ylabel) {
    std::string out;
    out += "<line x1=\"" + fixed(f.left) + "\" y1=\"" + fixed(f.height - f.bottom) + "\" x2=\"" +
           fixed(f.width - f.right) + "\" y2=\"" + fixed(f.height - f.bottom) + "\" stroke=\"black\"/>\n";
    out += "<line x1=\"" + fixed(f.left) + "\" y1=\"" + fixed(f.top) + "\" x2=\"" + fixed(f.left) + "\" y2=\"" +
           fixed(f.height - f.bottom) + "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double x = f.x0 + (f.x1 - f.x0) * i / 4.0, y = f.y0 + (f.y1 - f.y0) * i / 4.0;
        out += "<text x=\"" + fixed(f.px(x)) + "\" y=\"" + fixed(f.height - f.bottom + 14) +
               "\" text-anchor=\"middle\">" + format_number(std::round(x * 100) / 100) + "</text>\n";
        out += "<text x=\"" + fixed(f.left - 4) + "\" y=\"" + fixed(f.py(y) + 4) + "\" text-anchor=\"end\">" +
               format_number(std::round(y * 100) / 100) + "</text>\n";
    }
    out += "<text x=\"" + fixed((f.left + f.width - f.right) / 2) + "\" y=\"" + fixed(f.height - 8) +
           "\" text-anchor=\"middle\">" + xml_escape(xlabel) + "</text>\n";
    out += "<text x=\"14\" y=\"" + fixed((f.top + f.height - f.bottom) / 2) +
           "\" text-anchor=\"middle\" transform=\"rotate(-90 14 " + fixed((f.top + f.height - f.bottom) / 2) + ")\">" +
           xml_escape(ylabel) + "</text>\n";
    return out;
}

}  // namespace detail

inline std::vector<GanttBar> gantt_from_csv(const std::string& text, const std::string& origin = "gantt") {
    std::vector<GanttBar> bars;
    for (const auto& row : detail::read_csv(text, origin, {"machine", "job", "op", "start", "end"})) {
        GanttBar b;
        b.machine = static_cast<MachineId>(detail::to_number(row[0], origin));
        b.job = static_cast<JobId>(detail::to_number(row[1], origin));
        b.op = static_cast<int>(detail::to_number(row[2], origin));
        b.start = detail::to_number(row[3], origin);
        b.end = detail::to_number(row[4], origin);
        if (b.end < b.start) throw ParseError(origin + ": bar ends before it starts");
        bars.push_back(b);
    }
    return bars;
}

inline std::string gantt_svg(const std::vector<GanttBar>& bars, const std::string& title = "Schedule") {
    detail::Frame f;
    int machines = 1;
    Time end = 1.0;
    for (const auto& b : bars) {
        machines = std::max(machines, static_cast<int>(b.machine) + 1);
        end = std::max(end, b.end);
    }
    f.height = std::max(200.0, 40.0 + 24.0 * machines + f.bottom);
    f.x1 = end;
    f.y1 = machines;
    std::string out = detail::svg_open(f, title + " (makespan " + detail::fixed(end, 2) + ")");
    for (const auto& b : bars) {
        const double y = f.py(b.machine + 1) + 2, h = f.py(0) - f.py(1) - 4;
        out += "<rect x=\"" + detail::fixed(f.px(b.start)) + "\" y=\"" + detail::fixed(y) + "\" width=\"" +
               detail::fixed(std::max(0.5, f.px(b.end) - f.px(b.start))) + "\" height=\"" + detail::fixed(h) +
               "\" fill=\"" + detail::job_colour(b.job) + "\" stroke=\"black\" stroke-width=\"0.3\"><title>job " +
               std::to_string(b.job) + " op " + std::to_string(b.op) + "</title></rect>\n";
    }
    for (int m = 0; m < machines; ++m)
        out += "<text x=\"" + detail::fixed(f.left - 4) + "\" y=\"" + detail::fixed(f.py(m + 0.5) + 4) +
               "\" text-anchor=\"end\">M" + std::to_string(m) + "</text>\n";
    out += "<line x1=\"" + detail::fixed(f.left) + "\" y1=\"" + detail::fixed(f.py(0)) + "\" x2=\"" +
           detail::fixed(f.px(end)) + "\" y2=\"" + detail::fixed(f.py(0)) + "\" stroke=\"black\"/>\n";
    out += "<text x=\"" + detail::fixed(f.px(end)) + "\" y=\"" + detail::fixed(f.py(0) + 14) +
           "\" text-anchor=\"end\">" + detail::fixed(end, 2) + "</text>\n</svg>\n";
    return out;
}

struct SeriesPoint {
    double x = 0.0;
    double y = 0.0;
};

inline std::string line_svg(const std::vector<SeriesPoint>& pts, const std::string& title, const std::string& xlabel,
                            const std::string& ylabel) {
    detail::Frame f;
    for (const auto& p : pts) {
        f.x1 = std::max(f.x1, p.x);
        f.y1 = std::max(f.y1, p.y);
    }
    f.y1 *= 1.05;
    std::string out = detail::svg_open(f, title) + detail::svg_axes(f, xlabel, ylabel);
    std::string path;
    for (const auto& p : pts) path += (path.empty() ? "" : " ") + detail::fixed(f.px(p.x)) + "," + detail::fixed(f.py(p.y));
    out += "<polyline fill=\"none\" stroke=\"#4e79a7\" stroke-width=\"2\" points=\"" + path + "\"/>\n";
    for (const auto& p : pts)
        out += "<circle cx=\"" + detail::fixed(f.px(p.x)) + "\" cy=\"" + detail::fixed(f.py(p.y)) +
               "\" r=\"3\" fill=\"#4e79a7\"/>\n";
    return out + "</svg>\n";
}

/// Occupied cells and best fitness per generation from a run log. A leading
/// {"header": ...} record is skipped.
inline std::vector<GenerationRecord> run_log_from_jsonl(const std::string& text, const std::string& origin = "run log") {
    std::vector<GenerationRecord> log;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = origin + ":" + std::to_string(line_no);
        const auto j = detail::parse_json_text(line, where);
        if (j.contains("header")) continue;
        GenerationRecord r;
        try {
            r.generation = j.at("generation").get<int>();
            r.best_fitness = j.at("best_fitness").get<double>();
            r.occupied_cells = j.at("occupied_cells").get<std::size_t>();
            r.inserted = j.value("inserted", std::size_t{0});
            r.replaced = j.value("replaced", std::size_t{0});
            r.rejected = j.value("rejected", std::size_t{0});
            r.rules_evaluated = j.value("rules_evaluated", std::size_t{0});
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(where + ": " + e.what());
        }
        log.push_back(r);
    }
    if (log.empty()) throw ParseError(origin + ": no generations");
    return log;
}

inline std::string cells_to_csv(const std::vector<GenerationRecord>& log) {
    std::string out = "generation,occupied_cells,best_fitness,rules_evaluated\n";
    for (const auto& r : log)
        out += std::to_string(r.generation) + "," + std::to_string(r.occupied_cells) + "," +
               format_number(r.best_fitness) + "," + std::to_string(r.rules_evaluated) + "\n";
    return out;
}

inline std::string cells_svg(const std::vector<GenerationRecord>& log) {
    std::vector<SeriesPoint> pts;
    for (const auto& r : log) pts.push_back({static_cast<double>(r.generation), static_cast<double>(r.occupied_cells)});
    return line_svg(pts, "Occupied archive cells", "generation", "occupied cells");
}

/// The two highest-weight fingerprint features, indices in ascending order of position.
inline std::pair<std::size_t, std::size_t> scatter_axes(const KnowledgeBase& kb) {
    std::array<std::size_t, kFingerprintSize> idx{};
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return kb.weights[a] > kb.weights[b]; });
    return {std::min(idx[0], idx[1]), std::max(idx[0], idx[1])};
}

inline std::string fingerprints_to_csv(const KnowledgeBase& kb) {
    std::string out = "case";
    for (const char* n : fingerprint_names()) out += std::string(",") + n;
    for (const char* n : fingerprint_names()) out += std::string(",z_") + n;
    out += ",best_rule_id\n";
    for (const auto& c : kb.cases) {
        out += c.label;
        for (double v : c.raw.values()) out += "," + format_number(v);
        for (double v : c.normalized) out += "," + format_number(v);
        out += "," + (c.rules.empty() ? std::string() : c.rules.front()) + "\n";
    }
    return out;
}

inline std::string fingerprints_svg(const KnowledgeBase& kb) {
    const auto [ax, ay] = scatter_axes(kb);
    detail::Frame f;
    f.x0 = f.y0 = -1.0;
    f.x1 = f.y1 = 1.0;
    for (const auto& c : kb.cases) {
        f.x0 = std::min(f.x0, c.normalized[ax]);
        f.x1 = std::max(f.x1, c.normalized[ax]);
        f.y0 = std::min(f.y0, c.normalized[ay]);
        f.y1 = std::max(f.y1, c.normalized[ay]);
    }
    const double padx = 0.05 * (f.x1 - f.x0), pady = 0.05 * (f.y1 - f.y0);
    f.x0 -= padx;
    f.x1 += padx;
    f.y0 -= pady;
    f.y1 += pady;
    std::map<std::string, std::size_t> colour;
    for (const auto& c : kb.cases)
        if (!c.rules.empty()) colour.emplace(c.rules.front(), colour.size());
    std::string out = detail::svg_open(f, "Knowledge-base fingerprints (colour = best rule)") +
                      detail::svg_axes(f, std::string("z ") + fingerprint_names()[ax],
                                       std::string("z ") + fingerprint_names()[ay]);
    for (const auto& c : kb.cases) {
        const std::size_t k = c.rules.empty() ? 0 : colour.at(c.rules.front());
        out += "<circle cx=\"" + detail::fixed(f.px(c.normalized[ax])) + "\" cy=\"" +
               detail::fixed(f.py(c.normalized[ay])) + "\" r=\"4\" fill=\"" +
               detail::job_colour(static_cast<JobId>(k)) + "\"><title>" + detail::xml_escape(c.label) +
               "</title></circle>\n";
    }
    return out + "</svg>\n";
}

/// Summary rows written by rows_to_csv.
inline std::vector<BenchRow> rows_from_csv(const std::string& text, const std::string& origin = "results") {
    std::vector<BenchRow> rows;
    for (const auto& c :
         detail::read_csv(text, origin, {"strategy", "bucket", "instances", "mean_makespan", "best_makespan"}))
        rows.push_back({c[0], c[1], static_cast<std::size_t>(detail::to_number(c[2], origin)),
                        detail::to_number(c[3], origin), detail::to_number(c[4], origin)});
    return rows;
}

}  // namespace qdsched
