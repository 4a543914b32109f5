#include "qkdsent/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace qkdsent::report {

EvalReport evaluate(const std::vector<int>& truth, const std::vector<int>& predicted,
                    const std::vector<std::string>& class_names) {
    if (truth.size() != predicted.size() || truth.empty()) {
        throw std::invalid_argument("evaluate: label vectors must be equal length and nonempty");
    }
    const std::size_t c = class_names.size();
    EvalReport rep;
    rep.class_names = class_names;
    rep.confusion.assign(c, std::vector<std::size_t>(c, 0));
    rep.total = truth.size();

    for (std::size_t i = 0; i < truth.size(); ++i) {
        const int t = truth[i], p = predicted[i];
        if (t < 0 || static_cast<std::size_t>(t) >= c || p < 0 || static_cast<std::size_t>(p) >= c) {
            throw std::invalid_argument("evaluate: label outside class range");
        }
        ++rep.confusion[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
    }

    std::size_t trace = 0;
    for (std::size_t k = 0; k < c; ++k) {
        trace += rep.confusion[k][k];
    }
    rep.accuracy = static_cast<double>(trace) / static_cast<double>(rep.total);

    for (std::size_t k = 0; k < c; ++k) {
        std::size_t tp = rep.confusion[k][k], fp = 0, fn = 0;
        for (std::size_t other = 0; other < c; ++other) {
            if (other == k) continue;
            fp += rep.confusion[other][k];
            fn += rep.confusion[k][other];
        }
        ClassMetrics m;
        m.name = class_names[k];
        m.support = tp + fn;
        const std::size_t pred_count = tp + fp;
        m.zero_denominator = pred_count == 0 || m.support == 0;
        m.precision = pred_count > 0 ? static_cast<double>(tp) / static_cast<double>(pred_count) : 0.0;
        m.recall = m.support > 0 ? static_cast<double>(tp) / static_cast<double>(m.support) : 0.0;
        m.f1 = (m.precision + m.recall) > 0.0
                   ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
                   : 0.0;
        rep.per_class.push_back(m);

        rep.macro_precision += m.precision;
        rep.macro_recall += m.recall;
        rep.macro_f1 += m.f1;
    }
    rep.macro_precision /= static_cast<double>(c);
    rep.macro_recall /= static_cast<double>(c);
    rep.macro_f1 /= static_cast<double>(c);

    for (std::size_t from = 0; from < c; ++from) {
        for (std::size_t to = 0; to < c; ++to) {
            if (from != to && rep.confusion[from][to] > 0) {
                rep.chord_edges.push_back(
                    ChordEdge{static_cast<int>(from), static_cast<int>(to), rep.confusion[from][to]});
            }
        }
    }
    return rep;
}

namespace {

constexpr double kPi = 3.14159265358979323846;

const std::vector<std::string>& palette() {
    static const std::vector<std::string> colors = {
        "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f",
        "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac",
    };
    return colors;
}

struct Point {
    double x, y;
};

Point on_circle(double cx, double cy, double r, double angle_deg) {
    const double rad = angle_deg * kPi / 180.0;
    return {cx + r * std::cos(rad), cy + r * std::sin(rad)};
}

std::string edges_path(const std::string& svg_path) {
    std::string base = svg_path;
    if (base.size() > 4 && base.substr(base.size() - 4) == ".svg") {
        base = base.substr(0, base.size() - 4);
    }
    return base + ".edges.json";
}

void write_edges_json(const EvalReport& report, const std::string& path) {
    nlohmann::json edges = nlohmann::json::array();
    for (const ChordEdge& e : report.chord_edges) {
        edges.push_back(nlohmann::json{{"from_class", e.from_class},
                                       {"to_class", e.to_class},
                                       {"from_name", report.class_names[e.from_class]},
                                       {"to_name", report.class_names[e.to_class]},
                                       {"count", e.count}});
    }
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot open output file: " + path);
    }
    out << nlohmann::json{{"schema_version", 1}, {"edges", edges}}.dump(2) << '\n';
}

}  // namespace

void render_chord(const EvalReport& report, const std::string& svg_path) {
    const std::size_t c = report.class_names.size();
    if (c < 2) {
        throw std::invalid_argument("render_chord: need at least 2 classes");
    }
    write_edges_json(report, edges_path(svg_path));

    std::ofstream out(svg_path);
    if (!out) {
        throw std::runtime_error("cannot open output file: " + svg_path);
    }

    const double size = 760.0, cx = size / 2.0, cy = size / 2.0;
    const double radius = 250.0, band = 18.0;

    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size
        << "\" viewBox=\"0 0 " << size << " " << size << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << "<text x=\"" << cx << "\" y=\"30\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"18\">Misclassification chord diagram</text>\n";

    // Legend, always present.
    for (std::size_t k = 0; k < c; ++k) {
        const double ly = 55.0 + 18.0 * static_cast<double>(k);
        out << "<rect x=\"12\" y=\"" << ly - 10 << "\" width=\"12\" height=\"12\" fill=\""
            << palette()[k % palette().size()] << "\"/>\n"
            << "<text x=\"30\" y=\"" << ly << "\" font-family=\"sans-serif\" font-size=\"12\">"
            << report.class_names[k] << "</text>\n";
    }

    std::size_t total_mis = 0;
    std::vector<std::size_t> outgoing(c, 0), incoming(c, 0);
    for (const ChordEdge& e : report.chord_edges) {
        total_mis += e.count;
        outgoing[static_cast<std::size_t>(e.from_class)] += e.count;
        incoming[static_cast<std::size_t>(e.to_class)] += e.count;
    }

    if (total_mis == 0) {
        out << "<text x=\"" << cx << "\" y=\"" << cy
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">"
               "No misclassifications in this evaluation.</text>\n</svg>\n";
        return;
    }

    // Each class arc spans its outgoing plus incoming misclassification flow.
    const double gap = 3.0;
    std::size_t active = 0;
    for (std::size_t k = 0; k < c; ++k) {
        if (outgoing[k] + incoming[k] > 0) ++active;
    }
    const double usable = 360.0 - gap * static_cast<double>(active);
    const double per_unit = usable / (2.0 * static_cast<double>(total_mis));

    std::vector<double> arc_cursor(c, 0.0);
    double cursor = -90.0;
    for (std::size_t k = 0; k < c; ++k) {
        const std::size_t flow = outgoing[k] + incoming[k];
        if (flow == 0) continue;
        arc_cursor[k] = cursor;
        const double span = per_unit * static_cast<double>(flow);

        const Point o0 = on_circle(cx, cy, radius + band, cursor);
        const Point o1 = on_circle(cx, cy, radius + band, cursor + span);
        const Point i1 = on_circle(cx, cy, radius, cursor + span);
        const Point i0 = on_circle(cx, cy, radius, cursor);
        const int large = span > 180.0 ? 1 : 0;
        out << "<path d=\"M " << o0.x << " " << o0.y << " A " << radius + band << " "
            << radius + band << " 0 " << large << " 1 " << o1.x << " " << o1.y << " L " << i1.x
            << " " << i1.y << " A " << radius << " " << radius << " 0 " << large << " 0 " << i0.x
            << " " << i0.y << " Z\" fill=\"" << palette()[k % palette().size()] << "\"/>\n";

        const double mid = cursor + span / 2.0;
        const Point lp = on_circle(cx, cy, radius + band + 14.0, mid);
        out << "<text x=\"" << lp.x << "\" y=\"" << lp.y
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << k
            << "</text>\n";
        cursor += span + gap;
    }

    // Ribbons: outgoing sub-arcs first, then incoming, both in class order, so
    // layout is deterministic.
    struct Slot {
        double a0, a1;
    };
    const auto take_slot = [&](std::size_t k, std::size_t count) {
        const double span = per_unit * static_cast<double>(count);
        Slot s{arc_cursor[k], arc_cursor[k] + span};
        arc_cursor[k] += span;
        return s;
    };

    std::vector<ChordEdge> edges = report.chord_edges;  // already (from, to) ordered
    std::vector<Slot> from_slots(edges.size()), to_slots(edges.size());
    for (std::size_t i = 0; i < edges.size(); ++i) {
        from_slots[i] = take_slot(static_cast<std::size_t>(edges[i].from_class), edges[i].count);
    }
    // Incoming slots in (to, from) order.
    std::vector<std::size_t> by_target(edges.size());
    for (std::size_t i = 0; i < edges.size(); ++i) {
        by_target[i] = i;
    }
    std::sort(by_target.begin(), by_target.end(), [&](std::size_t a, std::size_t b) {
        if (edges[a].to_class != edges[b].to_class) return edges[a].to_class < edges[b].to_class;
        return edges[a].from_class < edges[b].from_class;
    });
    for (std::size_t i : by_target) {
        to_slots[i] = take_slot(static_cast<std::size_t>(edges[i].to_class), edges[i].count);
    }

    for (std::size_t i = 0; i < edges.size(); ++i) {
        const Point a0 = on_circle(cx, cy, radius, from_slots[i].a0);
        const Point a1 = on_circle(cx, cy, radius, from_slots[i].a1);
        const Point b0 = on_circle(cx, cy, radius, to_slots[i].a0);
        const Point b1 = on_circle(cx, cy, radius, to_slots[i].a1);
        out << "<path d=\"M " << a0.x << " " << a0.y << " A " << radius << " " << radius
            << " 0 0 1 " << a1.x << " " << a1.y << " Q " << cx << " " << cy << " " << b0.x << " "
            << b0.y << " A " << radius << " " << radius << " 0 0 1 " << b1.x << " " << b1.y
            << " Q " << cx << " " << cy << " " << a0.x << " " << a0.y << " Z\" fill=\""
            << palette()[static_cast<std::size_t>(edges[i].from_class) % palette().size()]
            << "\" fill-opacity=\"0.55\"/>\n";
    }
    out << "</svg>\n";
}

void write_confusion_csv(const EvalReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot open output file: " + path);
    }
    out << "true\\predicted";
    for (const std::string& name : report.class_names) {
        out << ',' << name;
    }
    out << '\n';
    for (std::size_t t = 0; t < report.confusion.size(); ++t) {
        out << report.class_names[t];
        for (std::size_t p = 0; p < report.confusion[t].size(); ++p) {
            out << ',' << report.confusion[t][p];
        }
        out << '\n';
    }
}

std::string format_table(const EvalReport& report) {
    std::ostringstream out;
    std::size_t width = 5;
    for (const auto& m : report.per_class) {
        width = std::max(width, m.name.size());
    }
    out << std::left << std::setw(6) << "class" << std::setw(static_cast<int>(width) + 2) << "name"
        << std::right << std::setw(11) << "precision" << std::setw(9) << "recall" << std::setw(9)
        << "f1" << std::setw(9) << "support" << '\n';
    out << std::fixed << std::setprecision(2);
    for (std::size_t k = 0; k < report.per_class.size(); ++k) {
        const ClassMetrics& m = report.per_class[k];
        out << std::left << std::setw(6) << k << std::setw(static_cast<int>(width) + 2) << m.name
            << std::right << std::setw(11) << m.precision << std::setw(9) << m.recall
            << std::setw(9) << m.f1 << std::setw(9) << m.support;
        if (m.zero_denominator) {
            out << "  (zero denominator)";
        }
        out << '\n';
    }
    out << '\n'
        << std::left << std::setw(6 + static_cast<int>(width) + 2) << "accuracy" << std::right
        << std::setw(11) << report.accuracy << '\n'
        << std::left << std::setw(6 + static_cast<int>(width) + 2) << "macro average" << std::right
        << std::setw(11) << report.macro_precision << std::setw(9) << report.macro_recall
        << std::setw(9) << report.macro_f1 << '\n';
    return out.str();
}

void to_json(nlohmann::json& j, const EvalReport& r) {
    nlohmann::json per_class = nlohmann::json::array();
    for (const ClassMetrics& m : r.per_class) {
        per_class.push_back(nlohmann::json{{"name", m.name},
                                           {"precision", m.precision},
                                           {"recall", m.recall},
                                           {"f1", m.f1},
                                           {"support", m.support},
                                           {"zero_denominator", m.zero_denominator}});
    }
    nlohmann::json edges = nlohmann::json::array();
    for (const ChordEdge& e : r.chord_edges) {
        edges.push_back(
            nlohmann::json{{"from_class", e.from_class}, {"to_class", e.to_class}, {"count", e.count}});
    }
    j = nlohmann::json{{"class_names", r.class_names},
                       {"confusion", r.confusion},
                       {"per_class", per_class},
                       {"accuracy", r.accuracy},
                       {"macro_precision", r.macro_precision},
                       {"macro_recall", r.macro_recall},
                       {"macro_f1", r.macro_f1},
                       {"total", r.total},
                       {"chord_edges", edges}};
}

void from_json(const nlohmann::json& j, EvalReport& r) {
    j.at("class_names").get_to(r.class_names);
    j.at("confusion").get_to(r.confusion);
    r.per_class.clear();
    for (const auto& jm : j.at("per_class")) {
        ClassMetrics m;
        jm.at("name").get_to(m.name);
        jm.at("precision").get_to(m.precision);
        jm.at("recall").get_to(m.recall);
        jm.at("f1").get_to(m.f1);
        jm.at("support").get_to(m.support);
        jm.at("zero_denominator").get_to(m.zero_denominator);
        r.per_class.push_back(m);
    }
    j.at("accuracy").get_to(r.accuracy);
    j.at("macro_precision").get_to(r.macro_precision);
    j.at("macro_recall").get_to(r.macro_recall);
    j.at("macro_f1").get_to(r.macro_f1);
    j.at("total").get_to(r.total);
    r.chord_edges.clear();
    for (const auto& je : j.at("chord_edges")) {
        ChordEdge e;
        je.at("from_class").get_to(e.from_class);
        je.at("to_class").get_to(e.to_class);
        je.at("count").get_to(e.count);
        r.chord_edges.push_back(e);
    }
}

}  // namespace qkdsent::report
