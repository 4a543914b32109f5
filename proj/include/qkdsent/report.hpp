#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace qkdsent::report {

struct ClassMetrics {
    std::string name;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t support = 0;
    // Set when the precision or recall denominator was zero and the metric
    // was reported as 0 instead of being omitted.
    bool zero_denominator = false;
};

struct ChordEdge {
    int from_class = 0;
    int to_class = 0;
    std::size_t count = 0;
};

struct EvalReport {
    std::vector<std::string> class_names;
    std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
    std::vector<ClassMetrics> per_class;
    double accuracy = 0.0;
    double macro_precision = 0.0;  // unweighted means over classes
    double macro_recall = 0.0;
    double macro_f1 = 0.0;
    std::size_t total = 0;
    std::vector<ChordEdge> chord_edges;  // nonzero off-diagonal cells
};

// Confusion matrix and per-class precision/recall/F1 from parallel label
// vectors. Zero-denominator metrics are reported as 0 and flagged.
EvalReport evaluate(const std::vector<int>& truth, const std::vector<int>& predicted,
                    const std::vector<std::string>& class_names);

// Standalone SVG chord diagram of the misclassification flows: one circle
// segment per class sized by its share of misclassified windows, ribbons
// colored by the true class. Also writes the edge list beside the SVG
// (path with .svg replaced by .edges.json). With no misclassifications a
// legend-only notice SVG is produced.
void render_chord(const EvalReport& report, const std::string& svg_path);

void write_confusion_csv(const EvalReport& report, const std::string& path);

// Fixed-width text table of per-class and aggregate metrics.
std::string format_table(const EvalReport& report);

void to_json(nlohmann::json& j, const EvalReport& r);
void from_json(const nlohmann::json& j, EvalReport& r);

}  // namespace qkdsent::report
