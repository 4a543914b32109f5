#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "qkdsent/report.hpp"
#include "qkdsent/rng.hpp"

using namespace qkdsent;

namespace {

std::vector<std::string> names(std::size_t n) {
    std::vector<std::string> v;
    for (std::size_t i = 0; i < n; ++i) v.push_back("c" + std::to_string(i));
    return v;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::size_t count_occurrences(const std::string& text, const std::string& needle) {
    std::size_t count = 0, pos = 0;
    while ((pos = text.find(needle, pos)) != std::string::npos) {
        ++count;
        pos += needle.size();
    }
    return count;
}

}  // namespace

TEST_CASE("perfect predictions give accuracy and F1 of 1") {
    const std::vector<int> labels{0, 1, 2, 0, 1, 2, 2};
    const auto rep = report::evaluate(labels, labels, names(3));
    CHECK(rep.accuracy == 1.0);
    for (const auto& m : rep.per_class) {
        CHECK(m.f1 == 1.0);
        CHECK_FALSE(m.zero_denominator);
    }
    CHECK(rep.macro_f1 == 1.0);
    CHECK(rep.chord_edges.empty());
}

TEST_CASE("hand-counted confusion: truth 0011, predicted 0111") {
    const auto rep = report::evaluate({0, 0, 1, 1}, {0, 1, 1, 1}, names(2));
    // class 1: TP=2, FP=1, FN=0.
    CHECK(rep.per_class[1].precision == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(rep.per_class[1].recall == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rep.per_class[1].f1 == doctest::Approx(0.8).epsilon(1e-12));
    // class 0: TP=1, FP=0, FN=1.
    CHECK(rep.per_class[0].precision == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rep.per_class[0].recall == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(rep.accuracy == doctest::Approx(0.75).epsilon(1e-12));
    REQUIRE(rep.chord_edges.size() == 1);
    CHECK(rep.chord_edges[0].from_class == 0);
    CHECK(rep.chord_edges[0].to_class == 1);
    CHECK(rep.chord_edges[0].count == 1);
}

TEST_CASE("a class never predicted and never true is reported as flagged zero") {
    const auto rep = report::evaluate({0, 0, 2}, {0, 0, 2}, names(3));
    CHECK(rep.per_class[1].precision == 0.0);
    CHECK(rep.per_class[1].recall == 0.0);
    CHECK(rep.per_class[1].f1 == 0.0);
    CHECK(rep.per_class[1].zero_denominator);
    CHECK(rep.per_class[1].support == 0);
}

TEST_CASE("confusion matrix identities hold on random label vectors") {
    Rng rng(1212);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t c = 2 + rng.below(7);
        std::vector<int> truth, predicted;
        for (int i = 0; i < 300; ++i) {
            truth.push_back(static_cast<int>(rng.below(c)));
            predicted.push_back(static_cast<int>(rng.below(c)));
        }
        const auto rep = report::evaluate(truth, predicted, names(c));

        std::size_t trace = 0;
        for (std::size_t k = 0; k < c; ++k) {
            trace += rep.confusion[k][k];
            std::size_t row_sum = 0;
            for (std::size_t p = 0; p < c; ++p) row_sum += rep.confusion[k][p];
            CHECK(row_sum == rep.per_class[k].support);
            CHECK(rep.per_class[k].precision >= 0.0);
            CHECK(rep.per_class[k].precision <= 1.0);
            CHECK(rep.per_class[k].recall >= 0.0);
            CHECK(rep.per_class[k].recall <= 1.0);
        }
        CHECK(rep.accuracy ==
              doctest::Approx(double(trace) / double(rep.total)).epsilon(1e-12));

        double f1_sum = 0.0;
        for (const auto& m : rep.per_class) f1_sum += m.f1;
        CHECK(rep.macro_f1 == doctest::Approx(f1_sum / double(c)).epsilon(1e-12));

        // Chord data conservation: edge counts sum to total misclassifications.
        std::size_t edge_total = 0;
        for (const auto& e : rep.chord_edges) edge_total += e.count;
        CHECK(edge_total == rep.total - trace);
    }
}

TEST_CASE("evaluate rejects mismatched or empty inputs") {
    CHECK_THROWS_AS(report::evaluate({0, 1}, {0}, names(2)), std::invalid_argument);
    CHECK_THROWS_AS(report::evaluate({}, {}, names(2)), std::invalid_argument);
    CHECK_THROWS_AS(report::evaluate({0, 2}, {0, 0}, names(2)), std::invalid_argument);
}

TEST_CASE("chord rendering: one ribbon per nonzero off-diagonal cell") {
    const auto tmp = std::filesystem::temp_directory_path();
    const std::string svg_path = (tmp / "qkdsent_chord.svg").string();
    const std::string edges_path = (tmp / "qkdsent_chord.edges.json").string();

    // Single off-diagonal cell: 5 windows of class 0 predicted as class 1.
    std::vector<int> truth, predicted;
    for (int i = 0; i < 20; ++i) {
        truth.push_back(i % 2);
        predicted.push_back(i % 2);
    }
    for (int i = 0; i < 5; ++i) {
        truth.push_back(0);
        predicted.push_back(1);
    }
    const auto rep = report::evaluate(truth, predicted, names(2));
    report::render_chord(rep, svg_path);

    const std::string svg = slurp(svg_path);
    CHECK(count_occurrences(svg, "fill-opacity") == 1);  // exactly one ribbon
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("xlink") == std::string::npos);  // self-contained, no external refs

    const nlohmann::json edges = nlohmann::json::parse(slurp(edges_path));
    REQUIRE(edges.at("edges").size() == 1);
    CHECK(edges.at("edges")[0].at("count") == 5);

    std::remove(svg_path.c_str());
    std::remove(edges_path.c_str());
}

TEST_CASE("chord rendering: notice SVG when nothing is misclassified") {
    const auto tmp = std::filesystem::temp_directory_path();
    const std::string svg_path = (tmp / "qkdsent_chord_clean.svg").string();
    const auto rep = report::evaluate({0, 1, 2}, {0, 1, 2}, names(3));
    report::render_chord(rep, svg_path);
    const std::string svg = slurp(svg_path);
    CHECK(svg.find("No misclassifications") != std::string::npos);
    CHECK(count_occurrences(svg, "fill-opacity") == 0);
    std::remove(svg_path.c_str());
    std::remove((tmp / "qkdsent_chord_clean.edges.json").string().c_str());
}

TEST_CASE("chord rendering: ribbon count matches a multi-class confusion") {
    Rng rng(33);
    std::vector<int> truth, predicted;
    for (int i = 0; i < 400; ++i) {
        const int t = static_cast<int>(rng.below(9));
        truth.push_back(t);
        predicted.push_back(rng.uniform01() < 0.8 ? t : static_cast<int>(rng.below(9)));
    }
    const auto rep = report::evaluate(truth, predicted, names(9));
    const auto tmp = std::filesystem::temp_directory_path();
    const std::string svg_path = (tmp / "qkdsent_chord9.svg").string();
    report::render_chord(rep, svg_path);
    const std::string svg = slurp(svg_path);
    CHECK(count_occurrences(svg, "fill-opacity") == rep.chord_edges.size());
    std::remove(svg_path.c_str());
    std::remove((tmp / "qkdsent_chord9.edges.json").string().c_str());
}

TEST_CASE("report JSON round-trip and confusion CSV") {
    const auto rep = report::evaluate({0, 0, 1, 1, 2}, {0, 1, 1, 1, 0}, names(3));
    const auto restored = nlohmann::json(rep).get<report::EvalReport>();
    CHECK(restored.accuracy == rep.accuracy);
    CHECK(restored.confusion == rep.confusion);
    CHECK(restored.macro_f1 == rep.macro_f1);
    CHECK(restored.chord_edges.size() == rep.chord_edges.size());

    const auto tmp = std::filesystem::temp_directory_path();
    const std::string csv_path = (tmp / "qkdsent_confusion.csv").string();
    report::write_confusion_csv(rep, csv_path);
    const std::string csv = slurp(csv_path);
    CHECK(csv.find("c0,1,1,0") != std::string::npos);  // row for class 0
    std::remove(csv_path.c_str());

    const std::string table = report::format_table(rep);
    CHECK(table.find("accuracy") != std::string::npos);
    CHECK(table.find("macro average") != std::string::npos);
}
