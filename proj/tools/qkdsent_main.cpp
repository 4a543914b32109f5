// qkdsent: impairment diagnostics for QKD links from QBER/SKR telemetry.
// Subcommands: simulate, extract, train, eval, predict, chord.
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "qkdsent/classify.hpp"
#include "qkdsent/features.hpp"
#include "qkdsent/linksim.hpp"
#include "qkdsent/pipeline.hpp"
#include "qkdsent/report.hpp"
#include "qkdsent/select.hpp"
#include "qkdsent/telemetry.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace qkdsent;

namespace {

constexpr int kSchemaVersion = 1;

// Arguments that are syntactically fine but semantically unusable (bad class
// id, clashing flags). Mapped to exit code 2 like parse errors.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

int log_level() {
    static const int level = [] {
        const char* env = std::getenv("QKDSENT_LOG");
        if (!env) return 1;
        const std::string v(env);
        if (v == "quiet") return 0;
        if (v == "debug") return 2;
        return 1;
    }();
    return level;
}

void log_info(const std::string& msg) {
    if (log_level() >= 1) std::cerr << "[qkdsent] " << msg << '\n';
}

void log_debug(const std::string& msg) {
    if (log_level() >= 2) std::cerr << "[qkdsent:debug] " << msg << '\n';
}

telemetry::LogFormat parse_format(const std::string& name) {
    if (name == "jsonl") return telemetry::LogFormat::Jsonl;
    if (name == "csv") return telemetry::LogFormat::Csv;
    throw UsageError("unknown format: " + name + " (expected jsonl or csv)");
}

std::string sidecar_path(const std::string& out_path) {
    fs::path p(out_path);
    p.replace_extension();
    return p.string() + ".sidecar.json";
}

void write_json_file(const std::string& path, const json& j, int indent = 2) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot open output file: " + path);
    }
    out << j.dump(indent) << '\n';
}

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open file: " + path);
    }
    json j;
    in >> j;
    return j;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateArgs {
    int class_id = -1;
    bool all_classes = false;
    std::string scenario_path;
    std::string link_path;
    std::size_t points = 1000;
    bool points_given = false;
    std::uint64_t seed = 0;
    bool seed_given = false;
    std::string out;
    std::string format = "jsonl";
};

void emit_scenario(const linksim::LinkParams& link, linksim::ScenarioConfig scenario,
                   const std::string& out_path, telemetry::LogFormat format,
                   const std::string& format_name) {
    const auto records = linksim::simulate(link, scenario);
    telemetry::write_log(records, out_path, format);

    double qber_sum = 0.0, skr_sum = 0.0;
    for (const auto& rec : records) {
        qber_sum += rec.qber;
        skr_sum += rec.skr;
    }
    const double n = static_cast<double>(records.size());

    json config{{"link", link}, {"scenario", scenario}};
    json sidecar{{"schema_version", kSchemaVersion},
                 {"class_id", scenario.class_id},
                 {"class_name", linksim::class_names()[scenario.class_id]},
                 {"seed", scenario.seed},
                 {"points", records.size()},
                 {"format", format_name},
                 {"config_hash", pipeline::config_hash(config)},
                 {"link", link},
                 {"scenario", scenario}};
    write_json_file(sidecar_path(out_path), sidecar);

    std::cout << "class " << scenario.class_id << " ("
              << linksim::class_names()[scenario.class_id] << "): " << records.size()
              << " points, mean QBER " << qber_sum / n << ", mean SKR " << skr_sum / n
              << " bit/s -> " << out_path << '\n';
}

int cmd_simulate(const SimulateArgs& args) {
    linksim::LinkParams link;
    if (!args.link_path.empty()) {
        link = read_json_file(args.link_path).get<linksim::LinkParams>();
    }
    const telemetry::LogFormat format = parse_format(args.format);

    if (args.all_classes) {
        fs::create_directories(args.out);
        for (int cid = 0; cid < linksim::kClassCount; ++cid) {
            linksim::ScenarioConfig scenario = linksim::preset(cid);
            scenario.duration_points = args.points;
            scenario.seed = args.seed + static_cast<std::uint64_t>(cid);
            const std::string ext = format == telemetry::LogFormat::Jsonl ? ".jsonl" : ".csv";
            const std::string path =
                (fs::path(args.out) / ("class_" + std::to_string(cid) + ext)).string();
            emit_scenario(link, scenario, path, format, args.format);
        }
        return 0;
    }

    linksim::ScenarioConfig scenario;
    if (!args.scenario_path.empty()) {
        scenario = read_json_file(args.scenario_path).get<linksim::ScenarioConfig>();
        if (args.points_given) scenario.duration_points = args.points;
        if (args.seed_given) scenario.seed = args.seed;
    } else {
        if (args.class_id < 0 || args.class_id >= linksim::kClassCount) {
            throw UsageError("--class must be in 0.." + std::to_string(linksim::kClassCount - 1));
        }
        scenario = linksim::preset(args.class_id);
        scenario.duration_points = args.points;
        scenario.seed = args.seed;
    }
    emit_scenario(link, scenario, args.out, format, args.format);
    return 0;
}

// ---------------------------------------------------------------------------
// extract

struct ExtractArgs {
    std::string in;
    std::string out;
    std::string format = "jsonl";
    std::size_t window = telemetry::kDefaultWindowSize;
    std::size_t stride = 1;
    int label = -1;
};

int cmd_extract(const ExtractArgs& args) {
    const auto records = telemetry::read_log(args.in, parse_format(args.format));
    if (records.size() < args.window) {
        throw std::runtime_error("log shorter than one window");
    }
    telemetry::Window reference;
    reference.samples.assign(records.begin(), records.begin() + static_cast<std::ptrdiff_t>(args.window));
    const telemetry::ScalerParams scaler = telemetry::fit_scaler(reference);

    pipeline::LabeledLog log{records, args.label};
    const pipeline::Dataset ds = pipeline::build_dataset({log}, args.window, args.stride);

    std::vector<features::FeatureVector> rows;
    std::vector<std::optional<int>> labels;
    rows.reserve(ds.windows.size());
    for (const auto& w : ds.windows) {
        rows.push_back(features::extract(w, scaler));
        if (args.label >= 0) {
            labels.emplace_back(args.label);
        }
    }
    features::write_feature_csv(args.out, rows, labels);

    json config{{"window", args.window}, {"stride", args.stride}, {"label", args.label},
                {"format", args.format}, {"catalog_size", features::catalog().size()}};
    write_json_file(args.out + ".meta.json",
                    json{{"schema_version", kSchemaVersion},
                         {"config_hash", pipeline::config_hash(config)},
                         {"config", config},
                         {"windows", rows.size()},
                         {"scaler", scaler}});
    log_info("extracted " + std::to_string(rows.size()) + " windows x " +
             std::to_string(features::catalog().size()) + " features -> " + args.out);
    return 0;
}

// ---------------------------------------------------------------------------
// corpus helpers shared by train/eval

std::vector<pipeline::LabeledLog> read_corpus(const std::string& dir) {
    if (!fs::is_directory(dir)) {
        throw std::runtime_error("corpus directory not found: " + dir);
    }
    std::vector<fs::path> log_paths;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".jsonl") {
            log_paths.push_back(entry.path());
        }
    }
    std::sort(log_paths.begin(), log_paths.end());
    if (log_paths.empty()) {
        throw std::runtime_error("no .jsonl logs in corpus directory: " + dir);
    }
    std::vector<pipeline::LabeledLog> logs;
    for (const fs::path& path : log_paths) {
        const std::string sidecar = sidecar_path(path.string());
        if (!fs::exists(sidecar)) {
            throw std::runtime_error("missing label sidecar for " + path.string());
        }
        const json meta = read_json_file(sidecar);
        pipeline::LabeledLog log;
        log.label = meta.at("class_id").get<int>();
        log.records = telemetry::read_log(path.string(), telemetry::LogFormat::Jsonl);
        log_debug("corpus log " + path.filename().string() + ": class " +
                  std::to_string(log.label) + ", " + std::to_string(log.records.size()) +
                  " records");
        logs.push_back(std::move(log));
    }
    return logs;
}

telemetry::ScalerParams reference_scaler(const std::vector<pipeline::LabeledLog>& logs,
                                         std::size_t window) {
    // Reference points: the first window of normal-class data.
    for (const auto& log : logs) {
        if (log.label == 0 && log.records.size() >= window) {
            telemetry::Window ref;
            ref.samples.assign(log.records.begin(),
                               log.records.begin() + static_cast<std::ptrdiff_t>(window));
            return telemetry::fit_scaler(ref);
        }
    }
    throw std::runtime_error("corpus has no class-0 log to fit the reference scaler");
}

std::vector<std::string> corpus_class_names(std::size_t class_count) {
    if (class_count == static_cast<std::size_t>(linksim::kClassCount)) {
        return {linksim::class_names().begin(), linksim::class_names().end()};
    }
    std::vector<std::string> names;
    for (std::size_t c = 0; c < class_count; ++c) {
        names.push_back("class_" + std::to_string(c));
    }
    return names;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
    std::string corpus;
    std::string out = "model.json";
    std::string report_path;
    std::size_t window = telemetry::kDefaultWindowSize;
    std::size_t stride = 1;
    std::size_t k = 50;
    std::uint64_t seed = 0;
    double train_fraction = 0.8;
    std::string channels = "both";
    select::SelectParams select_params{};
    classify::TrainConfig mlp_config{};

    TrainArgs() {
        // Defaults tuned on the simulated corpus; the feature scales need a
        // slightly hotter schedule than the library fallback.
        mlp_config.epochs = 200;
        mlp_config.learning_rate = 5e-3;
    }
};

int cmd_train(const TrainArgs& args) {
    const auto logs = read_corpus(args.corpus);
    const telemetry::ScalerParams scaler = reference_scaler(logs, args.window);
    const pipeline::Dataset ds = pipeline::build_dataset(logs, args.window, args.stride);
    log_info("dataset: " + std::to_string(ds.windows.size()) + " windows (" +
             std::to_string(ds.skipped_short_logs) + " short logs skipped)");
    const pipeline::SplitResult split = pipeline::temporal_split(ds.windows, args.train_fraction);
    log_info("split: " + std::to_string(split.train.size()) + " train / " +
             std::to_string(split.test.size()) + " test, " +
             std::to_string(split.dropped_overlap) + " dropped by leakage guard");

    int max_label = 0;
    for (const auto& w : ds.windows) {
        max_label = std::max(max_label, *w.label);
    }

    pipeline::FitOptions options;
    options.k = args.k;
    options.select_params = args.select_params;
    options.mlp_config = args.mlp_config;
    options.mlp_config.seed = args.seed;
    options.channels = args.channels == "qber"   ? pipeline::ChannelMask::QberOnly
                       : args.channels == "both" ? pipeline::ChannelMask::Both
                                                 : throw UsageError("--channels must be both|qber");
    options.class_names = corpus_class_names(static_cast<std::size_t>(max_label) + 1);

    log_info("fitting selector and classifier (k=" + std::to_string(args.k) + ")");
    pipeline::TrainedPipeline trained = pipeline::fit_pipeline(split.train, scaler, options);

    // Held-out evaluation: full pipeline and the selector-alone baseline.
    std::vector<int> truth, predicted, baseline_predicted;
    for (const auto& w : split.test) {
        const features::FeatureVector fv = pipeline::window_features(trained, w);
        classify::Input input;
        for (std::size_t idx : trained.selected_indices) {
            input.push_back(fv.values[idx]);
        }
        const auto probs = classify::forward(trained.mlp, input);
        truth.push_back(*w.label);
        predicted.push_back(pipeline::argmax(probs));
        baseline_predicted.push_back(select::predict_class(trained.ensemble, fv));
    }
    const report::EvalReport eval = report::evaluate(truth, predicted, trained.class_names);
    const report::EvalReport baseline =
        report::evaluate(truth, baseline_predicted, trained.class_names);

    trained.training_report["split"] =
        json{{"train_windows", split.train.size()},
             {"test_windows", split.test.size()},
             {"dropped_overlap", split.dropped_overlap},
             {"skipped_short_logs", ds.skipped_short_logs},
             {"train_fraction", args.train_fraction},
             {"stride", args.stride}};
    pipeline::save_pipeline(trained, args.out);

    const std::string report_path =
        args.report_path.empty() ? args.out + ".report.json" : args.report_path;
    json report_json{{"schema_version", kSchemaVersion},
                     {"seed", args.seed},
                     {"config_hash", trained.training_report.at("config_hash")},
                     {"channels", args.channels},
                     {"k", args.k},
                     {"evaluation", eval},
                     {"baseline_gbdt", json{{"macro_f1", baseline.macro_f1},
                                            {"accuracy", baseline.accuracy}}},
                     {"split", trained.training_report.at("split")}};
    write_json_file(report_path, report_json);

    std::cout << report::format_table(eval) << '\n'
              << "gbdt baseline (all features): macro F1 " << baseline.macro_f1 << ", accuracy "
              << baseline.accuracy << '\n'
              << "pipeline (top-" << args.k << " -> mlp): macro F1 " << eval.macro_f1
              << ", accuracy " << eval.accuracy << '\n'
              << "model -> " << args.out << "\nreport -> " << report_path << '\n';
    return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
    std::string model;
    std::string corpus;
    std::string out = "report.json";
    std::size_t stride = 1;
};

int cmd_eval(const EvalArgs& args) {
    const pipeline::TrainedPipeline trained = pipeline::load_pipeline(args.model);
    const auto logs = read_corpus(args.corpus);
    const pipeline::Dataset ds = pipeline::build_dataset(logs, trained.window_size, args.stride);
    if (ds.windows.empty()) {
        throw std::runtime_error("corpus produced no windows");
    }
    std::vector<int> truth, predicted;
    for (const auto& w : ds.windows) {
        truth.push_back(*w.label);
        predicted.push_back(pipeline::argmax(pipeline::predict_window(trained, w)));
    }
    const report::EvalReport eval = report::evaluate(truth, predicted, trained.class_names);
    write_json_file(args.out, json{{"schema_version", kSchemaVersion},
                                   {"config_hash", trained.training_report.value("config_hash", "")},
                                   {"seed", trained.training_report.value("seed", 0)},
                                   {"evaluation", eval}});
    std::cout << report::format_table(eval);
    return 0;
}

// ---------------------------------------------------------------------------
// predict

struct PredictArgs {
    std::string model;
    std::string in = "-";
};

int cmd_predict(const PredictArgs& args) {
    const pipeline::TrainedPipeline trained = pipeline::load_pipeline(args.model);
    pipeline::StreamPredictor predictor(trained);

    std::ifstream file;
    std::istream* in = &std::cin;
    if (args.in != "-") {
        file.open(args.in);
        if (!file) {
            throw std::runtime_error("cannot open input stream: " + args.in);
        }
        in = &file;
    }

    std::string line;
    std::size_t line_no = 0;
    while (std::getline(*in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::exception& e) {
            throw telemetry::ParseError(line_no, std::string("invalid JSON: ") + e.what());
        }
        telemetry::SampleRecord rec{obj.at("ts").get<std::int64_t>(),
                                    obj.at("qber").get<double>(), obj.at("skr").get<double>()};
        const auto prediction = predictor.push(rec);
        json out_line;
        if (!prediction) {
            out_line = json{{"ts", rec.ts_ms}, {"status", "warmup"}};
        } else {
            out_line = json{{"ts", rec.ts_ms},
                            {"class", prediction->class_id},
                            {"class_name", prediction->class_name},
                            {"probs", prediction->probs}};
        }
        std::cout << out_line.dump() << '\n';
    }
    return 0;
}

// ---------------------------------------------------------------------------
// chord

struct ChordArgs {
    std::string report_path;
    std::string out = "chord.svg";
};

int cmd_chord(const ChordArgs& args) {
    const json j = read_json_file(args.report_path);
    report::EvalReport eval;
    if (j.contains("evaluation")) {
        j.at("evaluation").get_to(eval);
    } else {
        j.get_to(eval);
    }
    report::render_chord(eval, args.out);
    log_info("chord diagram -> " + args.out);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"QKD link impairment diagnostics from QBER/SKR telemetry"};
    app.require_subcommand(1);

    SimulateArgs sim;
    CLI::App* sim_cmd = app.add_subcommand("simulate", "Generate labeled telemetry");
    sim_cmd->add_option("--class", sim.class_id, "Impairment class id 0..8");
    sim_cmd->add_flag("--all", sim.all_classes, "Generate every class into --out directory");
    sim_cmd->add_option("--scenario", sim.scenario_path, "Scenario config JSON");
    sim_cmd->add_option("--link", sim.link_path, "Link params JSON");
    CLI::Option* sim_points = sim_cmd->add_option("--points", sim.points, "Samples to generate");
    CLI::Option* sim_seed = sim_cmd->add_option("--seed", sim.seed, "RNG seed");
    sim_cmd->add_option("--out", sim.out, "Output JSONL file (or directory with --all)")
        ->required();
    sim_cmd->add_option("--format", sim.format, "jsonl or csv");

    ExtractArgs ext;
    CLI::App* ext_cmd = app.add_subcommand("extract", "Window a log and export features as CSV");
    ext_cmd->add_option("--in", ext.in, "Input telemetry log")->required();
    ext_cmd->add_option("--out", ext.out, "Output CSV path")->required();
    ext_cmd->add_option("--format", ext.format, "jsonl or csv");
    ext_cmd->add_option("--window", ext.window, "Window size N");
    ext_cmd->add_option("--stride", ext.stride, "Window stride");
    ext_cmd->add_option("--label", ext.label, "Class label for all rows (-1: unlabeled)");

    TrainArgs tr;
    CLI::App* tr_cmd = app.add_subcommand("train", "Train the selector+MLP pipeline on a corpus");
    tr_cmd->add_option("--corpus", tr.corpus, "Directory of labeled .jsonl logs")->required();
    tr_cmd->add_option("--out", tr.out, "Trained pipeline output path");
    tr_cmd->add_option("--report", tr.report_path, "Evaluation report path");
    tr_cmd->add_option("--window", tr.window, "Window size N");
    tr_cmd->add_option("--stride", tr.stride, "Window stride");
    tr_cmd->add_option("--k", tr.k, "Selected feature count");
    tr_cmd->add_option("--seed", tr.seed, "Training seed");
    tr_cmd->add_option("--train-fraction", tr.train_fraction, "Temporal split fraction");
    tr_cmd->add_option("--channels", tr.channels, "both or qber");
    tr_cmd->add_option("--rounds", tr.select_params.rounds, "Boosting rounds");
    tr_cmd->add_option("--max-depth", tr.select_params.max_depth, "Tree depth limit");
    tr_cmd->add_option("--epochs", tr.mlp_config.epochs, "MLP epochs");
    tr_cmd->add_option("--batch-size", tr.mlp_config.batch_size, "MLP batch size");
    tr_cmd->add_option("--learning-rate", tr.mlp_config.learning_rate, "MLP learning rate");

    EvalArgs ev;
    CLI::App* ev_cmd = app.add_subcommand("eval", "Evaluate a trained pipeline on a corpus");
    ev_cmd->add_option("--model", ev.model, "Trained pipeline JSON")->required();
    ev_cmd->add_option("--corpus", ev.corpus, "Directory of labeled .jsonl logs")->required();
    ev_cmd->add_option("--out", ev.out, "Report output path");
    ev_cmd->add_option("--stride", ev.stride, "Window stride");

    PredictArgs pr;
    CLI::App* pr_cmd = app.add_subcommand("predict", "Stream predictions over JSONL telemetry");
    pr_cmd->add_option("--model", pr.model, "Trained pipeline JSON")->required();
    pr_cmd->add_option("--in", pr.in, "Input stream path or - for stdin");

    ChordArgs ch;
    CLI::App* ch_cmd = app.add_subcommand("chord", "Render the misclassification chord diagram");
    ch_cmd->add_option("--report", ch.report_path, "Evaluation report JSON")->required();
    ch_cmd->add_option("--out", ch.out, "SVG output path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    sim.points_given = sim_points->count() > 0;
    sim.seed_given = sim_seed->count() > 0;

    try {
        if (sim_cmd->parsed()) return cmd_simulate(sim);
        if (ext_cmd->parsed()) return cmd_extract(ext);
        if (tr_cmd->parsed()) return cmd_train(tr);
        if (ev_cmd->parsed()) return cmd_eval(ev);
        if (pr_cmd->parsed()) return cmd_predict(pr);
        if (ch_cmd->parsed()) return cmd_chord(ch);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
