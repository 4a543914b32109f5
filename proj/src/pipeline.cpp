#include "qkdsent/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace qkdsent::pipeline {

Dataset build_dataset(const std::vector<LabeledLog>& logs, std::size_t window_size,
                      std::size_t stride) {
    if (window_size < 2) {
        throw std::invalid_argument("build_dataset: window_size must be >= 2");
    }
    if (stride < 1) {
        throw std::invalid_argument("build_dataset: stride must be >= 1");
    }
    Dataset ds;
    for (std::size_t li = 0; li < logs.size(); ++li) {
        const LabeledLog& log = logs[li];
        if (log.records.size() < window_size) {
            ++ds.skipped_short_logs;
            continue;
        }
        for (std::size_t start = 0; start + window_size <= log.records.size(); start += stride) {
            telemetry::Window w;
            w.samples.assign(log.records.begin() + static_cast<std::ptrdiff_t>(start),
                             log.records.begin() + static_cast<std::ptrdiff_t>(start + window_size));
            w.label = log.label;
            w.log_index = li;
            w.start_index = start;
            ds.windows.push_back(std::move(w));
        }
    }
    return ds;
}

SplitResult temporal_split(const std::vector<telemetry::Window>& windows, double train_fraction) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw std::invalid_argument("temporal_split: train_fraction must be in (0,1)");
    }
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < windows.size(); ++i) {
        if (!windows[i].label) {
            throw std::invalid_argument("temporal_split: unlabeled window");
        }
        by_class[*windows[i].label].push_back(i);
    }
    if (by_class.size() < 2) {
        throw std::invalid_argument("temporal_split: need at least 2 classes");
    }

    SplitResult result;
    for (auto& [label, indices] : by_class) {
        if (indices.size() < 5) {
            throw std::runtime_error("temporal_split: class " + std::to_string(label) +
                                     " has fewer than 5 windows");
        }
        std::sort(indices.begin(), indices.end(), [&](std::size_t a, std::size_t b) {
            const telemetry::Window& wa = windows[a];
            const telemetry::Window& wb = windows[b];
            if (wa.first_ts() != wb.first_ts()) return wa.first_ts() < wb.first_ts();
            if (wa.log_index != wb.log_index) return wa.log_index < wb.log_index;
            return wa.start_index < wb.start_index;
        });
        const std::size_t n_train = static_cast<std::size_t>(
            std::ceil(train_fraction * static_cast<double>(indices.size())));

        std::int64_t min_test_first = 0;
        bool have_test = n_train < indices.size();
        if (have_test) {
            min_test_first = windows[indices[n_train]].first_ts();
            for (std::size_t i = n_train; i < indices.size(); ++i) {
                min_test_first = std::min(min_test_first, windows[indices[i]].first_ts());
            }
        }

        std::size_t kept = 0;
        for (std::size_t i = 0; i < n_train; ++i) {
            const telemetry::Window& w = windows[indices[i]];
            if (have_test && w.last_ts() >= min_test_first) {
                ++result.dropped_overlap;  // span overlaps the test head
                continue;
            }
            result.train.push_back(w);
            ++kept;
        }
        if (kept == 0) {
            throw std::runtime_error("temporal_split: class " + std::to_string(label) +
                                     " lost all train windows to the leakage guard");
        }
        for (std::size_t i = n_train; i < indices.size(); ++i) {
            result.test.push_back(windows[indices[i]]);
        }
    }
    return result;
}

namespace {

bool feature_allowed(const std::string& name, ChannelMask mask) {
    if (mask == ChannelMask::Both) return true;
    return name.rfind("qber__", 0) == 0;
}

features::FeatureVector extract_masked(const telemetry::Window& window,
                                       const telemetry::ScalerParams& scaler, ChannelMask mask) {
    features::FeatureVector fv = features::extract(window, scaler);
    if (mask == ChannelMask::QberOnly) {
        for (std::size_t i = 0; i < fv.values.size(); ++i) {
            if (!feature_allowed(features::catalog()[i], mask)) {
                fv.values[i].reset();
            }
        }
    }
    return fv;
}

classify::Input project(const features::FeatureVector& fv,
                        const std::vector<std::size_t>& indices) {
    classify::Input input;
    input.reserve(indices.size());
    for (std::size_t idx : indices) {
        input.push_back(fv.values[idx]);
    }
    return input;
}

std::string channels_tag(ChannelMask mask) {
    return mask == ChannelMask::Both ? "both" : "qber_only";
}

ChannelMask channels_from_tag(const std::string& tag) {
    if (tag == "both") return ChannelMask::Both;
    if (tag == "qber_only") return ChannelMask::QberOnly;
    throw std::runtime_error("unknown channels tag: " + tag);
}

}  // namespace

TrainedPipeline fit_pipeline(const std::vector<telemetry::Window>& train_windows,
                             const telemetry::ScalerParams& scaler, const FitOptions& options) {
    if (train_windows.empty()) {
        throw std::invalid_argument("fit_pipeline: empty training set");
    }
    const std::size_t window_size = train_windows.front().samples.size();

    std::vector<features::FeatureVector> rows;
    std::vector<int> labels;
    rows.reserve(train_windows.size());
    labels.reserve(train_windows.size());
    for (const telemetry::Window& w : train_windows) {
        if (w.samples.size() != window_size) {
            throw std::invalid_argument("fit_pipeline: inconsistent window sizes");
        }
        if (!w.label) {
            throw std::invalid_argument("fit_pipeline: unlabeled training window");
        }
        rows.push_back(extract_masked(w, scaler, options.channels));
        labels.push_back(*w.label);
    }

    TrainedPipeline p;
    p.scaler = scaler;
    p.window_size = window_size;
    p.channels = options.channels;
    p.ensemble = select::fit(rows, labels, options.select_params);

    // Rank every feature, then restrict to the allowed channel set; taking
    // the first k preserves the gain-then-catalog ordering contract.
    const std::vector<std::string> ranked =
        select::top_k_features(p.ensemble, p.ensemble.feature_names.size());
    for (const std::string& name : ranked) {
        if (p.selected_features.size() == options.k) break;
        if (feature_allowed(name, options.channels)) {
            p.selected_features.push_back(name);
        }
    }
    if (p.selected_features.size() < options.k) {
        throw std::invalid_argument("fit_pipeline: k exceeds the usable feature count");
    }
    std::size_t padded = 0;
    for (const std::string& name : p.selected_features) {
        p.selected_indices.push_back(features::catalog_index(name));
        const auto it = p.ensemble.feature_gain.find(name);
        if (it == p.ensemble.feature_gain.end() || it->second <= 0.0) {
            ++padded;
        }
    }

    std::vector<classify::Input> inputs;
    inputs.reserve(rows.size());
    for (const features::FeatureVector& fv : rows) {
        inputs.push_back(project(fv, p.selected_indices));
    }
    std::vector<std::size_t> layer_sizes;
    layer_sizes.push_back(options.k);
    layer_sizes.insert(layer_sizes.end(), options.hidden_sizes.begin(), options.hidden_sizes.end());
    layer_sizes.push_back(p.ensemble.class_count);
    classify::TrainResult trained =
        classify::train(inputs, labels, layer_sizes, options.mlp_config);
    p.mlp = std::move(trained.model);

    if (!options.class_names.empty()) {
        if (options.class_names.size() != p.ensemble.class_count) {
            throw std::invalid_argument("fit_pipeline: class_names length mismatch");
        }
        p.class_names = options.class_names;
    } else {
        for (std::size_t cid = 0; cid < p.ensemble.class_count; ++cid) {
            p.class_names.push_back("class_" + std::to_string(cid));
        }
    }

    nlohmann::json config{{"k", options.k},
                          {"select_params", options.select_params},
                          {"mlp_config", options.mlp_config},
                          {"channels", channels_tag(options.channels)},
                          {"hidden_sizes", options.hidden_sizes},
                          {"window_size", window_size}};
    std::map<int, std::size_t> class_counts;
    for (int label : labels) {
        ++class_counts[label];
    }
    p.training_report = nlohmann::json{{"config", config},
                                       {"config_hash", config_hash(config)},
                                       {"seed", options.mlp_config.seed},
                                       {"train_windows", train_windows.size()},
                                       {"class_counts", class_counts},
                                       {"padded_features", padded},
                                       {"positive_gain_features", select::positive_gain_count(p.ensemble)},
                                       {"epoch_loss", trained.epoch_loss}};
    return p;
}

features::FeatureVector window_features(const TrainedPipeline& pipeline,
                                        const telemetry::Window& window) {
    if (window.samples.size() != pipeline.window_size) {
        throw std::invalid_argument("window_features: window size mismatch");
    }
    return extract_masked(window, pipeline.scaler, pipeline.channels);
}

std::vector<double> predict_window(const TrainedPipeline& pipeline,
                                   const telemetry::Window& window) {
    const features::FeatureVector fv = window_features(pipeline, window);
    return classify::forward(pipeline.mlp, project(fv, pipeline.selected_indices));
}

int argmax(const std::vector<double>& probs) {
    return static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

std::optional<Prediction> StreamPredictor::push(const telemetry::SampleRecord& sample) {
    ring_.push_back(sample);
    if (ring_.size() > pipeline_.window_size) {
        ring_.pop_front();
    }
    if (ring_.size() < pipeline_.window_size) {
        return std::nullopt;
    }
    telemetry::Window window;
    window.samples.assign(ring_.begin(), ring_.end());
    Prediction pred;
    pred.probs = predict_window(pipeline_, window);
    pred.class_id = argmax(pred.probs);
    pred.class_name = pipeline_.class_names[static_cast<std::size_t>(pred.class_id)];
    return pred;
}

void to_json(nlohmann::json& j, const TrainedPipeline& p) {
    j = nlohmann::json{{"schema_version", kSchemaVersion},
                       {"scaler", p.scaler},
                       {"window_size", p.window_size},
                       {"selected_features", p.selected_features},
                       {"channels", channels_tag(p.channels)},
                       {"ensemble", p.ensemble},
                       {"mlp", p.mlp},
                       {"class_names", p.class_names},
                       {"training_report", p.training_report}};
}

void from_json(const nlohmann::json& j, TrainedPipeline& p) {
    const int version = j.at("schema_version").get<int>();
    if (version != kSchemaVersion) {
        throw std::runtime_error("pipeline schema_version " + std::to_string(version) +
                                 " unsupported, expected " + std::to_string(kSchemaVersion));
    }
    j.at("scaler").get_to(p.scaler);
    j.at("window_size").get_to(p.window_size);
    j.at("selected_features").get_to(p.selected_features);
    p.channels = channels_from_tag(j.at("channels").get<std::string>());
    j.at("ensemble").get_to(p.ensemble);
    j.at("mlp").get_to(p.mlp);
    j.at("class_names").get_to(p.class_names);
    p.training_report = j.at("training_report");

    p.selected_indices.clear();
    for (const std::string& name : p.selected_features) {
        p.selected_indices.push_back(features::catalog_index(name));
    }
    if (p.selected_features.size() != p.mlp.input_size()) {
        throw std::runtime_error("pipeline file: selected_features width != mlp input width");
    }
    if (p.class_names.size() != p.mlp.output_size()) {
        throw std::runtime_error("pipeline file: class_names length != mlp output width");
    }
}

void save_pipeline(const TrainedPipeline& pipeline, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot open output file: " + path);
    }
    nlohmann::json j = pipeline;
    out << j.dump() << '\n';
}

TrainedPipeline load_pipeline(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open model file: " + path);
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("model file is not valid JSON: " + std::string(e.what()));
    }
    return j.get<TrainedPipeline>();
}

std::uint64_t fnv1a64(std::string_view text) {
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        hash ^= ch;
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

std::string config_hash(const nlohmann::json& config) {
    std::ostringstream hex;
    hex << std::hex << fnv1a64(config.dump());
    return hex.str();
}

}  // namespace qkdsent::pipeline
