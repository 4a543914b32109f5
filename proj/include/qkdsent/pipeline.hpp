#pragma once

#include <deque>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "qkdsent/classify.hpp"
#include "qkdsent/features.hpp"
#include "qkdsent/select.hpp"
#include "qkdsent/telemetry.hpp"

namespace qkdsent::pipeline {

inline constexpr int kSchemaVersion = 1;

struct LabeledLog {
    std::vector<telemetry::SampleRecord> records;
    int label = 0;
};

struct Dataset {
    std::vector<telemetry::Window> windows;
    std::size_t skipped_short_logs = 0;
};

// Sliding windows with the given stride per log; windows never span log
// boundaries and inherit the log's label. Logs shorter than window_size are
// skipped and counted.
Dataset build_dataset(const std::vector<LabeledLog>& logs, std::size_t window_size,
                      std::size_t stride = 1);

struct SplitResult {
    std::vector<telemetry::Window> train;
    std::vector<telemetry::Window> test;
    std::size_t dropped_overlap = 0;  // train windows removed by the leakage guard
};

// Per class: the chronologically first ceil(train_fraction*n) windows train,
// the rest test. Train windows whose timestamp span overlaps any test span of
// their class are dropped, so max train timestamp < min test timestamp holds
// per class.
SplitResult temporal_split(const std::vector<telemetry::Window>& windows,
                           double train_fraction = 0.8);

// QberOnly blanks all skr__ and cross__ features to MISSING before selection
// and restricts the selected set to qber__ features.
enum class ChannelMask { Both, QberOnly };

struct FitOptions {
    std::size_t k = 50;
    select::SelectParams select_params{};
    classify::TrainConfig mlp_config{};
    ChannelMask channels = ChannelMask::Both;
    std::vector<std::size_t> hidden_sizes{128, 256, 128};
    std::vector<std::string> class_names;  // empty: derived from labels
};

struct TrainedPipeline {
    telemetry::ScalerParams scaler;
    std::size_t window_size = telemetry::kDefaultWindowSize;
    std::vector<std::string> selected_features;
    std::vector<std::size_t> selected_indices;  // catalog indices, derived
    ChannelMask channels = ChannelMask::Both;
    select::BoostedEnsemble ensemble;
    classify::MlpModel mlp;
    std::vector<std::string> class_names;
    nlohmann::json training_report;
};

// Two-stage fit: boosted-tree selector on the full masked feature table, then
// the MLP on the top-k projection.
TrainedPipeline fit_pipeline(const std::vector<telemetry::Window>& train_windows,
                             const telemetry::ScalerParams& scaler, const FitOptions& options);

// Full (masked) catalog features of one window under the pipeline's scaler.
// Shared by the MLP path, the selector baseline, and the stream predictor so
// batch and streaming predictions agree exactly.
features::FeatureVector window_features(const TrainedPipeline& pipeline,
                                        const telemetry::Window& window);

// Probability vector over classes for one window.
std::vector<double> predict_window(const TrainedPipeline& pipeline,
                                   const telemetry::Window& window);

int argmax(const std::vector<double>& probs);

void save_pipeline(const TrainedPipeline& pipeline, const std::string& path);
TrainedPipeline load_pipeline(const std::string& path);
void to_json(nlohmann::json& j, const TrainedPipeline& p);
void from_json(const nlohmann::json& j, TrainedPipeline& p);

struct Prediction {
    int class_id = 0;
    std::string class_name;
    std::vector<double> probs;
};

// Single-consumer sliding-window predictor. push() returns predictions once
// the ring holds window_size samples; earlier pushes signal warm-up.
class StreamPredictor {
public:
    explicit StreamPredictor(const TrainedPipeline& pipeline) : pipeline_(pipeline) {}

    std::optional<Prediction> push(const telemetry::SampleRecord& sample);
    bool ready() const { return ring_.size() >= pipeline_.window_size; }
    void reset() { ring_.clear(); }

private:
    const TrainedPipeline& pipeline_;
    std::deque<telemetry::SampleRecord> ring_;
};

// FNV-1a over the canonical dump; used to stamp artifacts with a config hash.
std::uint64_t fnv1a64(std::string_view text);
std::string config_hash(const nlohmann::json& config);

}  // namespace qkdsent::pipeline
