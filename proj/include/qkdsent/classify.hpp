#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "qkdsent/features.hpp"

namespace qkdsent::classify {

// Feed-forward classifier input: one value per selected feature, MISSING
// entries allowed (imputed inside forward()).
using Input = std::vector<features::MaybeValue>;

// Rectifier hidden layers, softmax output. Weights are row-major
// [output][input] per layer. Inputs are imputed, then standardized with the
// per-column shift/scale captured at training time (selected features keep
// their MinMax-era magnitudes, which span several orders and would otherwise
// defeat any single learning rate). Empty shift/scale means identity.
struct MlpModel {
    std::vector<std::size_t> layer_sizes;
    std::vector<std::vector<double>> weights;
    std::vector<std::vector<double>> biases;
    double imputation_value = 0.0;
    std::vector<double> input_shift;
    std::vector<double> input_scale;

    std::size_t input_size() const { return layer_sizes.front(); }
    std::size_t output_size() const { return layer_sizes.back(); }
};

struct TrainConfig {
    std::size_t epochs = 100;
    std::size_t batch_size = 64;
    double learning_rate = 1e-3;
    double momentum = 0.9;
    std::uint64_t seed = 0;
    bool shuffle = true;
};

// Weights uniform in +-sqrt(6/fan_in) drawn layer by layer, row-major, from
// the seeded stream; biases zero.
MlpModel init_model(const std::vector<std::size_t>& layer_sizes, std::uint64_t seed);

// Probability vector over classes; sums to 1 within 1e-9.
std::vector<double> forward(const MlpModel& model, const Input& input);

// Cross-entropy -ln(p_label), p clamped below at 1e-12.
double loss(const std::vector<double>& probs, int label);

struct TrainResult {
    MlpModel model;
    std::vector<double> epoch_loss;  // mean training loss per epoch
};

// Mini-batch gradient descent with momentum on mean cross-entropy.
// Deterministic in (seed, data, config).
TrainResult train(const std::vector<Input>& rows, const std::vector<int>& labels,
                  const std::vector<std::size_t>& layer_sizes, const TrainConfig& config);

// Analytic gradients vs central finite differences over a seeded random
// parameter subset (>= 100 entries when the model has that many). Returns the
// max relative error |ga-gn| / max(|ga|,|gn|,1e-8).
double gradient_check(const MlpModel& model, const Input& input, int label, double epsilon);

void to_json(nlohmann::json& j, const MlpModel& m);
void from_json(const nlohmann::json& j, MlpModel& m);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

}  // namespace qkdsent::classify
