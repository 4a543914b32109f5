#include "qkdsent/classify.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "qkdsent/rng.hpp"

namespace qkdsent::classify {

namespace {

constexpr double kProbFloor = 1e-12;

std::vector<double> impute(const MlpModel& model, const Input& input) {
    if (input.size() != model.input_size()) {
        throw std::invalid_argument("forward: input width mismatch");
    }
    std::vector<double> x(input.size());
    for (std::size_t i = 0; i < input.size(); ++i) {
        x[i] = input[i] ? *input[i] : model.imputation_value;
    }
    if (!model.input_shift.empty()) {
        for (std::size_t i = 0; i < x.size(); ++i) {
            x[i] = (x[i] - model.input_shift[i]) / model.input_scale[i];
        }
    }
    return x;
}

void softmax_inplace(std::vector<double>& z) {
    const double top = *std::max_element(z.begin(), z.end());
    double total = 0.0;
    for (double& v : z) {
        v = std::exp(v - top);
        total += v;
    }
    for (double& v : z) {
        v /= total;
    }
}

// Affine map y = W x + b for one layer.
void affine(const std::vector<double>& w, const std::vector<double>& b,
            const std::vector<double>& x, std::vector<double>& y) {
    const std::size_t out = b.size();
    const std::size_t in = x.size();
    y.assign(out, 0.0);
    for (std::size_t o = 0; o < out; ++o) {
        double acc = b[o];
        const double* row = w.data() + o * in;
        for (std::size_t i = 0; i < in; ++i) {
            acc += row[i] * x[i];
        }
        y[o] = acc;
    }
}

struct ForwardTrace {
    std::vector<std::vector<double>> activations;     // per layer incl. input
    std::vector<std::vector<double>> preactivations;  // per weighted layer
    std::vector<double> probs;
};

ForwardTrace forward_trace(const MlpModel& model, const std::vector<double>& x) {
    ForwardTrace trace;
    trace.activations.push_back(x);
    const std::size_t layers = model.weights.size();
    for (std::size_t l = 0; l < layers; ++l) {
        std::vector<double> z;
        affine(model.weights[l], model.biases[l], trace.activations.back(), z);
        trace.preactivations.push_back(z);
        if (l + 1 < layers) {
            for (double& v : z) {
                v = std::max(0.0, v);
            }
            trace.activations.push_back(std::move(z));
        } else {
            softmax_inplace(z);
            trace.probs = std::move(z);
        }
    }
    return trace;
}

struct Gradients {
    std::vector<std::vector<double>> weights;
    std::vector<std::vector<double>> biases;

    explicit Gradients(const MlpModel& model) {
        for (std::size_t l = 0; l < model.weights.size(); ++l) {
            weights.emplace_back(model.weights[l].size(), 0.0);
            biases.emplace_back(model.biases[l].size(), 0.0);
        }
    }
};

// Accumulates d(loss)/d(params) for one sample, scaled by weight (1/batch for
// the batch mean).
void backward_accumulate(const MlpModel& model, const ForwardTrace& trace, int label,
                         double weight, Gradients& grads) {
    const std::size_t layers = model.weights.size();
    // Softmax cross-entropy: dL/dz = p - onehot.
    std::vector<double> delta = trace.probs;
    delta[static_cast<std::size_t>(label)] -= 1.0;

    for (std::size_t l = layers; l-- > 0;) {
        const std::vector<double>& a_in = trace.activations[l];
        const std::size_t out = model.biases[l].size();
        const std::size_t in = a_in.size();
        for (std::size_t o = 0; o < out; ++o) {
            grads.biases[l][o] += weight * delta[o];
            double* wrow = grads.weights[l].data() + o * in;
            for (std::size_t i = 0; i < in; ++i) {
                wrow[i] += weight * delta[o] * a_in[i];
            }
        }
        if (l == 0) break;
        std::vector<double> prev(in, 0.0);
        for (std::size_t o = 0; o < out; ++o) {
            const double* wrow = model.weights[l].data() + o * in;
            for (std::size_t i = 0; i < in; ++i) {
                prev[i] += wrow[i] * delta[o];
            }
        }
        // Rectifier derivative from the previous layer's preactivation.
        const std::vector<double>& z_prev = trace.preactivations[l - 1];
        for (std::size_t i = 0; i < in; ++i) {
            prev[i] = z_prev[i] > 0.0 ? prev[i] : 0.0;
        }
        delta = std::move(prev);
    }
}

}  // namespace

MlpModel init_model(const std::vector<std::size_t>& layer_sizes, std::uint64_t seed) {
    if (layer_sizes.size() < 2) {
        throw std::invalid_argument("init_model: need at least input and output layers");
    }
    MlpModel model;
    model.layer_sizes = layer_sizes;
    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        const std::size_t in = layer_sizes[l];
        const std::size_t out = layer_sizes[l + 1];
        const double bound = std::sqrt(6.0 / static_cast<double>(in));
        std::vector<double> w(out * in);
        for (double& v : w) {
            v = rng.uniform(-bound, bound);
        }
        model.weights.push_back(std::move(w));
        model.biases.emplace_back(out, 0.0);
    }
    return model;
}

std::vector<double> forward(const MlpModel& model, const Input& input) {
    return forward_trace(model, impute(model, input)).probs;
}

double loss(const std::vector<double>& probs, int label) {
    if (label < 0 || static_cast<std::size_t>(label) >= probs.size()) {
        throw std::invalid_argument("loss: label out of range");
    }
    return -std::log(std::max(probs[static_cast<std::size_t>(label)], kProbFloor));
}

TrainResult train(const std::vector<Input>& rows, const std::vector<int>& labels,
                  const std::vector<std::size_t>& layer_sizes, const TrainConfig& config) {
    if (rows.empty() || rows.size() != labels.size()) {
        throw std::invalid_argument("train: empty input or label count mismatch");
    }
    if (config.batch_size < 1 || rows.size() < config.batch_size) {
        throw std::invalid_argument("train: need at least batch_size rows");
    }
    if (config.epochs < 1 || config.learning_rate < 0.0) {
        throw std::invalid_argument("train: epochs >= 1 and learning_rate >= 0 required");
    }
    const std::size_t class_count = layer_sizes.back();
    for (int label : labels) {
        if (label < 0 || static_cast<std::size_t>(label) >= class_count) {
            throw std::invalid_argument("train: label out of range");
        }
    }

    TrainResult result;
    result.model = init_model(layer_sizes, config.seed);
    MlpModel& model = result.model;
    Rng rng(config.seed + 1);  // epoch shuffling stream, separate from init

    Gradients velocity(model);
    std::vector<std::size_t> order(rows.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }

    // Capture per-column standardization from the imputed training matrix,
    // then bake it into the model so inference applies the same transform.
    const std::size_t width = model.input_size();
    std::vector<std::vector<double>> imputed(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        imputed[i] = impute(model, rows[i]);
    }
    model.input_shift.assign(width, 0.0);
    model.input_scale.assign(width, 1.0);
    for (std::size_t col = 0; col < width; ++col) {
        double mean = 0.0;
        for (const auto& row : imputed) {
            mean += row[col];
        }
        mean /= static_cast<double>(rows.size());
        double var = 0.0;
        for (const auto& row : imputed) {
            var += (row[col] - mean) * (row[col] - mean);
        }
        const double sd = std::sqrt(var / static_cast<double>(rows.size()));
        model.input_shift[col] = mean;
        model.input_scale[col] = sd > 1e-12 ? sd : 1.0;
    }
    for (auto& row : imputed) {
        for (std::size_t col = 0; col < width; ++col) {
            row[col] = (row[col] - model.input_shift[col]) / model.input_scale[col];
        }
    }

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        if (config.shuffle) {
            rng.shuffle(order);
        }
        double epoch_loss = 0.0;
        for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
            const std::size_t end = std::min(begin + config.batch_size, order.size());
            const double inv_batch = 1.0 / static_cast<double>(end - begin);
            Gradients grads(model);
            for (std::size_t idx = begin; idx < end; ++idx) {
                const std::size_t i = order[idx];
                const ForwardTrace trace = forward_trace(model, imputed[i]);
                epoch_loss += loss(trace.probs, labels[i]);
                backward_accumulate(model, trace, labels[i], inv_batch, grads);
            }
            for (std::size_t l = 0; l < model.weights.size(); ++l) {
                for (std::size_t p = 0; p < model.weights[l].size(); ++p) {
                    velocity.weights[l][p] = config.momentum * velocity.weights[l][p] -
                                             config.learning_rate * grads.weights[l][p];
                    model.weights[l][p] += velocity.weights[l][p];
                }
                for (std::size_t p = 0; p < model.biases[l].size(); ++p) {
                    velocity.biases[l][p] = config.momentum * velocity.biases[l][p] -
                                            config.learning_rate * grads.biases[l][p];
                    model.biases[l][p] += velocity.biases[l][p];
                }
            }
        }
        result.epoch_loss.push_back(epoch_loss / static_cast<double>(rows.size()));
    }
    return result;
}

double gradient_check(const MlpModel& model, const Input& input, int label, double epsilon) {
    if (epsilon < 1e-7 || epsilon > 1e-3) {
        throw std::invalid_argument("gradient_check: epsilon outside [1e-7, 1e-3]");
    }
    const std::vector<double> x = impute(model, input);
    Gradients analytic(model);
    backward_accumulate(model, forward_trace(model, x), label, 1.0, analytic);

    // Enumerate (layer, is_bias, index) triples and probe a seeded subset.
    struct ParamRef {
        std::size_t layer;
        bool bias;
        std::size_t index;
    };
    std::vector<ParamRef> params;
    for (std::size_t l = 0; l < model.weights.size(); ++l) {
        for (std::size_t p = 0; p < model.weights[l].size(); ++p) {
            params.push_back({l, false, p});
        }
        for (std::size_t p = 0; p < model.biases[l].size(); ++p) {
            params.push_back({l, true, p});
        }
    }
    Rng rng(0x9e3779b97f4a7c15ULL);
    std::vector<ParamRef> subset;
    if (params.size() <= 100) {
        subset = params;
    } else {
        rng.shuffle(params);
        subset.assign(params.begin(), params.begin() + 128);
    }

    MlpModel probe = model;
    double max_rel_err = 0.0;
    for (const ParamRef& ref : subset) {
        double& slot = ref.bias ? probe.biases[ref.layer][ref.index]
                                : probe.weights[ref.layer][ref.index];
        const double saved = slot;
        slot = saved + epsilon;
        const double up = loss(forward_trace(probe, x).probs, label);
        slot = saved - epsilon;
        const double down = loss(forward_trace(probe, x).probs, label);
        slot = saved;
        const double numeric = (up - down) / (2.0 * epsilon);
        const double exact = ref.bias ? analytic.biases[ref.layer][ref.index]
                                      : analytic.weights[ref.layer][ref.index];
        const double rel =
            std::abs(exact - numeric) / std::max({std::abs(exact), std::abs(numeric), 1e-8});
        max_rel_err = std::max(max_rel_err, rel);
    }
    return max_rel_err;
}

void to_json(nlohmann::json& j, const MlpModel& m) {
    j = nlohmann::json{{"layer_sizes", m.layer_sizes},
                       {"weights", m.weights},
                       {"biases", m.biases},
                       {"imputation_value", m.imputation_value},
                       {"input_shift", m.input_shift},
                       {"input_scale", m.input_scale}};
}

void from_json(const nlohmann::json& j, MlpModel& m) {
    j.at("layer_sizes").get_to(m.layer_sizes);
    j.at("weights").get_to(m.weights);
    j.at("biases").get_to(m.biases);
    j.at("imputation_value").get_to(m.imputation_value);
    j.at("input_shift").get_to(m.input_shift);
    j.at("input_scale").get_to(m.input_scale);
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = nlohmann::json{{"epochs", c.epochs},       {"batch_size", c.batch_size},
                       {"learning_rate", c.learning_rate}, {"momentum", c.momentum},
                       {"seed", c.seed},           {"shuffle", c.shuffle}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
    j.at("epochs").get_to(c.epochs);
    j.at("batch_size").get_to(c.batch_size);
    j.at("learning_rate").get_to(c.learning_rate);
    j.at("momentum").get_to(c.momentum);
    j.at("seed").get_to(c.seed);
    j.at("shuffle").get_to(c.shuffle);
}

}  // namespace qkdsent::classify
