#include "qkdsent/select.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

namespace qkdsent::select {

namespace {

constexpr int kSchemaVersion = 1;

struct SplitChoice {
    double gain = 0.0;
    std::size_t feature = 0;
    double threshold = 0.0;
    bool default_left = true;
    bool found = false;
};

// One node of the level currently being grown.
struct NodeBuild {
    std::int32_t node_id = 0;
    std::vector<std::size_t> rows;
    double sum_g = 0.0;
    double sum_h = 0.0;
    SplitChoice best;
};

// Per-node scan state while walking one sorted feature column.
struct ScanState {
    double prefix_g = 0.0;
    double prefix_h = 0.0;
    std::size_t count = 0;
    double prev_value = 0.0;
    double present_g = 0.0;  // node totals over present rows, filled in pass 1
    double present_h = 0.0;
};

double split_gain(double gl, double hl, double gr, double hr, const SelectParams& p) {
    const double joint = (gl + gr) * (gl + gr) / (hl + hr + p.lambda);
    return 0.5 * (gl * gl / (hl + p.lambda) + gr * gr / (hr + p.lambda) - joint) - p.gamma;
}

void consider_candidate(NodeBuild& node, ScanState& st, std::size_t feature, double threshold,
                        const SelectParams& params) {
    const double miss_g = node.sum_g - st.present_g;
    const double miss_h = node.sum_h - st.present_h;
    // Missing rows are routed to whichever side yields higher gain; ties keep
    // the left default.
    for (bool miss_left : {true, false}) {
        const double gl = st.prefix_g + (miss_left ? miss_g : 0.0);
        const double hl = st.prefix_h + (miss_left ? miss_h : 0.0);
        const double gr = node.sum_g - gl;
        const double hr = node.sum_h - hl;
        if (hl < params.min_child_weight || hr < params.min_child_weight) {
            continue;
        }
        const double gain = split_gain(gl, hl, gr, hr, params);
        if (!node.best.found || gain > node.best.gain) {
            node.best = SplitChoice{gain, feature, threshold, miss_left, true};
        }
    }
}

// Sorted (value, row) pairs per feature over rows where the value is present.
using Column = std::vector<std::pair<double, std::size_t>>;

std::vector<Column> build_columns(const std::vector<features::FeatureVector>& rows,
                                  std::size_t feature_count) {
    std::vector<Column> columns(feature_count);
    for (std::size_t f = 0; f < feature_count; ++f) {
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i].values[f]) {
                columns[f].emplace_back(*rows[i].values[f], i);
            }
        }
        std::sort(columns[f].begin(), columns[f].end());
    }
    return columns;
}

struct BuiltTree {
    Tree tree;
    std::vector<std::int32_t> leaf_of_row;
};

BuiltTree build_tree(const std::vector<features::FeatureVector>& rows,
                     const std::vector<Column>& columns, const std::vector<double>& grad,
                     const std::vector<double>& hess, const SelectParams& params,
                     std::map<std::string, double>& feature_gain,
                     const std::vector<std::string>& feature_names) {
    Tree tree;
    tree.nodes.emplace_back();  // root, leaf until split
    std::vector<std::int32_t> node_of_row(rows.size(), 0);

    std::vector<NodeBuild> level(1);
    level[0].node_id = 0;
    level[0].rows.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        level[0].rows[i] = i;
    }

    const auto finalize_leaf = [&](const NodeBuild& nb) {
        TreeNode& node = tree.nodes[nb.node_id];
        node.is_leaf = true;
        node.value = -params.learning_rate * nb.sum_g / (nb.sum_h + params.lambda);
    };

    for (std::size_t depth = 0; depth < params.max_depth && !level.empty(); ++depth) {
        std::vector<std::int32_t> slot_of_node(tree.nodes.size(), -1);
        for (std::size_t s = 0; s < level.size(); ++s) {
            NodeBuild& nb = level[s];
            slot_of_node[nb.node_id] = static_cast<std::int32_t>(s);
            nb.sum_g = nb.sum_h = 0.0;
            for (std::size_t row : nb.rows) {
                nb.sum_g += grad[row];
                nb.sum_h += hess[row];
            }
        }

        std::vector<ScanState> states(level.size());
        for (std::size_t f = 0; f < columns.size(); ++f) {
            for (auto& st : states) {
                st = ScanState{};
            }
            // Pass 1: per-node totals over present rows of this feature.
            for (const auto& [value, row] : columns[f]) {
                const std::int32_t slot = slot_of_node[node_of_row[row]];
                if (slot < 0) continue;
                states[slot].present_g += grad[row];
                states[slot].present_h += hess[row];
            }
            // Pass 2: evaluate midpoints between consecutive distinct values.
            for (const auto& [value, row] : columns[f]) {
                const std::int32_t slot = slot_of_node[node_of_row[row]];
                if (slot < 0) continue;
                ScanState& st = states[slot];
                if (st.count > 0 && value > st.prev_value) {
                    const double threshold = st.prev_value + (value - st.prev_value) / 2.0;
                    if (threshold > st.prev_value) {  // adjacent doubles cannot be separated
                        consider_candidate(level[slot], st, f, threshold, params);
                    }
                }
                st.prefix_g += grad[row];
                st.prefix_h += hess[row];
                st.prev_value = value;
                ++st.count;
            }
        }

        std::vector<NodeBuild> next_level;
        for (NodeBuild& nb : level) {
            if (!nb.best.found || nb.best.gain <= 0.0) {
                finalize_leaf(nb);
                continue;
            }
            const std::int32_t left_id = static_cast<std::int32_t>(tree.nodes.size());
            const std::int32_t right_id = left_id + 1;
            tree.nodes.emplace_back();
            tree.nodes.emplace_back();

            TreeNode& node = tree.nodes[nb.node_id];
            node.is_leaf = false;
            node.feature = nb.best.feature;
            node.threshold = nb.best.threshold;
            node.default_left = nb.best.default_left;
            node.left = left_id;
            node.right = right_id;
            node.gain = nb.best.gain;
            feature_gain[feature_names[nb.best.feature]] += nb.best.gain;

            NodeBuild left_child, right_child;
            left_child.node_id = left_id;
            right_child.node_id = right_id;
            for (std::size_t row : nb.rows) {
                const auto& value = rows[row].values[nb.best.feature];
                const bool go_left =
                    value ? (*value < nb.best.threshold) : nb.best.default_left;
                (go_left ? left_child : right_child).rows.push_back(row);
                node_of_row[row] = go_left ? left_id : right_id;
            }
            next_level.push_back(std::move(left_child));
            next_level.push_back(std::move(right_child));
        }
        level = std::move(next_level);
    }

    // Depth limit reached; everything still open becomes a leaf.
    for (NodeBuild& nb : level) {
        nb.sum_g = nb.sum_h = 0.0;
        for (std::size_t row : nb.rows) {
            nb.sum_g += grad[row];
            nb.sum_h += hess[row];
        }
        finalize_leaf(nb);
    }

    return BuiltTree{std::move(tree), std::move(node_of_row)};
}

std::vector<double> softmax(const std::vector<double>& scores) {
    const double top = *std::max_element(scores.begin(), scores.end());
    std::vector<double> probs(scores.size());
    double total = 0.0;
    for (std::size_t c = 0; c < scores.size(); ++c) {
        probs[c] = std::exp(scores[c] - top);
        total += probs[c];
    }
    for (double& p : probs) {
        p /= total;
    }
    return probs;
}

}  // namespace

double Tree::leaf_value(const features::FeatureVector& row) const {
    std::size_t at = 0;
    while (!nodes[at].is_leaf) {
        const TreeNode& node = nodes[at];
        const auto& value = row.values[node.feature];
        const bool go_left = value ? (*value < node.threshold) : node.default_left;
        at = static_cast<std::size_t>(go_left ? node.left : node.right);
    }
    return nodes[at].value;
}

BoostedEnsemble fit(const std::vector<features::FeatureVector>& rows,
                    const std::vector<int>& labels, const SelectParams& params) {
    if (rows.empty() || labels.size() != rows.size()) {
        throw std::invalid_argument("select::fit: empty input or label count mismatch");
    }
    const std::size_t feature_count = rows.front().values.size();
    for (const auto& row : rows) {
        if (row.values.size() != feature_count) {
            throw std::invalid_argument("select::fit: inconsistent feature vector width");
        }
    }
    std::set<int> distinct(labels.begin(), labels.end());
    if (*distinct.begin() < 0) {
        throw std::invalid_argument("select::fit: negative class label");
    }
    if (distinct.size() < 2) {
        throw std::invalid_argument("select::fit: degenerate training, single class present");
    }
    const std::size_t class_count = static_cast<std::size_t>(*distinct.rbegin()) + 1;

    BoostedEnsemble ensemble;
    ensemble.params = params;
    ensemble.class_count = class_count;
    ensemble.base_score = 0.0;
    ensemble.feature_names.assign(features::catalog().begin(), features::catalog().end());
    if (ensemble.feature_names.size() != feature_count) {
        // Rows are not catalog-shaped (tests may use reduced tables); fall back
        // to positional names.
        ensemble.feature_names.clear();
        for (std::size_t f = 0; f < feature_count; ++f) {
            ensemble.feature_names.push_back("f" + std::to_string(f));
        }
    }

    const std::vector<Column> columns = build_columns(rows, feature_count);
    std::vector<std::vector<double>> margins(rows.size(),
                                             std::vector<double>(class_count, ensemble.base_score));
    std::vector<double> grad(rows.size()), hess(rows.size());

    for (std::size_t round = 0; round < params.rounds; ++round) {
        std::vector<std::vector<double>> probs(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            probs[i] = softmax(margins[i]);
        }
        std::vector<Tree> round_trees;
        round_trees.reserve(class_count);
        for (std::size_t c = 0; c < class_count; ++c) {
            for (std::size_t i = 0; i < rows.size(); ++i) {
                const double p = probs[i][c];
                grad[i] = p - (labels[i] == static_cast<int>(c) ? 1.0 : 0.0);
                hess[i] = p * (1.0 - p);
            }
            BuiltTree built = build_tree(rows, columns, grad, hess, params,
                                         ensemble.feature_gain, ensemble.feature_names);
            for (std::size_t i = 0; i < rows.size(); ++i) {
                margins[i][c] += built.tree.nodes[built.leaf_of_row[i]].value;
            }
            round_trees.push_back(std::move(built.tree));
        }
        ensemble.trees.push_back(std::move(round_trees));
    }
    return ensemble;
}

std::vector<double> predict_proba(const BoostedEnsemble& ensemble,
                                  const features::FeatureVector& row) {
    if (row.values.size() != ensemble.feature_names.size()) {
        throw std::invalid_argument("predict_proba: feature vector width mismatch");
    }
    std::vector<double> scores(ensemble.class_count, ensemble.base_score);
    for (const auto& round : ensemble.trees) {
        for (std::size_t c = 0; c < round.size(); ++c) {
            scores[c] += round[c].leaf_value(row);
        }
    }
    return softmax(scores);
}

int predict_class(const BoostedEnsemble& ensemble, const features::FeatureVector& row) {
    const std::vector<double> probs = predict_proba(ensemble, row);
    return static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

std::vector<std::string> top_k_features(const BoostedEnsemble& ensemble, std::size_t k) {
    if (k < 1 || k > ensemble.feature_names.size()) {
        throw std::invalid_argument("top_k_features: k outside 1..catalog size");
    }
    std::vector<std::size_t> order(ensemble.feature_names.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    const auto gain_of = [&](std::size_t i) {
        const auto it = ensemble.feature_gain.find(ensemble.feature_names[i]);
        return it == ensemble.feature_gain.end() ? 0.0 : it->second;
    };
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double ga = gain_of(a), gb = gain_of(b);
        if (ga != gb) return ga > gb;
        return a < b;  // catalog-order tie-break, also pads unused features
    });
    std::vector<std::string> selected;
    selected.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        selected.push_back(ensemble.feature_names[order[i]]);
    }
    return selected;
}

std::size_t positive_gain_count(const BoostedEnsemble& ensemble) {
    std::size_t count = 0;
    for (const auto& [name, gain] : ensemble.feature_gain) {
        if (gain > 0.0) ++count;
    }
    return count;
}

void to_json(nlohmann::json& j, const SelectParams& p) {
    j = nlohmann::json{{"rounds", p.rounds},
                       {"max_depth", p.max_depth},
                       {"learning_rate", p.learning_rate},
                       {"lambda", p.lambda},
                       {"gamma", p.gamma},
                       {"min_child_weight", p.min_child_weight}};
}

void from_json(const nlohmann::json& j, SelectParams& p) {
    j.at("rounds").get_to(p.rounds);
    j.at("max_depth").get_to(p.max_depth);
    j.at("learning_rate").get_to(p.learning_rate);
    j.at("lambda").get_to(p.lambda);
    j.at("gamma").get_to(p.gamma);
    j.at("min_child_weight").get_to(p.min_child_weight);
}

namespace {

nlohmann::json tree_to_json(const Tree& tree) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const TreeNode& n : tree.nodes) {
        if (n.is_leaf) {
            nodes.push_back(nlohmann::json{{"leaf", n.value}});
        } else {
            nodes.push_back(nlohmann::json{{"feature", n.feature},
                                           {"threshold", n.threshold},
                                           {"default_left", n.default_left},
                                           {"left", n.left},
                                           {"right", n.right},
                                           {"gain", n.gain}});
        }
    }
    return nodes;
}

Tree tree_from_json(const nlohmann::json& j) {
    Tree tree;
    for (const auto& jn : j) {
        TreeNode n;
        if (jn.contains("leaf")) {
            n.is_leaf = true;
            jn.at("leaf").get_to(n.value);
        } else {
            n.is_leaf = false;
            jn.at("feature").get_to(n.feature);
            jn.at("threshold").get_to(n.threshold);
            jn.at("default_left").get_to(n.default_left);
            jn.at("left").get_to(n.left);
            jn.at("right").get_to(n.right);
            jn.at("gain").get_to(n.gain);
        }
        tree.nodes.push_back(n);
    }
    return tree;
}

}  // namespace

void to_json(nlohmann::json& j, const BoostedEnsemble& e) {
    nlohmann::json rounds = nlohmann::json::array();
    for (const auto& round : e.trees) {
        nlohmann::json class_trees = nlohmann::json::array();
        for (const Tree& tree : round) {
            class_trees.push_back(tree_to_json(tree));
        }
        rounds.push_back(std::move(class_trees));
    }
    j = nlohmann::json{{"schema_version", kSchemaVersion},
                       {"params", e.params},
                       {"class_count", e.class_count},
                       {"base_score", e.base_score},
                       {"feature_names", e.feature_names},
                       {"feature_gain", e.feature_gain},
                       {"rounds", rounds}};
}

void from_json(const nlohmann::json& j, BoostedEnsemble& e) {
    const int version = j.at("schema_version").get<int>();
    if (version != kSchemaVersion) {
        throw std::runtime_error("ensemble schema_version " + std::to_string(version) +
                                 " unsupported, expected " + std::to_string(kSchemaVersion));
    }
    j.at("params").get_to(e.params);
    j.at("class_count").get_to(e.class_count);
    j.at("base_score").get_to(e.base_score);
    j.at("feature_names").get_to(e.feature_names);
    e.feature_gain = j.at("feature_gain").get<std::map<std::string, double>>();
    e.trees.clear();
    for (const auto& jround : j.at("rounds")) {
        std::vector<Tree> round;
        for (const auto& jtree : jround) {
            round.push_back(tree_from_json(jtree));
        }
        e.trees.push_back(std::move(round));
    }
}

}  // namespace qkdsent::select
