#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "qkdsent/features.hpp"

namespace qkdsent::select {

struct SelectParams {
    std::size_t rounds = 50;
    std::size_t max_depth = 3;
    double learning_rate = 0.1;
    double lambda = 1.0;            // L2 leaf regularization
    double gamma = 0.0;             // split gain penalty
    double min_child_weight = 1.0;  // minimum hessian sum per child
};

// Flat tree node; root at index 0. Split semantics: present value < threshold
// goes left, MISSING follows default_left. Leaf values are already scaled by
// the learning rate.
struct TreeNode {
    bool is_leaf = true;
    double value = 0.0;
    std::size_t feature = 0;  // catalog index
    double threshold = 0.0;
    bool default_left = true;
    std::int32_t left = -1;
    std::int32_t right = -1;
    double gain = 0.0;  // realized split gain, kept so importances are recomputable
};

struct Tree {
    std::vector<TreeNode> nodes;

    double leaf_value(const features::FeatureVector& row) const;
};

// Second-order boosted ensemble with softmax objective: one regression tree
// per class per round, fit to the gradient/hessian of the multiclass
// cross-entropy. Training is deterministic: no subsampling, fixed scan order,
// ties broken by catalog order then lowest threshold.
struct BoostedEnsemble {
    SelectParams params;
    std::size_t class_count = 0;
    double base_score = 0.0;
    std::vector<std::string> feature_names;
    std::vector<std::vector<Tree>> trees;  // [round][class]
    std::map<std::string, double> feature_gain;
};

BoostedEnsemble fit(const std::vector<features::FeatureVector>& rows,
                    const std::vector<int>& labels, const SelectParams& params);

// Softmax over accumulated per-class leaf values; sums to 1 within 1e-9.
std::vector<double> predict_proba(const BoostedEnsemble& ensemble,
                                  const features::FeatureVector& row);

int predict_class(const BoostedEnsemble& ensemble, const features::FeatureVector& row);

// Feature names ranked by cumulative split gain, descending; ties and unused
// features fall back to catalog order so the result always has exactly k
// entries. Throws when k exceeds the catalog size.
std::vector<std::string> top_k_features(const BoostedEnsemble& ensemble, std::size_t k);

// Number of features with strictly positive cumulative gain; selections
// beyond this count are catalog-order padding.
std::size_t positive_gain_count(const BoostedEnsemble& ensemble);

void to_json(nlohmann::json& j, const SelectParams& p);
void from_json(const nlohmann::json& j, SelectParams& p);
void to_json(nlohmann::json& j, const BoostedEnsemble& e);
void from_json(const nlohmann::json& j, BoostedEnsemble& e);

}  // namespace qkdsent::select
