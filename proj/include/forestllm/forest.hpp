#pragma once

#include "forestllm/dataset.hpp"
#include "forestllm/gateway.hpp"
#include "forestllm/induction.hpp"
#include "forestllm/rng.hpp"
#include "forestllm/tree.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace forestllm {

struct ForestConfig {
    std::size_t n_estimators = 9;
    std::optional<std::size_t> max_depth;  // unset: 3 for up to 16 shots, else 5
    bool bootstrap = true;
    bool bootstrap_labeled = false;
    double max_features = 0.9;
    double construction_temperature = 0.5;
    double leaf_temperature = 0.0;
    bool labeled_only = false;
    SplitSource split_source = SplitSource::Semantic;
    std::uint64_t seed = 0;
    std::size_t min_node_rows = 2;
    std::size_t min_labeled_rows = 1;
    std::size_t max_llm_retries = 2;
    std::size_t exemplar_cap = 48;
    std::string model_id = "gpt-4o";
    std::size_t threads = 0;  // 0: hardware concurrency; not persisted

    std::size_t resolved_max_depth(std::size_t shots) const;
    /// Throws InvalidConfig.
    void validate() const;
};

struct TreeProvenance {
    std::uint64_t seed = 0;
    std::size_t gateway_calls = 0;
    std::size_t retries = 0;
    std::size_t internal_nodes = 0;
    std::size_t leaves = 0;
    std::size_t classical_fallbacks = 0;

    bool operator==(const TreeProvenance&) const = default;
};

struct Provenance {
    std::string model_id;
    std::string backend;
    std::uint64_t seed = 0;
    std::size_t labeled_rows = 0;
    std::size_t unlabeled_rows = 0;
    std::optional<std::string> created_at;  // only when explicitly requested
    std::vector<TreeProvenance> trees;

    bool operator==(const Provenance&) const = default;
};

struct ForestModel {
    Schema schema;
    ForestConfig config;  // max_depth resolved
    std::vector<Tree> trees;
    Provenance provenance;
};

/// Trains on train.labeled and train.unlabeled. The returned model holds no
/// reference to the gateway. `gateway` may be null for ClassicalOnly.
ForestModel train_forest(const Dataset& train, const ForestConfig& cfg, ChatBackend* gateway);

/// Per-tree allowed features: ceil(max_features * d) drawn without replacement.
std::vector<std::size_t> draw_allowed_features(std::size_t d, double max_features, Rng& rng);

struct Routed {
    const LeafNode* leaf = nullptr;
    DecisionPath path;
};

Routed route(const Tree& tree, const Row& row);

Target predict(const ForestModel& model, const Row& row);

/// Vote fraction per schema class. Throws TaskMismatch for regression models.
std::map<std::string, double> predict_scores(const ForestModel& model, const Row& row);

/// Internal-node count per feature name, zero for features never split on.
std::map<std::string, std::size_t> split_frequency(const ForestModel& model);

}  // namespace forestllm
