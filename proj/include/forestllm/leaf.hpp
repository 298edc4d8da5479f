#pragma once

#include "forestllm/dataset.hpp"
#include "forestllm/gateway.hpp"
#include "forestllm/tree.hpp"

#include <optional>
#include <string>
#include <utility>

namespace forestllm {

struct ExemplarSet {
    IndexSet rows;  // dataset order, no repeats
    bool fallback_context = false;  // taken from the whole tree
};

/// Labeled rows at the leaf, or the tree's labeled rows when none reached it,
/// truncated to `cap` in dataset order. Throws InsufficientData when the tree
/// has no labeled rows.
ExemplarSet retrieve_exemplars(const IndexSet& leaf_labeled, const IndexSet& tree_labeled,
                               std::size_t cap = 48);

struct LeafOptions {
    std::string model_id = "gpt-4o";
    double temperature = 0.0;
    std::uint64_t seed_tag = 0;
    std::string leaf_id = "root";
    /// Regression answers are clamped into this range.
    std::optional<std::pair<double, double>> target_range;
};

struct LeafOutcome {
    LeafAssignment assignment;
    std::size_t gateway_calls = 0;
    std::size_t retries = 0;
};

/// Majority class (ties to the lexicographically smallest) or mean value.
LeafAssignment fallback_assignment(const ExemplarSet& exemplars, const Dataset& ds);

/// One temperature-0 completion, one re-ask on an unparseable answer, then the
/// deterministic fallback. A null gateway goes straight to the fallback.
LeafOutcome assign_leaf(const std::string& rule, const ExemplarSet& exemplars, const Dataset& ds,
                        ChatBackend* gateway, const LeafOptions& options);

}  // namespace forestllm
