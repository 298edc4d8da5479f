#pragma once

#include "forestllm/dataset.hpp"
#include "forestllm/gateway.hpp"
#include "forestllm/tree.hpp"

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace forestllm {

enum class SplitSource { Semantic, ClassicalOnly };

std::string_view to_string(SplitSource s);
SplitSource parse_split_source(std::string_view text);

struct InductionConfig {
    std::size_t max_depth = 3;
    std::size_t min_node_rows = 2;
    std::size_t min_labeled_rows = 1;
    std::size_t max_llm_retries = 2;
    bool labeled_only = false;
    SplitSource split_source = SplitSource::Semantic;
    double temperature = 0.5;
    std::string model_id = "gpt-4o";
    std::uint64_t seed_tag = 0;  // tree index
};

/// Rows reaching a node. Positions index into the dataset's table; the
/// unlabeled set may hold bootstrap duplicates.
struct NodeRows {
    IndexSet labeled;
    IndexSet unlabeled;

    std::size_t size() const { return labeled.size() + unlabeled.size(); }
    IndexSet all() const;
};

/// Side that receives at least half of the rows with an observed value
/// (ties Left). Missing numeric values are routed there.
Branch majority_side(const SplitPredicate& pred, const IndexSet& rows, const Dataset& ds);

std::pair<IndexSet, IndexSet> apply_split(const SplitPredicate& pred, const IndexSet& rows,
                                          const Dataset& ds, Branch majority);

/// Computes the majority side from `rows` themselves.
std::pair<IndexSet, IndexSet> apply_split(const SplitPredicate& pred, const IndexSet& rows,
                                          const Dataset& ds);

enum class Degeneracy { ForbiddenFeature, EmptyChild, NoLabeledChild };

std::string_view to_string(Degeneracy d);

struct SplitCheck {
    std::optional<Degeneracy> problem;

    bool valid() const { return !problem.has_value(); }
};

SplitCheck validate_split(const SplitPredicate& pred, const NodeRows& rows, const Dataset& ds,
                          const std::vector<std::size_t>& allowed);

/// Gini for class labels, population variance for values. Throws EmptyNode.
double impurity(std::span<const Target> labels);

struct ScoredSplit {
    SplitPredicate predicate;
    double gain = 0.0;
};

/// Exhaustive impurity-reduction search over the labeled rows only. Labeled
/// rows missing the split value follow the side with more observed labeled
/// rows (ties Left).
std::optional<ScoredSplit> classical_best_split(const IndexSet& labeled, const Dataset& ds,
                                                const std::vector<std::size_t>& allowed);

/// Leaf waiting for its label.
struct PendingLeaf {
    std::size_t node = 0;
    IndexSet labeled;
    DecisionPath path;
};

struct GrowStats {
    std::size_t gateway_calls = 0;
    /// Calls beyond the first at a node. A node whose split requests all failed
    /// counts its later leaf request here too.
    std::size_t retries = 0;
    std::size_t classical_fallbacks = 0;
};

struct GrownTree {
    Tree tree;  // leaves are placeholders until labeled
    std::vector<PendingLeaf> leaves;
    GrowStats stats;
};

/// `gateway` may be null when split_source is ClassicalOnly.
GrownTree grow_tree(const NodeRows& root, const std::vector<std::size_t>& allowed,
                    const Dataset& ds, const InductionConfig& cfg, ChatBackend* gateway);

}  // namespace forestllm
