#pragma once

#include "forestllm/dataset.hpp"

#include <cstddef>
#include <optional>
#include <utility>
#include <string>
#include <variant>
#include <vector>

namespace forestllm {

enum class Branch { Left, Right };

std::string_view to_string(Branch b);

/// Row goes Left iff value <= threshold.
struct NumericThreshold {
    std::size_t feature = 0;
    double threshold = 0.0;

    bool operator==(const NumericThreshold&) const = default;
};

/// Row goes Left iff its category is in `categories` (sorted, unique).
struct CategoryMembership {
    std::size_t feature = 0;
    std::vector<std::string> categories;

    bool operator==(const CategoryMembership&) const = default;
};

using SplitPredicate = std::variant<NumericThreshold, CategoryMembership>;

std::size_t predicate_feature(const SplitPredicate& p);

/// Side taken by one cell. Missing numeric values follow `majority`; a missing
/// categorical value is treated as the literal "Unknown".
Branch route_cell(const SplitPredicate& p, const Cell& cell, Branch majority);

struct PathStep {
    SplitPredicate predicate;
    Branch branch = Branch::Left;

    bool operator==(const PathStep&) const = default;
};

using DecisionPath = std::vector<PathStep>;

/// Stable textual id of a node: "root", "root/L", "root/L/R", ...
std::string node_id(const DecisionPath& path);

struct NodeContext {
    DecisionPath path;
    std::vector<std::size_t> allowed_features;  // sorted

    std::size_t depth() const { return path.size(); }
};

enum class SplitOrigin { Semantic, Classical };
enum class LeafSource { LlmInferred, FallbackMajority, FallbackMean };

std::string_view to_string(SplitOrigin o);
std::string_view to_string(LeafSource s);

struct LeafAssignment {
    Target target;
    std::string rationale;
    std::size_t exemplar_count = 0;
    LeafSource source = LeafSource::LlmInferred;

    bool operator==(const LeafAssignment&) const = default;
};

struct InternalNode {
    SplitPredicate predicate;
    std::string reasoning;
    Branch majority_branch = Branch::Left;
    SplitOrigin origin = SplitOrigin::Semantic;
    std::size_t left = 0;
    std::size_t right = 0;

    bool operator==(const InternalNode&) const = default;
};

struct LeafNode {
    LeafAssignment assignment;
    std::size_t support = 0;  // labeled rows that reached the leaf during training

    bool operator==(const LeafNode&) const = default;
};

struct TreeNode {
    std::variant<InternalNode, LeafNode> body;

    bool is_leaf() const { return std::holds_alternative<LeafNode>(body); }
    const InternalNode& internal() const { return std::get<InternalNode>(body); }
    const LeafNode& leaf() const { return std::get<LeafNode>(body); }

    bool operator==(const TreeNode&) const = default;
};

/// Flat pre-order node array; nodes[0] is the root.
struct Tree {
    std::vector<TreeNode> nodes;
    std::vector<std::size_t> allowed_features;  // sorted
    /// Regression only: min and max of the labeled targets the tree saw.
    std::optional<std::pair<double, double>> target_range;

    std::size_t depth() const;
    std::size_t internal_count() const;
    std::size_t leaf_count() const;

    bool operator==(const Tree&) const = default;
};

}  // namespace forestllm
