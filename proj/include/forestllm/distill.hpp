#pragma once

#include "forestllm/dataset.hpp"
#include "forestllm/tree.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace forestllm {

using RowRefs = std::vector<std::reference_wrapper<const Row>>;

struct LabeledRows {
    RowRefs rows;
    std::vector<Target> targets;

    std::size_t size() const { return rows.size(); }
};

RowRefs gather_rows(const Table& table, const IndexSet& idx);
LabeledRows gather_labeled(const Dataset& ds, const IndexSet& idx);

struct NumericStats {
    double mean = 0, std = 0, min = 0, p25 = 0, p50 = 0, p75 = 0, max = 0;
};

struct CategoryCount {
    std::string value;
    std::size_t count = 0;
};

struct FeatureStats {
    std::string name;
    FeatureKind kind = FeatureKind::Numeric;
    std::size_t count = 0;  // rows in the node, missing included
    std::size_t missing_count = 0;
    std::optional<NumericStats> numeric;  // absent when nothing was observed
    std::vector<CategoryCount> top;       // at most kTopCategories
    std::size_t other_count = 0;
};

/// Marginal feature distribution of a node, the prompt's stand-in for P(X).
struct FeatureSummary {
    static constexpr std::size_t kTopCategories = 20;

    std::vector<FeatureStats> features;

    std::string render() const;
};

struct PromptBundle {
    std::string system_text;
    std::string user_text;
    nlohmann::json tool_schema;  // null for plain-text completions
};

/// Name of the function the split prompt forces.
inline constexpr std::string_view kSplitToolName = "select_split";

/// `features` restricts (and orders) the columns rendered; empty means all.
std::string serialize_row(const Row& row, const Schema& schema,
                          const std::vector<std::size_t>& features = {},
                          const Target* target = nullptr);
std::string serialize_rows(const RowRefs& rows, const Schema& schema,
                           const std::vector<std::size_t>& features = {});
std::string serialize_examples(const LabeledRows& rows, const Schema& schema,
                               const std::vector<std::size_t>& features = {});

FeatureSummary summarize_features(const RowRefs& rows, const Schema& schema,
                                  const std::vector<std::size_t>& features = {});

/// Numeric thresholds render with six significant digits.
std::string render_condition(const PathStep& step, const Schema& schema);
std::string induce_rule_text(const DecisionPath& path, const Schema& schema);

/// The split prompt sees only the tree's allowed features. Throws
/// NoCandidateFeatures if that set is empty.
PromptBundle render_split_prompt(const RowRefs& node_rows, const LabeledRows& labeled,
                                 const NodeContext& ctx, const Schema& schema);

/// `fallback_context` marks exemplars taken from the whole tree because no
/// labeled row reached the leaf.
PromptBundle render_leaf_prompt(const std::string& rule, const LabeledRows& exemplars,
                                const Schema& schema, const std::string& leaf_id,
                                bool fallback_context = false);

/// Plain-text rendering used by golden files: system, user, tool sections.
std::string render_bundle_text(const PromptBundle& bundle);

}  // namespace forestllm
