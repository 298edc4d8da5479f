#include "forestllm/distill.hpp"

#include "forestllm/error.hpp"
#include "forestllm/text.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <fmt/format.h>

namespace forestllm {

namespace {

std::vector<std::size_t> resolve_features(const Schema& schema,
                                          const std::vector<std::size_t>& features) {
    if (!features.empty()) return features;
    std::vector<std::size_t> all(schema.features.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return all;
}

std::string render_value(const Cell& cell) {
    if (const auto* v = std::get_if<double>(&cell)) return text::format_significant(*v, 6);
    if (const auto* s = std::get_if<std::string>(&cell)) return *s;
    return std::string(kUnknown);
}

std::string render_target(const Target& t) {
    if (const auto* v = std::get_if<double>(&t)) return text::format_significant(*v, 6);
    return std::get<std::string>(t);
}

std::string sig4(double v) { return text::format_significant(v, 4); }

double rounded4(double v) { return std::stod(sig4(v)); }

// Linear interpolation between closest ranks.
double quantile(const std::vector<double>& sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

std::string class_list(const Schema& schema) { return text::join(schema.classes, ", "); }

}  // namespace

RowRefs gather_rows(const Table& table, const IndexSet& idx) {
    RowRefs out;
    out.reserve(idx.size());
    for (auto i : idx) out.emplace_back(table.rows.at(i));
    return out;
}

LabeledRows gather_labeled(const Dataset& ds, const IndexSet& idx) {
    LabeledRows out;
    out.rows.reserve(idx.size());
    out.targets.reserve(idx.size());
    for (auto i : idx) {
        out.rows.emplace_back(ds.row(i));
        out.targets.push_back(ds.target(i));
    }
    return out;
}

std::string serialize_row(const Row& row, const Schema& schema,
                          const std::vector<std::size_t>& features, const Target* target) {
    std::string line;
    for (auto f : resolve_features(schema, features)) {
        if (!line.empty()) line += ' ';
        line += schema.features[f].name;
        line += " is ";
        line += render_value(row[f]);
        line += '.';
    }
    if (target) {
        line += " -> ";
        line += render_target(*target);
    }
    return line;
}

std::string serialize_rows(const RowRefs& rows, const Schema& schema,
                           const std::vector<std::size_t>& features) {
    std::vector<std::string> lines;
    lines.reserve(rows.size());
    for (const auto& r : rows) lines.push_back(serialize_row(r.get(), schema, features));
    return text::join(lines, "\n");
}

std::string serialize_examples(const LabeledRows& rows, const Schema& schema,
                               const std::vector<std::size_t>& features) {
    std::vector<std::string> lines;
    lines.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        lines.push_back(serialize_row(rows.rows[i].get(), schema, features, &rows.targets[i]));
    return text::join(lines, "\n");
}

FeatureSummary summarize_features(const RowRefs& rows, const Schema& schema,
                                  const std::vector<std::size_t>& features) {
    FeatureSummary summary;
    for (auto f : resolve_features(schema, features)) {
        FeatureStats st;
        st.name = schema.features[f].name;
        st.kind = schema.features[f].kind;
        st.count = rows.size();
        if (st.kind == FeatureKind::Numeric) {
            std::vector<double> values;
            values.reserve(rows.size());
            for (const auto& r : rows) {
                if (const auto* v = std::get_if<double>(&r.get()[f])) values.push_back(*v);
            }
            st.missing_count = rows.size() - values.size();
            if (!values.empty()) {
                std::sort(values.begin(), values.end());
                const double n = static_cast<double>(values.size());
                const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
                double ss = 0.0;
                for (double v : values) ss += (v - mean) * (v - mean);
                NumericStats ns;
                ns.mean = rounded4(mean);
                ns.std = rounded4(std::sqrt(ss / n));
                ns.min = rounded4(values.front());
                ns.p25 = rounded4(quantile(values, 0.25));
                ns.p50 = rounded4(quantile(values, 0.50));
                ns.p75 = rounded4(quantile(values, 0.75));
                ns.max = rounded4(values.back());
                st.numeric = ns;
            }
        } else {
            std::map<std::string, std::size_t> counts;
            for (const auto& r : rows) {
                if (const auto* s = std::get_if<std::string>(&r.get()[f]))
                    ++counts[*s];
                else
                    ++st.missing_count;
            }
            std::vector<CategoryCount> all;
            for (auto& [value, count] : counts) all.push_back({value, count});
            // std::map order is lexicographic; stable sort keeps it as the tie-break.
            std::stable_sort(all.begin(), all.end(),
                             [](const auto& a, const auto& b) { return a.count > b.count; });
            for (std::size_t i = 0; i < all.size(); ++i) {
                if (i < FeatureSummary::kTopCategories)
                    st.top.push_back(all[i]);
                else
                    st.other_count += all[i].count;
            }
        }
        summary.features.push_back(std::move(st));
    }
    return summary;
}

std::string FeatureSummary::render() const {
    std::vector<std::string> lines;
    for (const auto& st : features) {
        std::string line = fmt::format("- {} ({}): count {}, missing {}", st.name,
                                       to_string(st.kind), st.count, st.missing_count);
        if (st.kind == FeatureKind::Numeric) {
            if (!st.numeric) {
                line += ", no observed values";
            } else {
                const auto& n = *st.numeric;
                line += fmt::format(", mean {}, std {}, min {}, p25 {}, p50 {}, p75 {}, max {}",
                                    sig4(n.mean), sig4(n.std), sig4(n.min), sig4(n.p25),
                                    sig4(n.p50), sig4(n.p75), sig4(n.max));
            }
        } else if (st.top.empty()) {
            line += ", no observed values";
        } else {
            std::vector<std::string> parts;
            for (const auto& c : st.top) parts.push_back(fmt::format("{}: {}", c.value, c.count));
            if (st.other_count > 0) parts.push_back(fmt::format("other: {}", st.other_count));
            line += ", values: " + text::join(parts, ", ");
        }
        lines.push_back(std::move(line));
    }
    return text::join(lines, "\n");
}

std::string render_condition(const PathStep& step, const Schema& schema) {
    const auto& name = schema.features.at(predicate_feature(step.predicate)).name;
    const bool left = step.branch == Branch::Left;
    if (const auto* num = std::get_if<NumericThreshold>(&step.predicate)) {
        return fmt::format("{} is {} {}", name, left ? "at most" : "greater than",
                           text::format_significant(num->threshold, 6));
    }
    const auto& cat = std::get<CategoryMembership>(step.predicate);
    return fmt::format("{} is {}one of {{{}}}", name, left ? "" : "not ",
                       text::join(cat.categories, ", "));
}

std::string induce_rule_text(const DecisionPath& path, const Schema& schema) {
    if (path.empty()) return "no conditions (root is a leaf)";
    std::vector<std::string> parts;
    for (const auto& step : path) parts.push_back(render_condition(step, schema));
    return text::join(parts, " AND ");
}

PromptBundle render_split_prompt(const RowRefs& node_rows, const LabeledRows& labeled,
                                 const NodeContext& ctx, const Schema& schema) {
    if (ctx.allowed_features.empty())
        throw Error(ErrorCode::NoCandidateFeatures, "no features allowed at node " +
                                                        node_id(ctx.path));
    const auto& allowed = ctx.allowed_features;

    PromptBundle b;
    b.system_text =
        "You are an expert data scientist helping to grow a decision tree for a tabular "
        "prediction task with very few labeled examples. At each node you choose exactly one "
        "split condition. Respond only by calling the function " +
        std::string(kSplitToolName) + ".";

    std::string u;
    u += "## Task\n";
    u += schema.task_description + "\n";
    if (schema.is_classification())
        u += fmt::format("Target: {} (classification; classes: {})\n", schema.target_name,
                         class_list(schema));
    else
        u += fmt::format("Target: {} (regression)\n", schema.target_name);

    u += fmt::format("\n## Labeled examples at this node ({})\n", labeled.size());
    u += labeled.size() ? serialize_examples(labeled, schema, allowed)
                        : std::string("no labeled examples at this node");
    u += "\n";

    u += fmt::format("\n## Feature summary (all {} rows at this node, labeled and unlabeled)\n",
                     node_rows.size());
    u += summarize_features(node_rows, schema, allowed).render();
    u += "\n";

    u += "\n## Node context\n";
    u += "Node id: " + node_id(ctx.path) + "\n";
    if (ctx.path.empty()) {
        u += "This is the root node, depth 0, no prior conditions.\n";
    } else {
        u += fmt::format("This node is at depth {}. Conditions on the path from the root:\n",
                         ctx.depth());
        for (std::size_t i = 0; i < ctx.path.size(); ++i)
            u += fmt::format("{}. {}\n", i + 1, render_condition(ctx.path[i], schema));
    }

    std::vector<std::string> allowed_names;
    for (auto f : allowed) allowed_names.push_back(schema.features[f].name);

    u += "\n## Instructions\n";
    u += fmt::format(
        "1. Causal feature probing: for each allowed feature, hypothesize how it relates to "
        "{} (feature -> target), using domain knowledge and the labeled examples.\n",
        schema.target_name);
    u += "2. Evidential split synthesis: propose the single best split for this node. Use the "
         "labeled examples as evidence and the feature summary to place thresholds in "
         "low-density regions, keeping the node's conditions in mind.\n";
    u += "Numeric features take operator \"<=\" with a threshold; categorical features take "
         "operator \"in\" with a list of categories. Rows satisfying the condition go to the "
         "left child, all others to the right child.\n";
    u += "Allowed features: " + text::join(allowed_names, ", ") + "\n";
    u += "Answer only by calling " + std::string(kSplitToolName) + ".";
    b.user_text = std::move(u);

    using nlohmann::json;
    b.tool_schema = json{
        {"name", kSplitToolName},
        {"description", "Select the split condition for the current decision tree node."},
        {"parameters",
         {{"type", "object"},
          {"properties",
           {{"feature",
             {{"type", "string"},
              {"enum", allowed_names},
              {"description", "Feature to split on."}}},
            {"operator",
             {{"type", "string"},
              {"enum", {"<=", "in"}},
              {"description", "\"<=\" for numeric features, \"in\" for categorical features."}}},
            {"threshold",
             {{"type", "number"}, {"description", "Threshold for operator \"<=\"."}}},
            {"categories",
             {{"type", "array"},
              {"items", {{"type", "string"}}},
              {"description", "Categories sent left for operator \"in\"."}}},
            {"reasoning",
             {{"type", "string"},
              {"description", "Hypothesized feature-target relations and why this split."}}}}},
          {"required", {"feature", "operator", "reasoning"}}}}};
    return b;
}

PromptBundle render_leaf_prompt(const std::string& rule, const LabeledRows& exemplars,
                                const Schema& schema, const std::string& leaf_id,
                                bool fallback_context) {
    PromptBundle b;
    b.system_text =
        "You are an expert data scientist assigning the fixed prediction for one leaf of a "
        "decision tree. Combine the decision rule, domain knowledge and the labeled examples.";

    std::string u;
    u += "## Task\n";
    u += schema.task_description + "\n";

    u += "\n## Decision path rule\n";
    u += "Leaf id: " + leaf_id + "\n";
    u += "Records reaching this leaf satisfy: " + rule + "\n";

    u += fmt::format("\n## Labeled examples ({})\n", exemplars.size());
    if (exemplars.size() == 0) {
        u += "no labeled examples reached this leaf\n";
    } else {
        if (fallback_context)
            u += "No labeled examples reached this leaf; these examples come from the whole "
                 "tree and serve as general context.\n";
        u += serialize_examples(exemplars, schema) + "\n";
    }

    u += "\n## Answer\n";
    if (schema.is_classification()) {
        u += "Possible classes: " + class_list(schema) + "\n";
        u += fmt::format(
            "Which value of {} best describes records satisfying the rule? Any listed class may "
            "be chosen, including classes absent from the examples. Reply with exactly one class "
            "from the list and nothing else.",
            schema.target_name);
    } else {
        u += fmt::format(
            "What value of {} best describes records satisfying the rule? Reply with a single "
            "number and nothing else.",
            schema.target_name);
    }
    b.user_text = std::move(u);
    return b;
}

std::string render_bundle_text(const PromptBundle& bundle) {
    std::string out = "=== system ===\n" + bundle.system_text + "\n=== user ===\n" +
                      bundle.user_text + "\n";
    if (!bundle.tool_schema.is_null()) out += "=== tool ===\n" + bundle.tool_schema.dump(2) + "\n";
    return out;
}

}  // namespace forestllm
