#include "forestllm/tree.hpp"

#include <algorithm>
#include <utility>

namespace forestllm {

std::string_view to_string(Branch b) { return b == Branch::Left ? "left" : "right"; }

std::string_view to_string(SplitOrigin o) {
    return o == SplitOrigin::Semantic ? "semantic" : "classical";
}

std::string_view to_string(LeafSource s) {
    switch (s) {
    case LeafSource::LlmInferred: return "llm_inferred";
    case LeafSource::FallbackMajority: return "fallback_majority";
    case LeafSource::FallbackMean: return "fallback_mean";
    }
    return "llm_inferred";
}

std::size_t predicate_feature(const SplitPredicate& p) {
    return std::visit([](const auto& s) { return s.feature; }, p);
}

Branch route_cell(const SplitPredicate& p, const Cell& cell, Branch majority) {
    if (const auto* num = std::get_if<NumericThreshold>(&p)) {
        if (const auto* v = std::get_if<double>(&cell))
            return *v <= num->threshold ? Branch::Left : Branch::Right;
        return majority;
    }
    const auto& cat = std::get<CategoryMembership>(p);
    std::string_view value = kUnknown;
    if (const auto* s = std::get_if<std::string>(&cell)) value = *s;
    return std::binary_search(cat.categories.begin(), cat.categories.end(), value) ? Branch::Left
                                                                                   : Branch::Right;
}

std::string node_id(const DecisionPath& path) {
    std::string id = "root";
    for (const auto& step : path) id += step.branch == Branch::Left ? "/L" : "/R";
    return id;
}

std::size_t Tree::depth() const {
    if (nodes.empty()) return 0;
    std::size_t best = 0;
    std::vector<std::pair<std::size_t, std::size_t>> stack{{0, 0}};
    while (!stack.empty()) {
        auto [idx, d] = stack.back();
        stack.pop_back();
        best = std::max(best, d);
        if (!nodes[idx].is_leaf()) {
            stack.emplace_back(nodes[idx].internal().left, d + 1);
            stack.emplace_back(nodes[idx].internal().right, d + 1);
        }
    }
    return best;
}

std::size_t Tree::internal_count() const {
    return static_cast<std::size_t>(
        std::count_if(nodes.begin(), nodes.end(), [](const auto& n) { return !n.is_leaf(); }));
}

std::size_t Tree::leaf_count() const { return nodes.size() - internal_count(); }

}  // namespace forestllm
