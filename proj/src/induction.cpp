#include "forestllm/induction.hpp"

#include "forestllm/distill.hpp"
#include "forestllm/error.hpp"
#include "forestllm/text.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include <fmt/format.h>

namespace forestllm {

std::string_view to_string(SplitSource s) {
    return s == SplitSource::Semantic ? "semantic" : "classical_only";
}

SplitSource parse_split_source(std::string_view text) {
    const auto t = text::to_lower(text);
    if (t == "semantic") return SplitSource::Semantic;
    if (t == "classical_only" || t == "classical-only" || t == "classical")
        return SplitSource::ClassicalOnly;
    throw Error(ErrorCode::InvalidConfig, "unknown split source '" + std::string(text) + "'");
}

std::string_view to_string(Degeneracy d) {
    switch (d) {
    case Degeneracy::ForbiddenFeature: return "ForbiddenFeature";
    case Degeneracy::EmptyChild: return "EmptyChild";
    case Degeneracy::NoLabeledChild: return "NoLabeledChild";
    }
    return "EmptyChild";
}

IndexSet NodeRows::all() const {
    IndexSet out;
    out.reserve(size());
    std::merge(labeled.begin(), labeled.end(), unlabeled.begin(), unlabeled.end(),
               std::back_inserter(out));
    return out;
}

namespace {

bool observed_for(const SplitPredicate& pred, const Cell& cell) {
    // Categorical splits treat an absent value as "Unknown", so it always routes.
    return std::holds_alternative<CategoryMembership>(pred) || !is_missing(cell);
}

}  // namespace

Branch majority_side(const SplitPredicate& pred, const IndexSet& rows, const Dataset& ds) {
    const auto f = predicate_feature(pred);
    std::size_t left = 0, right = 0;
    for (auto i : rows) {
        const auto& cell = ds.row(i)[f];
        if (!observed_for(pred, cell)) continue;
        (route_cell(pred, cell, Branch::Left) == Branch::Left ? left : right)++;
    }
    return left >= right ? Branch::Left : Branch::Right;
}

std::pair<IndexSet, IndexSet> apply_split(const SplitPredicate& pred, const IndexSet& rows,
                                          const Dataset& ds, Branch majority) {
    const auto f = predicate_feature(pred);
    std::pair<IndexSet, IndexSet> out;
    for (auto i : rows) {
        auto& side = route_cell(pred, ds.row(i)[f], majority) == Branch::Left ? out.first : out.second;
        side.push_back(i);
    }
    return out;
}

std::pair<IndexSet, IndexSet> apply_split(const SplitPredicate& pred, const IndexSet& rows,
                                          const Dataset& ds) {
    return apply_split(pred, rows, ds, majority_side(pred, rows, ds));
}

SplitCheck validate_split(const SplitPredicate& pred, const NodeRows& rows, const Dataset& ds,
                          const std::vector<std::size_t>& allowed) {
    if (std::find(allowed.begin(), allowed.end(), predicate_feature(pred)) == allowed.end())
        return {Degeneracy::ForbiddenFeature};
    const auto all = rows.all();
    const auto majority = majority_side(pred, all, ds);
    const auto [left, right] = apply_split(pred, all, ds, majority);
    if (left.empty() || right.empty()) return {Degeneracy::EmptyChild};
    if (rows.labeled.size() >= 2) {
        const auto [ll, lr] = apply_split(pred, rows.labeled, ds, majority);
        if (ll.empty() || lr.empty()) return {Degeneracy::NoLabeledChild};
    }
    return {};
}

double impurity(std::span<const Target> labels) {
    if (labels.empty()) throw Error(ErrorCode::EmptyNode, "impurity of an empty node");
    const double n = static_cast<double>(labels.size());
    if (std::holds_alternative<double>(labels.front())) {
        double mean = 0.0;
        for (const auto& t : labels) mean += std::get<double>(t);
        mean /= n;
        double ss = 0.0;
        for (const auto& t : labels) {
            const double d = std::get<double>(t) - mean;
            ss += d * d;
        }
        return ss / n;
    }
    std::map<std::string, std::size_t> counts;
    for (const auto& t : labels) ++counts[std::get<std::string>(t)];
    double g = 1.0;
    for (const auto& [label, c] : counts) {
        const double p = static_cast<double>(c) / n;
        g -= p * p;
    }
    return g;
}

std::optional<ScoredSplit> classical_best_split(const IndexSet& labeled, const Dataset& ds,
                                                const std::vector<std::size_t>& allowed) {
    if (labeled.size() < 2) return std::nullopt;
    std::vector<Target> parent;
    parent.reserve(labeled.size());
    for (auto i : labeled) parent.push_back(ds.target(i));
    const double parent_imp = impurity(parent);
    const double n = static_cast<double>(labeled.size());

    std::vector<ScoredSplit> candidates;
    auto score = [&](const SplitPredicate& pred) {
        const auto [l, r] = apply_split(pred, labeled, ds);
        if (l.empty() || r.empty()) return;
        std::vector<Target> lt, rt;
        for (auto i : l) lt.push_back(ds.target(i));
        for (auto i : r) rt.push_back(ds.target(i));
        const double gain = parent_imp - (static_cast<double>(l.size()) / n) * impurity(lt) -
                            (static_cast<double>(r.size()) / n) * impurity(rt);
        candidates.push_back({pred, gain});
    };

    auto sorted_allowed = allowed;
    std::sort(sorted_allowed.begin(), sorted_allowed.end());
    for (auto f : sorted_allowed) {
        if (ds.schema.features.at(f).kind == FeatureKind::Numeric) {
            std::set<double> values;
            for (auto i : labeled)
                if (const auto* v = std::get_if<double>(&ds.row(i)[f])) values.insert(*v);
            for (auto it = values.begin(); it != values.end() && std::next(it) != values.end(); ++it) {
                const double a = *it, b = *std::next(it);
                double t = a + (b - a) / 2.0;
                if (!(t < b)) t = a;
                score(NumericThreshold{f, t});
            }
        } else {
            std::set<std::string> cats;
            for (auto i : labeled) {
                const auto& cell = ds.row(i)[f];
                const auto* s = std::get_if<std::string>(&cell);
                cats.insert(s ? *s : std::string(kUnknown));
            }
            for (const auto& c : cats) score(CategoryMembership{f, {c}});
        }
    }
    if (candidates.empty()) return std::nullopt;
    double best = candidates.front().gain;
    for (const auto& c : candidates) best = std::max(best, c.gain);
    if (!(best > 1e-12)) return std::nullopt;
    // Candidates were generated in canonical order, so the first near-maximal one wins ties.
    for (const auto& c : candidates)
        if (c.gain >= best - 1e-12) return c;
    return std::nullopt;
}

namespace {

bool targets_pure(const IndexSet& labeled, const Dataset& ds) {
    if (labeled.empty()) return true;
    const auto& first = ds.target(labeled.front());
    if (const auto* v = std::get_if<double>(&first)) {
        double lo = *v, hi = *v;
        for (auto i : labeled) {
            const double x = std::get<double>(ds.target(i));
            lo = std::min(lo, x);
            hi = std::max(hi, x);
        }
        return hi - lo <= 1e-12;
    }
    for (auto i : labeled)
        if (ds.target(i) != first) return false;
    return true;
}

bool retryable(ErrorCode code) {
    switch (code) {
    case ErrorCode::UnknownFeature:
    case ErrorCode::OperatorKindMismatch:
    case ErrorCode::EmptyCategorySet:
    case ErrorCode::NonFiniteThreshold:
    case ErrorCode::MissingToolCall:
    case ErrorCode::MalformedResponse:
        return true;
    default:
        return false;
    }
}

struct ChosenSplit {
    SplitPredicate predicate;
    std::string reasoning;
    SplitOrigin origin;
};

class Grower {
public:
    Grower(const std::vector<std::size_t>& allowed, const Dataset& ds, const InductionConfig& cfg,
           ChatBackend* gateway)
        : allowed_(allowed), ds_(ds), cfg_(cfg), gateway_(gateway) {
        out_.tree.allowed_features = allowed;
    }

    GrownTree run(const NodeRows& root) {
        grow(root, {});
        return std::move(out_);
    }

private:
    std::size_t grow(const NodeRows& rows, const DecisionPath& path) {
        const std::size_t idx = out_.tree.nodes.size();
        out_.tree.nodes.push_back(TreeNode{LeafNode{}});

        const bool stop = path.size() >= cfg_.max_depth ||
                          rows.labeled.size() < cfg_.min_labeled_rows ||
                          rows.size() < cfg_.min_node_rows || targets_pure(rows.labeled, ds_);
        std::optional<ChosenSplit> split;
        const auto calls_before = out_.stats.gateway_calls;
        if (!stop) split = choose(rows, path);
        if (!split) {
            // The leaf label request that follows is not this node's first call.
            if (out_.stats.gateway_calls > calls_before) ++out_.stats.retries;
            out_.tree.nodes[idx] = TreeNode{LeafNode{{}, rows.labeled.size()}};
            out_.leaves.push_back({idx, rows.labeled, path});
            return idx;
        }

        const auto majority = majority_side(split->predicate, rows.all(), ds_);
        auto [ll, lr] = apply_split(split->predicate, rows.labeled, ds_, majority);
        auto [ul, ur] = apply_split(split->predicate, rows.unlabeled, ds_, majority);

        InternalNode node{split->predicate, split->reasoning, majority, split->origin, 0, 0};
        auto left_path = path;
        left_path.push_back({split->predicate, Branch::Left});
        node.left = grow({std::move(ll), std::move(ul)}, left_path);
        auto right_path = path;
        right_path.push_back({split->predicate, Branch::Right});
        node.right = grow({std::move(lr), std::move(ur)}, right_path);
        out_.tree.nodes[idx] = TreeNode{std::move(node)};
        return idx;
    }

    std::optional<ChosenSplit> choose(const NodeRows& rows, const DecisionPath& path) {
        if (cfg_.split_source == SplitSource::Semantic) {
            if (!gateway_) throw Error(ErrorCode::InvalidConfig, "semantic splits need a chat backend");
            if (auto s = semantic(rows, path)) return s;
            ++out_.stats.classical_fallbacks;
        }
        const auto best = classical_best_split(rows.labeled, ds_, allowed_);
        if (!best || !validate_split(best->predicate, rows, ds_, allowed_).valid())
            return std::nullopt;
        return ChosenSplit{best->predicate,
                           fmt::format("Largest impurity reduction over the labeled rows (gain {}).",
                                       text::format_significant(best->gain, 6)),
                           SplitOrigin::Classical};
    }

    std::optional<ChosenSplit> semantic(const NodeRows& rows, const DecisionPath& path) {
        const NodeContext ctx{path, allowed_};
        const auto bundle = render_split_prompt(gather_rows(*ds_.table, rows.all()),
                                                gather_labeled(ds_, rows.labeled), ctx, ds_.schema);
        std::string feedback;
        for (std::size_t attempt = 0; attempt <= cfg_.max_llm_retries; ++attempt) {
            ChatRequest req;
            req.model_id = cfg_.model_id;
            req.temperature = cfg_.temperature;
            req.messages = {{"system", bundle.system_text}, {"user", bundle.user_text + feedback}};
            req.tool_schema = bundle.tool_schema;
            req.seed_tag = cfg_.seed_tag;

            ++out_.stats.gateway_calls;
            if (attempt > 0) ++out_.stats.retries;
            const auto resp = gateway_->complete(req);
            try {
                auto parsed = parse_split(resp, ds_.schema, allowed_);
                const auto check = validate_split(parsed.predicate, rows, ds_, allowed_);
                if (check.valid())
                    return ChosenSplit{std::move(parsed.predicate), std::move(parsed.reasoning),
                                       SplitOrigin::Semantic};
                feedback = fmt::format(
                    "\n\n## Previous proposal rejected\nThe split \"{}\" was rejected ({}): {}. "
                    "Propose a different split.",
                    render_condition({parsed.predicate, Branch::Left}, ds_.schema),
                    to_string(*check.problem), describe(*check.problem));
            } catch (const Error& e) {
                if (!retryable(e.code())) throw;
                feedback = fmt::format(
                    "\n\n## Previous proposal rejected\nThe previous answer could not be used ({}). "
                    "Call {} again with a valid split.",
                    e.what(), kSplitToolName);
            }
        }
        return std::nullopt;
    }

    static std::string_view describe(Degeneracy d) {
        switch (d) {
        case Degeneracy::ForbiddenFeature: return "the feature is not in the allowed list";
        case Degeneracy::EmptyChild: return "one child would receive no rows";
        case Degeneracy::NoLabeledChild: return "one child would receive no labeled examples";
        }
        return "";
    }

    const std::vector<std::size_t>& allowed_;
    const Dataset& ds_;
    const InductionConfig& cfg_;
    ChatBackend* gateway_;
    GrownTree out_;
};

}  // namespace

GrownTree grow_tree(const NodeRows& root, const std::vector<std::size_t>& allowed,
                    const Dataset& ds, const InductionConfig& cfg, ChatBackend* gateway) {
    if (root.labeled.empty())
        throw Error(ErrorCode::InsufficientData, "a tree needs at least one labeled row");
    if (cfg.max_depth < 1) throw Error(ErrorCode::InvalidConfig, "max_depth must be at least 1");
    NodeRows r{root.labeled, cfg.labeled_only ? IndexSet{} : root.unlabeled};
    std::sort(r.labeled.begin(), r.labeled.end());
    std::sort(r.unlabeled.begin(), r.unlabeled.end());
    return Grower(allowed, ds, cfg, gateway).run(r);
}

}  // namespace forestllm
