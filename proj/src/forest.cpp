#include "forestllm/forest.hpp"

#include "forestllm/distill.hpp"
#include "forestllm/error.hpp"
#include "forestllm/leaf.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <numeric>
#include <thread>

#include <fmt/format.h>

namespace forestllm {

std::size_t ForestConfig::resolved_max_depth(std::size_t shots) const {
    if (max_depth) return *max_depth;
    return shots <= 16 ? 3 : 5;
}

void ForestConfig::validate() const {
    if (n_estimators < 1) throw Error(ErrorCode::InvalidConfig, "n_estimators must be at least 1");
    if (max_depth && *max_depth < 1)
        throw Error(ErrorCode::InvalidConfig, "max_depth must be at least 1");
    if (!(max_features > 0.0 && max_features <= 1.0))
        throw Error(ErrorCode::InvalidConfig, "max_features must lie in (0, 1]");
    if (exemplar_cap < 1) throw Error(ErrorCode::InvalidConfig, "exemplar_cap must be at least 1");
}

std::vector<std::size_t> draw_allowed_features(std::size_t d, double max_features, Rng& rng) {
    // The small slack keeps products like 0.9 * 10 from rounding up to 10.
    auto m = static_cast<std::size_t>(std::ceil(max_features * static_cast<double>(d) - 1e-9));
    m = std::clamp<std::size_t>(m, 1, d);
    std::vector<std::size_t> all(d);
    std::iota(all.begin(), all.end(), 0);
    rng.shuffle(std::span(all));
    all.resize(m);
    std::sort(all.begin(), all.end());
    return all;
}

namespace {

IndexSet resample(const IndexSet& rows, Rng& rng) {
    IndexSet out;
    out.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) out.push_back(rows[rng.uniform_index(rows.size())]);
    std::sort(out.begin(), out.end());
    return out;
}

struct TreeResult {
    Tree tree;
    TreeProvenance prov;
};

TreeResult train_one(const Dataset& train, const ForestConfig& cfg, std::size_t max_depth,
                     std::size_t k, ChatBackend* gateway) {
    TreeResult res;
    res.prov.seed = derive_seed(cfg.seed, k);
    Rng rng(res.prov.seed);
    const auto allowed = draw_allowed_features(train.schema.features.size(), cfg.max_features, rng);

    NodeRows rows;
    rows.labeled = cfg.bootstrap_labeled ? resample(train.labeled, rng) : train.labeled;
    if (!cfg.labeled_only) {
        rows.unlabeled = cfg.bootstrap && !train.unlabeled.empty() ? resample(train.unlabeled, rng)
                                                                   : train.unlabeled;
    }

    InductionConfig ic;
    ic.max_depth = max_depth;
    ic.min_node_rows = cfg.min_node_rows;
    ic.min_labeled_rows = cfg.min_labeled_rows;
    ic.max_llm_retries = cfg.max_llm_retries;
    ic.labeled_only = cfg.labeled_only;
    ic.split_source = cfg.split_source;
    ic.temperature = cfg.construction_temperature;
    ic.model_id = cfg.model_id;
    ic.seed_tag = k;
    auto grown = grow_tree(rows, allowed, train, ic, gateway);

    res.tree = std::move(grown.tree);
    if (!train.schema.is_classification()) {
        double lo = std::get<double>(train.target(rows.labeled.front())), hi = lo;
        for (auto i : rows.labeled) {
            const double v = std::get<double>(train.target(i));
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        res.tree.target_range = std::make_pair(lo, hi);
    }

    ChatBackend* leaf_gateway = cfg.split_source == SplitSource::Semantic ? gateway : nullptr;
    std::size_t leaf_calls = 0, leaf_retries = 0;
    for (const auto& pending : grown.leaves) {
        const auto exemplars = retrieve_exemplars(pending.labeled, rows.labeled, cfg.exemplar_cap);
        LeafOptions opts;
        opts.model_id = cfg.model_id;
        opts.temperature = cfg.leaf_temperature;
        opts.seed_tag = k;
        opts.leaf_id = node_id(pending.path);
        opts.target_range = res.tree.target_range;
        auto outcome = assign_leaf(induce_rule_text(pending.path, train.schema), exemplars, train,
                                   leaf_gateway, opts);
        leaf_calls += outcome.gateway_calls;
        leaf_retries += outcome.retries;
        res.tree.nodes[pending.node] =
            TreeNode{LeafNode{std::move(outcome.assignment), pending.labeled.size()}};
    }

    res.prov.gateway_calls = grown.stats.gateway_calls + leaf_calls;
    res.prov.retries = grown.stats.retries + leaf_retries;
    res.prov.internal_nodes = res.tree.internal_count();
    res.prov.leaves = res.tree.leaf_count();
    res.prov.classical_fallbacks = grown.stats.classical_fallbacks;
    return res;
}

}  // namespace

ForestModel train_forest(const Dataset& train, const ForestConfig& cfg, ChatBackend* gateway) {
    cfg.validate();
    if (train.labeled.empty())
        throw Error(ErrorCode::InsufficientData, "training needs at least one labeled row");
    if (cfg.split_source == SplitSource::Semantic && !gateway)
        throw Error(ErrorCode::InvalidConfig, "semantic training needs a chat backend");

    ForestModel model;
    model.schema = train.schema;
    model.config = cfg;
    model.config.max_depth = cfg.resolved_max_depth(train.labeled.size());
    const std::size_t max_depth = *model.config.max_depth;

    std::vector<TreeResult> results(cfg.n_estimators);
    std::vector<std::exception_ptr> errors(cfg.n_estimators);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t k = next++; k < cfg.n_estimators; k = next++) {
            try {
                results[k] = train_one(train, cfg, max_depth, k, gateway);
            } catch (...) {
                errors[k] = std::current_exception();
            }
        }
    };
    std::size_t threads = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
    threads = std::min(threads, cfg.n_estimators);
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    }

    for (std::size_t k = 0; k < errors.size(); ++k) {
        if (!errors[k]) continue;
        try {
            std::rethrow_exception(errors[k]);
        } catch (const Error& e) {
            throw Error(e.code(), fmt::format("tree {}: {}", k, e.detail()));
        }
    }

    model.provenance.model_id = cfg.model_id;
    model.provenance.backend = gateway ? gateway->kind() : "none";
    model.provenance.seed = cfg.seed;
    model.provenance.labeled_rows = train.labeled.size();
    model.provenance.unlabeled_rows = cfg.labeled_only ? 0 : train.unlabeled.size();
    for (auto& r : results) {
        model.trees.push_back(std::move(r.tree));
        model.provenance.trees.push_back(r.prov);
    }
    return model;
}

Routed route(const Tree& tree, const Row& row) {
    Routed out;
    std::size_t idx = 0;
    while (!tree.nodes.at(idx).is_leaf()) {
        const auto& node = tree.nodes[idx].internal();
        const auto branch =
            route_cell(node.predicate, row.at(predicate_feature(node.predicate)), node.majority_branch);
        out.path.push_back({node.predicate, branch});
        idx = branch == Branch::Left ? node.left : node.right;
    }
    out.leaf = &tree.nodes[idx].leaf();
    return out;
}

namespace {

std::map<std::string, std::size_t> votes(const ForestModel& model, const Row& row) {
    std::map<std::string, std::size_t> v;
    for (const auto& c : model.schema.classes) v[c] = 0;
    for (const auto& tree : model.trees)
        ++v[std::get<std::string>(route(tree, row).leaf->assignment.target)];
    return v;
}

}  // namespace

Target predict(const ForestModel& model, const Row& row) {
    if (model.trees.empty()) throw Error(ErrorCode::InvariantViolation, "model has no trees");
    if (!model.schema.is_classification()) {
        double sum = 0.0;
        for (const auto& tree : model.trees)
            sum += std::get<double>(route(tree, row).leaf->assignment.target);
        return sum / static_cast<double>(model.trees.size());
    }
    const auto v = votes(model, row);
    // Map order is lexicographic, so the first maximum is the tie-break winner.
    auto best = v.begin();
    for (auto it = v.begin(); it != v.end(); ++it)
        if (it->second > best->second) best = it;
    return best->first;
}

std::map<std::string, double> predict_scores(const ForestModel& model, const Row& row) {
    if (!model.schema.is_classification())
        throw Error(ErrorCode::TaskMismatch, "scores are defined for classification models only");
    if (model.trees.empty()) throw Error(ErrorCode::InvariantViolation, "model has no trees");
    std::map<std::string, double> scores;
    const double n = static_cast<double>(model.trees.size());
    for (const auto& [c, k] : votes(model, row)) scores[c] = static_cast<double>(k) / n;
    return scores;
}

std::map<std::string, std::size_t> split_frequency(const ForestModel& model) {
    std::map<std::string, std::size_t> freq;
    for (const auto& f : model.schema.features) freq[f.name] = 0;
    for (const auto& tree : model.trees)
        for (const auto& node : tree.nodes)
            if (!node.is_leaf())
                ++freq[model.schema.features.at(predicate_feature(node.internal().predicate)).name];
    return freq;
}

}  // namespace forestllm
