#include "forestllm/model_io.hpp"

#include "forestllm/error.hpp"
#include "forestllm/text.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace forestllm {

using nlohmann::json;

namespace {

[[noreturn]] void invalid(const std::string& detail) {
    throw Error(ErrorCode::InvariantViolation, detail);
}

json target_to_json(const Target& t) {
    if (const auto* s = std::get_if<std::string>(&t)) return *s;
    return std::get<double>(t);
}

Branch parse_branch(const std::string& s) {
    if (s == "left") return Branch::Left;
    if (s == "right") return Branch::Right;
    invalid("unknown branch '" + s + "'");
}

SplitOrigin parse_origin(const std::string& s) {
    if (s == "semantic") return SplitOrigin::Semantic;
    if (s == "classical") return SplitOrigin::Classical;
    invalid("unknown split origin '" + s + "'");
}

LeafSource parse_source(const std::string& s) {
    if (s == "llm_inferred") return LeafSource::LlmInferred;
    if (s == "fallback_majority") return LeafSource::FallbackMajority;
    if (s == "fallback_mean") return LeafSource::FallbackMean;
    invalid("unknown leaf source '" + s + "'");
}

json tree_to_json(const Tree& tree, const Schema& schema) {
    json allowed = json::array();
    for (auto f : tree.allowed_features) allowed.push_back(schema.features.at(f).name);
    json nodes = json::array();
    for (const auto& node : tree.nodes) {
        if (node.is_leaf()) {
            const auto& leaf = node.leaf();
            nodes.push_back({{"type", "leaf"},
                             {"target", target_to_json(leaf.assignment.target)},
                             {"rationale", leaf.assignment.rationale},
                             {"exemplar_count", leaf.assignment.exemplar_count},
                             {"source", to_string(leaf.assignment.source)},
                             {"support", leaf.support}});
            continue;
        }
        const auto& in = node.internal();
        json j = {{"type", "internal"},
                  {"feature", schema.features.at(predicate_feature(in.predicate)).name},
                  {"reasoning", in.reasoning},
                  {"majority_branch", to_string(in.majority_branch)},
                  {"origin", to_string(in.origin)},
                  {"left", in.left},
                  {"right", in.right}};
        if (const auto* num = std::get_if<NumericThreshold>(&in.predicate)) {
            j["operator"] = "<=";
            j["threshold"] = num->threshold;
        } else {
            j["operator"] = "in";
            j["categories"] = std::get<CategoryMembership>(in.predicate).categories;
        }
        nodes.push_back(std::move(j));
    }
    json out = {{"allowed_features", allowed}, {"nodes", nodes}};
    if (tree.target_range)
        out["target_range"] = json::array({tree.target_range->first, tree.target_range->second});
    return out;
}

std::size_t feature_by_name(const Schema& schema, const json& name) {
    const auto idx = schema.feature_index(name.get<std::string>());
    if (!idx) invalid("unknown feature '" + name.get<std::string>() + "'");
    return *idx;
}

Tree tree_from_json(const json& j, const Schema& schema, std::size_t max_depth, std::size_t k) {
    const auto where = "tree " + std::to_string(k) + ": ";
    Tree tree;
    for (const auto& name : j.at("allowed_features"))
        tree.allowed_features.push_back(feature_by_name(schema, name));
    if (tree.allowed_features.empty()) invalid(where + "no allowed features");
    if (!std::is_sorted(tree.allowed_features.begin(), tree.allowed_features.end()) ||
        std::adjacent_find(tree.allowed_features.begin(), tree.allowed_features.end()) !=
            tree.allowed_features.end())
        invalid(where + "allowed features out of schema order or repeated");
    if (j.contains("target_range")) {
        const auto& r = j["target_range"];
        tree.target_range = std::make_pair(r.at(0).get<double>(), r.at(1).get<double>());
        if (!(tree.target_range->first <= tree.target_range->second))
            invalid(where + "empty target range");
    }
    if (!schema.is_classification() && !tree.target_range)
        invalid(where + "regression tree without target_range");

    const auto& nodes = j.at("nodes");
    if (!nodes.is_array() || nodes.empty()) invalid(where + "no nodes");
    for (const auto& n : nodes) {
        const auto type = n.at("type").get<std::string>();
        if (type == "leaf") {
            LeafAssignment a;
            const auto& t = n.at("target");
            if (schema.is_classification()) {
                if (!t.is_string()) invalid(where + "classification leaf with a numeric target");
                a.target = t.get<std::string>();
                if (!schema.has_class(t.get<std::string>()))
                    invalid(where + "leaf class '" + t.get<std::string>() + "' not in the schema");
            } else {
                if (!t.is_number()) invalid(where + "regression leaf with a non-numeric target");
                const double v = t.get<double>();
                if (!std::isfinite(v) || v < tree.target_range->first || v > tree.target_range->second)
                    invalid(where + "leaf value outside the labeled target range");
                a.target = v;
            }
            a.rationale = n.at("rationale").get<std::string>();
            a.exemplar_count = n.at("exemplar_count").get<std::size_t>();
            a.source = parse_source(n.at("source").get<std::string>());
            tree.nodes.push_back(TreeNode{LeafNode{std::move(a), n.at("support").get<std::size_t>()}});
        } else if (type == "internal") {
            const auto f = feature_by_name(schema, n.at("feature"));
            if (!std::binary_search(tree.allowed_features.begin(), tree.allowed_features.end(), f))
                invalid(where + "split on feature '" + schema.features[f].name +
                        "' outside the tree's allowed features");
            const auto op = n.at("operator").get<std::string>();
            const auto kind = schema.features[f].kind;
            InternalNode in;
            if (op == "<=") {
                if (kind != FeatureKind::Numeric) invalid(where + "'<=' on a categorical feature");
                const double t = n.at("threshold").get<double>();
                if (!std::isfinite(t)) invalid(where + "non-finite threshold");
                in.predicate = NumericThreshold{f, t};
            } else if (op == "in") {
                if (kind != FeatureKind::Categorical) invalid(where + "'in' on a numeric feature");
                auto cats = n.at("categories").get<std::vector<std::string>>();
                if (cats.empty()) invalid(where + "empty category set");
                if (!std::is_sorted(cats.begin(), cats.end()) ||
                    std::adjacent_find(cats.begin(), cats.end()) != cats.end())
                    invalid(where + "categories not sorted and unique");
                in.predicate = CategoryMembership{f, std::move(cats)};
            } else {
                invalid(where + "unknown operator '" + op + "'");
            }
            in.reasoning = n.at("reasoning").get<std::string>();
            in.majority_branch = parse_branch(n.at("majority_branch").get<std::string>());
            in.origin = parse_origin(n.at("origin").get<std::string>());
            in.left = n.at("left").get<std::size_t>();
            in.right = n.at("right").get<std::size_t>();
            tree.nodes.push_back(TreeNode{std::move(in)});
        } else {
            invalid(where + "unknown node type '" + type + "'");
        }
    }

    // Structure: every node reached exactly once from the root, children after parents.
    std::vector<int> seen(tree.nodes.size(), 0);
    std::vector<std::pair<std::size_t, std::size_t>> stack{{0, 0}};
    while (!stack.empty()) {
        const auto [idx, depth] = stack.back();
        stack.pop_back();
        if (++seen[idx] > 1) invalid(where + "node reached twice");
        if (depth > max_depth) invalid(where + "path longer than max_depth");
        if (tree.nodes[idx].is_leaf()) continue;
        const auto& in = tree.nodes[idx].internal();
        for (auto child : {in.left, in.right}) {
            if (child <= idx || child >= tree.nodes.size()) invalid(where + "bad child index");
            stack.emplace_back(child, depth + 1);
        }
    }
    if (std::count(seen.begin(), seen.end(), 0) > 0) invalid(where + "unreachable nodes");
    return tree;
}

}  // namespace

json schema_to_json(const Schema& schema) {
    json features = json::array();
    for (const auto& f : schema.features)
        features.push_back({{"name", f.name}, {"kind", to_string(f.kind)}});
    json j = {{"features", features},
              {"target", schema.target_name},
              {"task", to_string(schema.task)},
              {"task_description", schema.task_description}};
    if (schema.is_classification()) j["classes"] = schema.classes;
    return j;
}

Schema schema_from_json(const json& j) {
    Schema s;
    for (const auto& f : j.at("features"))
        s.features.push_back({f.at("name").get<std::string>(),
                              parse_feature_kind(f.at("kind").get<std::string>())});
    s.target_name = j.at("target").get<std::string>();
    s.task = parse_task_kind(j.at("task").get<std::string>());
    if (s.is_classification()) s.classes = j.at("classes").get<std::vector<std::string>>();
    s.task_description = j.value("task_description", std::string());
    return s;
}

json config_to_json(const ForestConfig& cfg) {
    json j = {{"n_estimators", cfg.n_estimators},
              {"bootstrap", cfg.bootstrap},
              {"bootstrap_labeled", cfg.bootstrap_labeled},
              {"max_features", cfg.max_features},
              {"construction_temperature", cfg.construction_temperature},
              {"leaf_temperature", cfg.leaf_temperature},
              {"labeled_only", cfg.labeled_only},
              {"split_source", to_string(cfg.split_source)},
              {"seed", cfg.seed},
              {"min_node_rows", cfg.min_node_rows},
              {"min_labeled_rows", cfg.min_labeled_rows},
              {"max_llm_retries", cfg.max_llm_retries},
              {"exemplar_cap", cfg.exemplar_cap},
              {"model_id", cfg.model_id}};
    if (cfg.max_depth) j["max_depth"] = *cfg.max_depth;
    return j;
}

ForestConfig config_from_json(const json& j, ForestConfig c) {
    if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "forest config must be an object");
    static const std::set<std::string> known = {
        "n_estimators",   "max_depth",       "bootstrap",        "bootstrap_labeled",
        "max_features",   "construction_temperature",            "leaf_temperature",
        "labeled_only",   "split_source",    "seed",             "min_node_rows",
        "min_labeled_rows", "max_llm_retries", "exemplar_cap",   "model_id",
        "threads"};
    for (const auto& [key, value] : j.items())
        if (!known.count(key)) throw Error(ErrorCode::InvalidConfig, "unknown config key '" + key + "'");
    try {
        if (j.contains("n_estimators")) c.n_estimators = j["n_estimators"].get<std::size_t>();
        if (j.contains("max_depth")) {
            if (j["max_depth"].is_null())
                c.max_depth.reset();
            else
                c.max_depth = j["max_depth"].get<std::size_t>();
        }
        if (j.contains("bootstrap")) c.bootstrap = j["bootstrap"].get<bool>();
        if (j.contains("bootstrap_labeled")) c.bootstrap_labeled = j["bootstrap_labeled"].get<bool>();
        if (j.contains("max_features")) c.max_features = j["max_features"].get<double>();
        if (j.contains("construction_temperature"))
            c.construction_temperature = j["construction_temperature"].get<double>();
        if (j.contains("leaf_temperature")) c.leaf_temperature = j["leaf_temperature"].get<double>();
        if (j.contains("labeled_only")) c.labeled_only = j["labeled_only"].get<bool>();
        if (j.contains("split_source"))
            c.split_source = parse_split_source(j["split_source"].get<std::string>());
        if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
        if (j.contains("min_node_rows")) c.min_node_rows = j["min_node_rows"].get<std::size_t>();
        if (j.contains("min_labeled_rows"))
            c.min_labeled_rows = j["min_labeled_rows"].get<std::size_t>();
        if (j.contains("max_llm_retries")) c.max_llm_retries = j["max_llm_retries"].get<std::size_t>();
        if (j.contains("exemplar_cap")) c.exemplar_cap = j["exemplar_cap"].get<std::size_t>();
        if (j.contains("model_id")) c.model_id = j["model_id"].get<std::string>();
        if (j.contains("threads")) c.threads = j["threads"].get<std::size_t>();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidConfig, std::string("bad config value: ") + e.what());
    }
    c.validate();
    return c;
}

std::string serialize_model(const ForestModel& model) {
    json trees = json::array();
    for (const auto& t : model.trees) trees.push_back(tree_to_json(t, model.schema));
    json per_tree = json::array();
    for (const auto& t : model.provenance.trees)
        per_tree.push_back({{"seed", t.seed},
                            {"gateway_calls", t.gateway_calls},
                            {"retries", t.retries},
                            {"internal_nodes", t.internal_nodes},
                            {"leaves", t.leaves},
                            {"classical_fallbacks", t.classical_fallbacks}});
    json prov = {{"model_id", model.provenance.model_id},
                 {"backend", model.provenance.backend},
                 {"seed", model.provenance.seed},
                 {"labeled_rows", model.provenance.labeled_rows},
                 {"unlabeled_rows", model.provenance.unlabeled_rows},
                 {"trees", per_tree}};
    if (model.provenance.created_at) prov["created_at"] = *model.provenance.created_at;
    const json doc = {{"format_version", kModelFormatVersion},
                      {"schema", schema_to_json(model.schema)},
                      {"config", config_to_json(model.config)},
                      {"trees", trees},
                      {"provenance", prov}};
    return doc.dump(2) + "\n";
}

ForestModel deserialize_model(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        invalid(std::string("model file is not JSON: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("format_version") || !doc["format_version"].is_number_integer())
        invalid("missing format_version");
    if (doc["format_version"].get<int>() != kModelFormatVersion)
        throw Error(ErrorCode::UnsupportedVersion,
                    "model format " + doc["format_version"].dump() + ", this build reads " +
                        std::to_string(kModelFormatVersion));
    ForestModel model;
    try {
        model.schema = schema_from_json(doc.at("schema"));
        try {
            model.schema.validate();
        } catch (const Error& e) {
            invalid("schema: " + e.detail());
        }
        model.config = config_from_json(doc.at("config"));
        if (!model.config.max_depth) invalid("config without max_depth");
        const auto& trees = doc.at("trees");
        if (trees.size() != model.config.n_estimators)
            invalid("tree count differs from n_estimators");
        for (std::size_t k = 0; k < trees.size(); ++k)
            model.trees.push_back(tree_from_json(trees[k], model.schema, *model.config.max_depth, k));

        const auto& p = doc.at("provenance");
        model.provenance.model_id = p.at("model_id").get<std::string>();
        model.provenance.backend = p.at("backend").get<std::string>();
        model.provenance.seed = p.at("seed").get<std::uint64_t>();
        model.provenance.labeled_rows = p.at("labeled_rows").get<std::size_t>();
        model.provenance.unlabeled_rows = p.at("unlabeled_rows").get<std::size_t>();
        if (p.contains("created_at")) model.provenance.created_at = p["created_at"].get<std::string>();
        for (const auto& t : p.at("trees"))
            model.provenance.trees.push_back({t.at("seed").get<std::uint64_t>(),
                                              t.at("gateway_calls").get<std::size_t>(),
                                              t.at("retries").get<std::size_t>(),
                                              t.at("internal_nodes").get<std::size_t>(),
                                              t.at("leaves").get<std::size_t>(),
                                              t.at("classical_fallbacks").get<std::size_t>()});
    } catch (const json::exception& e) {
        invalid(std::string("malformed model file: ") + e.what());
    } catch (const Error& e) {
        if (e.code() == ErrorCode::InvariantViolation || e.code() == ErrorCode::UnsupportedVersion)
            throw;
        invalid(e.detail());
    }
    return model;
}

void save_model(const ForestModel& model, const std::filesystem::path& path) {
    text::write_file_atomic(path.string(), serialize_model(model));
}

ForestModel load_model(const std::filesystem::path& path) {
    return deserialize_model(text::read_file(path.string()));
}

}  // namespace forestllm
