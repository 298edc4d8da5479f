#include "forestllm/error.hpp"
#include "forestllm/model_io.hpp"
#include "support/builders.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <functional>

using namespace forestllm;
using nlohmann::json;

namespace {

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "expected an Error";
    return ErrorCode::InvalidConfig;
}

const ForestModel& classification_model() {
    static const ForestModel m = [] {
        auto mock = testutil::oracle_mock(false);
        ForestConfig cfg;
        cfg.n_estimators = 3;
        return train_forest(testutil::gaussian_dataset(8, 40, 0, 5), cfg, mock.get());
    }();
    return m;
}

const ForestModel& regression_model() {
    static const ForestModel m = [] {
        auto mock = testutil::oracle_mock(true);
        ForestConfig cfg;
        cfg.n_estimators = 3;
        return train_forest(testutil::piecewise_dataset(8, 40, 0, 5), cfg, mock.get());
    }();
    return m;
}

/// First internal node of tree 0 in the serialized document.
json& first_internal(json& doc) {
    for (auto& n : doc["trees"][0]["nodes"])
        if (n["type"] == "internal") return n;
    throw std::logic_error("no internal node");
}

json& first_leaf(json& doc) {
    for (auto& n : doc["trees"][0]["nodes"])
        if (n["type"] == "leaf") return n;
    throw std::logic_error("no leaf");
}

ErrorCode corrupt(const ForestModel& m, const std::function<void(json&)>& edit) {
    auto doc = json::parse(serialize_model(m));
    edit(doc);
    return code_of([&] { deserialize_model(doc.dump(2)); });
}

}  // namespace

TEST(RoundTrip, ByteIdentical) {
    for (const auto* m : {&classification_model(), &regression_model()}) {
        const auto text = serialize_model(*m);
        const auto back = deserialize_model(text);
        EXPECT_EQ(serialize_model(back), text);
        EXPECT_EQ(back.trees, m->trees);
        EXPECT_EQ(back.provenance, m->provenance);
        EXPECT_EQ(back.schema, m->schema);
        EXPECT_EQ(text.back(), '\n');
    }
}

TEST(RoundTrip, ThroughTheFilesystem) {
    const auto path = std::filesystem::temp_directory_path() / ("forestllm_model_" + std::to_string(::getpid()) + ".json");
    save_model(classification_model(), path);
    EXPECT_EQ(serialize_model(load_model(path)), serialize_model(classification_model()));
    std::filesystem::remove(path);
    EXPECT_THROW(load_model(path), Error);
}

TEST(RoundTrip, NoTimestampUnlessRequested) {
    EXPECT_EQ(serialize_model(classification_model()).find("created_at"), std::string::npos);
    auto m = classification_model();
    m.provenance.created_at = "2024-01-01T00:00:00Z";
    EXPECT_EQ(deserialize_model(serialize_model(m)).provenance.created_at, m.provenance.created_at);
}

TEST(RoundTrip, CategoricalSplitsSurvive) {
    auto m = classification_model();
    m.schema.features[1].kind = FeatureKind::Categorical;
    Tree t;
    t.allowed_features = {1};
    t.nodes = {TreeNode{InternalNode{CategoryMembership{1, {"p", "q"}}, "why", Branch::Right,
                                     SplitOrigin::Semantic, 1, 2}},
               TreeNode{LeafNode{{std::string("A"), "left", 2, LeafSource::LlmInferred}, 2}},
               TreeNode{LeafNode{{std::string("B"), "right", 2, LeafSource::FallbackMajority}, 0}}};
    m.trees[0] = t;
    const auto back = deserialize_model(serialize_model(m));
    EXPECT_EQ(back.trees[0], t);
}

TEST(Validation, UnknownLeafClass) {
    EXPECT_EQ(corrupt(classification_model(), [](json& d) { first_leaf(d)["target"] = "Z"; }),
              ErrorCode::InvariantViolation);
}

TEST(Validation, FutureFormatVersion) {
    EXPECT_EQ(corrupt(classification_model(), [](json& d) { d["format_version"] = 2; }),
              ErrorCode::UnsupportedVersion);
    EXPECT_EQ(corrupt(classification_model(), [](json& d) { d.erase("format_version"); }),
              ErrorCode::InvariantViolation);
}

TEST(Validation, StructuralCorruptions) {
    const auto& m = classification_model();
    const std::vector<std::pair<const char*, std::function<void(json&)>>> cases = {
        {"not json", [](json& d) { d = "}"; }},
        {"tree count", [](json& d) { d["trees"].erase(0); }},
        {"feature outside allowed set", [](json& d) { d["trees"][0]["allowed_features"] = {"x1"}; first_internal(d)["feature"] = "x0"; }},
        {"unknown feature", [](json& d) { first_internal(d)["feature"] = "nope"; }},
        {"operator kind", [](json& d) { first_internal(d)["operator"] = "in"; first_internal(d)["categories"] = {"a"}; }},
        {"child before parent", [](json& d) { first_internal(d)["left"] = 0; }},
        {"child out of range", [](json& d) { first_internal(d)["right"] = 999; }},
        {"nonfinite threshold", [](json& d) { first_internal(d)["threshold"] = nullptr; }},
        {"depth over bound", [](json& d) { d["config"]["max_depth"] = 0; }},
        {"unsorted allowed", [](json& d) { d["trees"][0]["allowed_features"] = {"x1", "x0"}; }},
        {"bad leaf source", [](json& d) { first_leaf(d)["source"] = "guess"; }},
        {"numeric class target", [](json& d) { first_leaf(d)["target"] = 1.0; }},
        {"unknown config key", [](json& d) { d["config"]["bogus"] = 1; }},
        {"missing provenance", [](json& d) { d.erase("provenance"); }},
    };
    ASSERT_GT(m.trees[0].internal_count(), 0u);
    for (const auto& [what, edit] : cases) EXPECT_EQ(corrupt(m, edit), ErrorCode::InvariantViolation) << what;
}

TEST(Validation, DuplicateChildReference) {
    auto doc = json::parse(serialize_model(classification_model()));
    auto& in = first_internal(doc);
    in["right"] = in["left"];
    EXPECT_EQ(code_of([&] { deserialize_model(doc.dump()); }), ErrorCode::InvariantViolation);
}

TEST(Validation, RegressionLeafOutsideRange) {
    EXPECT_EQ(corrupt(regression_model(), [](json& d) { first_leaf(d)["target"] = 1e6; }),
              ErrorCode::InvariantViolation);
    EXPECT_EQ(corrupt(regression_model(), [](json& d) { d["trees"][0].erase("target_range"); }),
              ErrorCode::InvariantViolation);
}

TEST(Config, RejectsUnknownKeysAndKeepsDefaults) {
    const auto c = config_from_json(json{{"n_estimators", 5}, {"split_source", "classical_only"}});
    EXPECT_EQ(c.n_estimators, 5u);
    EXPECT_EQ(c.split_source, SplitSource::ClassicalOnly);
    EXPECT_DOUBLE_EQ(c.max_features, 0.9);
    EXPECT_THROW(config_from_json(json{{"nope", 1}}), Error);
    EXPECT_EQ(config_from_json(config_to_json(c)).n_estimators, 5u);
    EXPECT_FALSE(config_to_json(c).contains("threads"));
}
