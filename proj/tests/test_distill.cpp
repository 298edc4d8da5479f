#include "forestllm/distill.hpp"
#include "forestllm/error.hpp"
#include "support/prompt_fixtures.hpp"

#include <gtest/gtest.h>

using namespace forestllm;
using testutil::make_dataset;

namespace {

Schema mixed_schema() {
    Schema s;
    s.features = {{"age", FeatureKind::Numeric}, {"job", FeatureKind::Categorical}};
    s.target_name = "y";
    s.classes = {"no", "yes"};
    s.task_description = "Predict y.";
    return s;
}

}  // namespace

TEST(Serialize, RowAndExample) {
    const auto s = mixed_schema();
    const Row row{42.0, std::string("teacher")};
    EXPECT_EQ(serialize_row(row, s), "age is 42. job is teacher.");
    const Target t = std::string("yes");
    EXPECT_EQ(serialize_row(row, s, {}, &t), "age is 42. job is teacher. -> yes");
    EXPECT_EQ(serialize_row(Row{Missing{}, std::string("x")}, s, {1}), "job is x.");
    EXPECT_EQ(serialize_row(Row{Missing{}, std::string("x")}, s), "age is Unknown. job is x.");
    EXPECT_EQ(serialize_row(Row{0.1234567, std::string("x")}, s, {0}), "age is 0.123457.");
}

TEST(Summary, NumericQuantilesUseLinearInterpolation) {
    Schema s = mixed_schema();
    std::vector<Row> rows = {{1.0, std::string("a")}, {2.0, std::string("a")},
                             {3.0, std::string("b")}, {4.0, std::string("a")},
                             {Missing{}, std::string("Unknown")}};
    const auto ds = make_dataset(s, rows, std::vector<std::optional<Target>>(5), {}, {0, 1, 2, 3, 4});
    const auto summary = summarize_features(gather_rows(*ds.table, ds.unlabeled), s);
    const auto& age = summary.features[0];
    EXPECT_EQ(age.count, 5u);
    EXPECT_EQ(age.missing_count, 1u);
    ASSERT_TRUE(age.numeric);
    EXPECT_DOUBLE_EQ(age.numeric->mean, 2.5);
    EXPECT_DOUBLE_EQ(age.numeric->p25, 1.75);  // 1 + 0.75 * (2 - 1)
    EXPECT_DOUBLE_EQ(age.numeric->p75, 3.25);
    EXPECT_DOUBLE_EQ(age.numeric->std, 1.118);  // sqrt(1.25) to 4 significant digits
    const auto text = summary.render();
    EXPECT_NE(text.find("- age (numeric): count 5, missing 1, mean 2.5, std 1.118, min 1, p25 1.75"),
              std::string::npos);
    EXPECT_NE(text.find("- job (categorical): count 5, missing 0, values: a: 3, Unknown: 1, b: 1"),
              std::string::npos)
        << text;
}

TEST(Summary, LongTailFoldsIntoOther) {
    Schema s = mixed_schema();
    std::vector<Row> rows;
    for (int i = 0; i < 25; ++i) rows.push_back({1.0, std::string("c") + std::to_string(100 + i)});
    const auto ds = make_dataset(s, rows, std::vector<std::optional<Target>>(25), {}, {});
    IndexSet all(25);
    for (int i = 0; i < 25; ++i) all[i] = i;
    const auto summary = summarize_features(gather_rows(*ds.table, all), s, {1});
    ASSERT_EQ(summary.features.size(), 1u);
    EXPECT_EQ(summary.features[0].top.size(), FeatureSummary::kTopCategories);
    EXPECT_EQ(summary.features[0].other_count, 5u);
}

TEST(Rules, ConditionsAndConjunction) {
    const auto s = mixed_schema();
    DecisionPath path = {{NumericThreshold{0, 40.5}, Branch::Right},
                         {CategoryMembership{1, {"nurse", "teacher"}}, Branch::Left}};
    EXPECT_EQ(render_condition(path[0], s), "age is greater than 40.5");
    EXPECT_EQ(render_condition({path[0].predicate, Branch::Left}, s), "age is at most 40.5");
    EXPECT_EQ(render_condition({path[1].predicate, Branch::Right}, s), "job is not one of {nurse, teacher}");
    EXPECT_EQ(induce_rule_text(path, s), "age is greater than 40.5 AND job is one of {nurse, teacher}");
    EXPECT_EQ(induce_rule_text({}, s), "no conditions (root is a leaf)");
    EXPECT_EQ(node_id(path), "root/R/L");
}

TEST(SplitPrompt, OnlyAllowedFeaturesAppear) {
    const auto fx = testutil::load_prompt_fixture("bank_depth2");
    const auto b = testutil::fixture_split_bundle(fx);
    EXPECT_EQ(b.user_text.find("housing is"), std::string::npos);
    EXPECT_EQ(b.user_text.find("- housing"), std::string::npos);
    EXPECT_NE(b.user_text.find("- balance (numeric)"), std::string::npos);
    const auto& names = b.tool_schema["parameters"]["properties"]["feature"]["enum"];
    EXPECT_EQ(names, nlohmann::json({"age", "job", "balance"}));
    EXPECT_EQ(b.tool_schema["name"], "select_split");
    EXPECT_NE(b.user_text.find("This node is at depth 2."), std::string::npos);
}

TEST(SplitPrompt, NoAllowedFeaturesIsAnError) {
    auto fx = testutil::load_prompt_fixture("blood_root");
    fx.ctx.allowed_features.clear();
    try {
        testutil::fixture_split_bundle(fx);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NoCandidateFeatures);
    }
}

TEST(LeafPrompt, FallbackContextIsAnnounced) {
    const auto fx = testutil::load_prompt_fixture("leaf_fallback");
    const auto b = testutil::fixture_leaf_bundle(fx);
    EXPECT_TRUE(b.tool_schema.is_null());
    EXPECT_NE(b.user_text.find("come from the whole tree"), std::string::npos);
    EXPECT_NE(b.user_text.find("Leaf id: root/L/R"), std::string::npos);
}

TEST(LeafPrompt, EmptyExemplarsSaySo) {
    const auto fx = testutil::load_prompt_fixture("blood_root");
    const auto b = render_leaf_prompt("x", LabeledRows{}, fx.ds.schema, "root");
    EXPECT_NE(b.user_text.find("no labeled examples reached this leaf"), std::string::npos);
}

class GoldenPrompts : public ::testing::TestWithParam<std::string> {};

TEST_P(GoldenPrompts, SplitMatchesGolden) {
    const auto fx = testutil::load_prompt_fixture(GetParam());
    const auto text = render_bundle_text(testutil::fixture_split_bundle(fx));
    EXPECT_TRUE(testutil::matches_golden(testutil::golden_path(GetParam(), "split"), text)) << text;
    EXPECT_TRUE(testutil::missing_split_fields(fx, text).empty());
}

TEST_P(GoldenPrompts, LeafMatchesGolden) {
    const auto fx = testutil::load_prompt_fixture(GetParam());
    const auto text = render_bundle_text(testutil::fixture_leaf_bundle(fx));
    EXPECT_TRUE(testutil::matches_golden(testutil::golden_path(GetParam(), "leaf"), text)) << text;
    EXPECT_TRUE(testutil::missing_leaf_fields(fx, text).empty());
}

INSTANTIATE_TEST_SUITE_P(Fixtures, GoldenPrompts, ::testing::ValuesIn(testutil::prompt_fixture_names()));
