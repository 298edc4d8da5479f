#include "forestllm/error.hpp"
#include "forestllm/forest.hpp"
#include "support/builders.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace forestllm;

namespace {

TreeNode leaf(Target t) { return TreeNode{LeafNode{LeafAssignment{std::move(t), "", 0, LeafSource::LlmInferred}, 0}}; }

TreeNode split(SplitPredicate p, std::size_t l, std::size_t r, Branch majority = Branch::Left) {
    return TreeNode{InternalNode{std::move(p), "", majority, SplitOrigin::Semantic, l, r}};
}

Tree single(Target t) {
    Tree tree;
    tree.nodes = {leaf(std::move(t))};
    return tree;
}

ForestModel model_of(std::vector<Tree> trees, bool regression) {
    ForestModel m;
    m.schema = testutil::numeric_schema(2, regression);
    m.trees = std::move(trees);
    m.config.n_estimators = m.trees.size();
    return m;
}

Target cls(const char* c) { return std::string(c); }

/// x0 <= 0 ? (x1 <= 5 ? A : B) : C, pre-order.
Tree depth_two() {
    Tree t;
    t.nodes = {split(NumericThreshold{0, 0.0}, 1, 4, Branch::Right),
               split(NumericThreshold{1, 5.0}, 2, 3), leaf(cls("A")), leaf(cls("B")), leaf(cls("C"))};
    t.allowed_features = {0, 1};
    return t;
}

}  // namespace

TEST(Route, SingleLeaf) {
    const auto t = single(cls("A"));
    const auto r = route(t, Row{1.0, 2.0});
    EXPECT_EQ(r.leaf->assignment.target, cls("A"));
    EXPECT_TRUE(r.path.empty());
}

TEST(Route, HandTracedDepthTwo) {
    const auto t = depth_two();
    EXPECT_EQ(route(t, Row{-1.0, 3.0}).leaf->assignment.target, cls("A"));
    EXPECT_EQ(route(t, Row{-1.0, 7.0}).leaf->assignment.target, cls("B"));
    EXPECT_EQ(route(t, Row{0.5, 3.0}).leaf->assignment.target, cls("C"));
    const auto r = route(t, Row{0.0, 5.0});  // both thresholds inclusive on the left
    EXPECT_EQ(r.leaf->assignment.target, cls("A"));
    ASSERT_EQ(r.path.size(), 2u);
    EXPECT_EQ(node_id(r.path), "root/L/L");
}

TEST(Route, MissingValueFollowsMajorityBranch) {
    const auto t = depth_two();
    EXPECT_EQ(route(t, Row{Missing{}, 3.0}).leaf->assignment.target, cls("C"));
    EXPECT_EQ(route(t, Row{-1.0, Missing{}}).leaf->assignment.target, cls("A"));
}

TEST(Predict, MajorityVote) {
    const auto m = model_of({single(cls("A")), single(cls("A")), single(cls("B"))}, false);
    EXPECT_EQ(predict(m, Row{0.0, 0.0}), cls("A"));
}

TEST(Predict, TieGoesToSmallerLabel) {
    const auto m = model_of({single(cls("B")), single(cls("A"))}, false);
    EXPECT_EQ(predict(m, Row{0.0, 0.0}), cls("A"));
}

TEST(Predict, RegressionAverages) {
    const auto m = model_of({single(1.0), single(3.0)}, true);
    EXPECT_EQ(predict(m, Row{0.0, 0.0}), Target(2.0));
    EXPECT_THROW(predict_scores(m, Row{0.0, 0.0}), Error);
}

TEST(Predict, ScoresAreVoteFractions) {
    std::vector<Tree> trees;
    for (int i = 0; i < 6; ++i) trees.push_back(single(cls("A")));
    for (int i = 0; i < 3; ++i) trees.push_back(single(cls("B")));
    const auto scores = predict_scores(model_of(trees, false), Row{0.0, 0.0});
    EXPECT_DOUBLE_EQ(scores.at("A"), 6.0 / 9.0);
    EXPECT_DOUBLE_EQ(scores.at("B"), 3.0 / 9.0);
}

TEST(SplitFrequency, CountsEveryFeature) {
    auto m = model_of({depth_two(), depth_two(), single(cls("A"))}, false);
    const auto freq = split_frequency(m);
    EXPECT_EQ(freq.at("x0"), 2u);
    EXPECT_EQ(freq.at("x1"), 2u);
    m.trees = {single(cls("A"))};
    EXPECT_EQ(split_frequency(m).at("x1"), 0u);
}

TEST(AllowedFeatures, CeilOfFraction) {
    Rng rng(1);
    const auto ten = draw_allowed_features(10, 0.9, rng);
    EXPECT_EQ(ten.size(), 9u);
    EXPECT_TRUE(std::is_sorted(ten.begin(), ten.end()));
    EXPECT_EQ(std::set<std::size_t>(ten.begin(), ten.end()).size(), 9u);
    EXPECT_EQ(draw_allowed_features(4, 0.9, rng).size(), 4u);
    EXPECT_EQ(draw_allowed_features(10, 0.01, rng).size(), 1u);
    EXPECT_EQ(draw_allowed_features(5, 1.0, rng), (std::vector<std::size_t>{0, 1, 2, 3, 4}));
}

TEST(Config, ResolvedDepthAndValidation) {
    ForestConfig c;
    EXPECT_EQ(c.resolved_max_depth(16), 3u);
    EXPECT_EQ(c.resolved_max_depth(32), 5u);
    c.max_depth = 7;
    EXPECT_EQ(c.resolved_max_depth(4), 7u);
    c = {};
    c.max_features = 0.0;
    EXPECT_THROW(c.validate(), Error);
    c = {};
    c.n_estimators = 0;
    EXPECT_THROW(c.validate(), Error);
}

TEST(Train, DeterministicForFixedSeed) {
    const auto ds = testutil::gaussian_dataset(8, 60, 0, 7);
    ForestConfig cfg;
    cfg.seed = 3;
    cfg.threads = 4;
    auto a_mock = testutil::oracle_mock(false);
    auto b_mock = testutil::oracle_mock(false);
    const auto a = train_forest(ds, cfg, a_mock.get());
    cfg.threads = 1;
    const auto b = train_forest(ds, cfg, b_mock.get());
    EXPECT_EQ(a.trees, b.trees);
    EXPECT_EQ(a.provenance, b.provenance);
    ASSERT_EQ(a.trees.size(), 9u);
    EXPECT_EQ(a.config.max_depth, std::optional<std::size_t>(3));
    EXPECT_EQ(a.provenance.labeled_rows, 8u);
    EXPECT_EQ(a.provenance.unlabeled_rows, 60u);
    EXPECT_EQ(a.provenance.backend, "mock");
}

TEST(Train, CallCountsMatchTreeShape) {
    const auto ds = testutil::gaussian_dataset(16, 100, 0, 11);
    auto counting = std::make_shared<CountingBackend>(testutil::oracle_mock(false));
    ForestConfig cfg;
    const auto m = train_forest(ds, cfg, counting.get());
    for (std::size_t k = 0; k < m.trees.size(); ++k) {
        const auto& p = m.provenance.trees[k];
        EXPECT_EQ(counting->calls(k), p.gateway_calls) << "tree " << k;
        EXPECT_EQ(p.gateway_calls, p.internal_nodes + p.leaves + p.retries) << "tree " << k;
        EXPECT_EQ(p.internal_nodes, m.trees[k].internal_count());
        EXPECT_EQ(p.seed, derive_seed(cfg.seed, k));
    }
}

TEST(Train, FailedSplitNodesStillSatisfyTheCallIdentity) {
    // Every split proposal is degenerate; nodes fall back to classical splits
    // or become leaves after spending their split attempts.
    const auto ds = testutil::gaussian_dataset(6, 20, 0, 2);
    auto mock = std::make_shared<MockBackend>(parse_mock_script(R"({"rules": [
        {"kind": "split", "replies": [{"feature": "x0", "operator": "<=", "threshold": 1e9}]},
        {"kind": "leaf", "replies": [{"builtin": "majority"}]}]})"));
    ForestConfig cfg;
    cfg.n_estimators = 3;
    const auto m = train_forest(ds, cfg, mock.get());
    std::size_t total = 0;
    for (const auto& p : m.provenance.trees) {
        EXPECT_EQ(p.gateway_calls, p.internal_nodes + p.leaves + p.retries);
        EXPECT_GT(p.classical_fallbacks, 0u);
        total += p.gateway_calls;
    }
    EXPECT_EQ(total, mock->calls());
}

TEST(Train, ClassicalOnlyMakesZeroCalls) {
    const auto ds = testutil::gaussian_dataset(8, 30, 0, 1);
    ForestConfig cfg;
    cfg.split_source = SplitSource::ClassicalOnly;
    ForbiddenBackend forbidden;
    const auto m = train_forest(ds, cfg, &forbidden);
    for (const auto& p : m.provenance.trees) EXPECT_EQ(p.gateway_calls, 0u);
    const auto n = train_forest(ds, cfg, nullptr);
    EXPECT_EQ(m.trees, n.trees);
}

TEST(Train, RegressionLeavesStayInRange) {
    const auto ds = testutil::piecewise_dataset(8, 40, 0, 4);
    auto mock = testutil::oracle_mock(true);
    const auto m = train_forest(ds, {}, mock.get());
    for (const auto& t : m.trees) {
        ASSERT_TRUE(t.target_range);
        EXPECT_EQ(*t.target_range, std::make_pair(10.0, 30.0));
        for (const auto& n : t.nodes)
            if (n.is_leaf()) {
                const double v = std::get<double>(n.leaf().assignment.target);
                EXPECT_GE(v, 10.0);
                EXPECT_LE(v, 30.0);
            }
    }
}

TEST(Train, ErrorsNameTheTree) {
    const auto ds = testutil::gaussian_dataset(4, 10, 0, 1);
    auto mock = std::make_shared<MockBackend>(parse_mock_script(R"({"rules": [
        {"kind": "split", "tree": 0, "replies": [{"builtin": "classical"}]}]})"));
    try {
        train_forest(ds, {}, mock.get());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NoScriptMatch);
        EXPECT_NE(std::string(e.what()).find("tree "), std::string::npos);
    }
}

TEST(Train, NoLabeledRowsIsInsufficient) {
    auto ds = testutil::gaussian_dataset(0, 10, 0, 1);
    ForbiddenBackend f;
    EXPECT_THROW(train_forest(ds, {}, &f), Error);
}
