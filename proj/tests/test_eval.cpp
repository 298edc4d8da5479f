#include "forestllm/error.hpp"
#include "forestllm/eval.hpp"
#include "forestllm/text.hpp"
#include "support/builders.hpp"

#include <gtest/gtest.h>

#include <filesystem>

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
    return ErrorCode::InvariantViolation;
}

std::map<std::string, double> pos(double p) { return {{"pos", p}, {"neg", 1.0 - p}}; }

std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("forestllm_eval_" + name + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace

TEST(Auc, PerfectReversedAndTied) {
    const std::vector<std::string> truth = {"neg", "neg", "pos", "pos"};
    EXPECT_DOUBLE_EQ(auc_macro(truth, {pos(0.1), pos(0.2), pos(0.8), pos(0.9)}), 1.0);
    EXPECT_DOUBLE_EQ(auc_macro(truth, {pos(0.9), pos(0.8), pos(0.2), pos(0.1)}), 0.0);
    EXPECT_DOUBLE_EQ(auc_macro(truth, {pos(0.5), pos(0.5), pos(0.5), pos(0.5)}), 0.5);
}

TEST(Auc, HandComputedWithTie) {
    // pos scores {0.8, 0.4}, neg scores {0.4, 0.1}: pairs 1 + 1 + 0.5 + 1 = 3.5 of 4
    const std::vector<std::string> truth = {"pos", "pos", "neg", "neg"};
    EXPECT_DOUBLE_EQ(auc_macro(truth, {pos(0.8), pos(0.4), pos(0.4), pos(0.1)}), 0.875);
}

TEST(Auc, MacroOverThreeClasses) {
    const std::vector<std::string> truth = {"a", "b", "c"};
    std::vector<std::map<std::string, double>> s = {
        {{"a", 1.0}}, {{"b", 1.0}}, {{"c", 1.0}}};
    EXPECT_DOUBLE_EQ(auc_macro(truth, s), 1.0);
    EXPECT_DOUBLE_EQ(auc_macro(truth, s), oracle::auc_pairwise(truth, s));
}

TEST(Auc, Errors) {
    EXPECT_EQ(code_of([] { auc_macro({"a", "a"}, {{{"a", 1.0}}, {{"a", 0.0}}}); }), ErrorCode::DegenerateTruth);
    EXPECT_EQ(code_of([] { auc_macro({"a", "b"}, {{{"a", 1.0}}}); }), ErrorCode::LengthMismatch);
}

TEST(Auc, AgreesWithPairwiseOracle) {
    Rng rng(99);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 3 + rng.uniform_index(30);
        const std::vector<std::string> classes = {"a", "b", "c"};
        std::vector<std::string> truth;
        std::vector<std::map<std::string, double>> scores;
        for (std::size_t i = 0; i < n; ++i) {
            truth.push_back(i < 2 ? classes[i] : classes[rng.uniform_index(3)]);
            std::map<std::string, double> s;
            for (const auto& c : classes) s[c] = static_cast<double>(rng.uniform_index(5)) / 4.0;
            scores.push_back(s);
        }
        EXPECT_NEAR(auc_macro(truth, scores), oracle::auc_pairwise(truth, scores), 1e-12);
    }
}

TEST(Nrmse, Examples) {
    const std::vector<double> truth = {1.0, 2.0, 3.0, 4.0};
    EXPECT_DOUBLE_EQ(nrmse(truth, truth), 0.0);
    const std::vector<double> mean(4, 2.5);
    EXPECT_DOUBLE_EQ(nrmse(truth, mean), 1.0);
    // rmse 1, population std sqrt(1.25)
    const std::vector<double> off = {2.0, 3.0, 4.0, 5.0};
    EXPECT_DOUBLE_EQ(nrmse(truth, off), 1.0 / std::sqrt(1.25));
    EXPECT_NEAR(nrmse(truth, off), oracle::nrmse_direct(truth, off), 1e-12);
}

TEST(Nrmse, Errors) {
    const std::vector<double> one = {1.0}, flat = {2.0, 2.0}, two = {1.0, 2.0};
    EXPECT_EQ(code_of([&] { nrmse(one, one); }), ErrorCode::InsufficientData);
    EXPECT_EQ(code_of([&] { nrmse(flat, flat); }), ErrorCode::ZeroVariance);
    EXPECT_EQ(code_of([&] { nrmse(two, one); }), ErrorCode::LengthMismatch);
}

TEST(Spec, ParsesAndResolvesPaths) {
    const auto spec = parse_experiment_spec(R"({"dataset": "d.csv", "target": "y", "shots": [4, 8],
        "seeds": [0, 1], "forest": {"n_estimators": 3}, "backend": {"kind": "mock", "script": "s.json"}})",
                                            "/base");
    EXPECT_EQ(spec.dataset, std::filesystem::path("/base/d.csv"));
    EXPECT_EQ(spec.backend.script, std::filesystem::path("/base/s.json"));
    EXPECT_EQ(spec.shots, (std::vector<std::size_t>{4, 8}));
    EXPECT_EQ(spec.forest.n_estimators, 3u);
    EXPECT_EQ(parse_experiment_spec(R"({"dataset": "/abs.csv", "shots": [4]})", "/base").seeds.size(), 10u);
}

TEST(Spec, Invalid) {
    EXPECT_EQ(code_of([] { parse_experiment_spec("{", "."); }), ErrorCode::InvalidConfig);
    EXPECT_EQ(code_of([] { parse_experiment_spec(R"({"dataset": "d", "shots": []})", "."); }),
              ErrorCode::InvalidConfig);
    EXPECT_EQ(code_of([] { parse_experiment_spec(R"({"dataset": "d", "shots": [4], "test_fraction": 1})", "."); }),
              ErrorCode::InvalidConfig);
    EXPECT_EQ(code_of([] { parse_experiment_spec(R"({"dataset": "d", "shots": [4], "forest": {"bogus": 1}})", "."); }),
              ErrorCode::InvalidConfig);
}

class Experiment : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = temp_dir("exp");
        text::write_file_atomic((dir_ / "gauss.csv").string(),
                                testutil::to_csv(testutil::gaussian_dataset(0, 200, 0, 17)));
    }
    void TearDown() override { std::filesystem::remove_all(dir_); }

    ExperimentSpec spec() const {
        auto s = parse_experiment_spec(R"({"dataset": "gauss.csv", "target": "y", "shots": [4, 8],
            "seeds": [0, 1], "forest": {"n_estimators": 3}})",
                                       dir_);
        return s;
    }

    std::filesystem::path dir_;
};

TEST_F(Experiment, OneCellPerShotAndSeed) {
    auto mock = testutil::oracle_mock(false);
    auto s = spec();
    s.models_dir = dir_ / "models";
    const auto report = run_experiment(s, mock.get());
    ASSERT_EQ(report.cells.size(), 4u);
    ASSERT_EQ(report.aggregates.size(), 2u);
    EXPECT_EQ(report.metric, "auc");
    EXPECT_EQ(report.dataset, "gauss");
    std::size_t calls = 0;
    for (const auto& c : report.cells) {
        EXPECT_EQ(c.labeled_rows, c.shot);
        EXPECT_EQ(c.test_rows, 40u);
        EXPECT_EQ(c.labeled_rows + c.unlabeled_rows, 160u);
        EXPECT_GE(c.value, 0.0);
        EXPECT_LE(c.value, 1.0);
        calls += c.gateway_calls;
        EXPECT_TRUE(std::filesystem::exists(*s.models_dir / fmt::format("gauss_shot{}_seed{}.json", c.shot, c.seed)));
    }
    EXPECT_EQ(calls, report.gateway_calls);
    EXPECT_EQ(calls, mock->calls());
    for (std::size_t a = 0; a < 2; ++a) {
        const double x = report.cells[2 * a].value, y = report.cells[2 * a + 1].value;
        EXPECT_DOUBLE_EQ(report.aggregates[a].mean, (x + y) / 2.0);
        EXPECT_NEAR(report.aggregates[a].std, std::abs(x - y) / 2.0, 1e-12);
    }
    const auto lines = text::split_lines(report.to_jsonl());
    std::size_t nonempty = 0;
    for (const auto& l : lines)
        if (!l.empty()) {
            ++nonempty;
            EXPECT_NO_THROW((void)json::parse(l));
        }
    EXPECT_EQ(nonempty, 7u);
}

TEST_F(Experiment, ReportIsReproducible) {
    auto a_mock = testutil::oracle_mock(false), b_mock = testutil::oracle_mock(false);
    const auto a = run_experiment(spec(), a_mock.get());
    const auto b = run_experiment(spec(), b_mock.get());
    EXPECT_EQ(a.to_jsonl(), b.to_jsonl());
    auto other = spec();
    other.seeds = {0, 2};
    auto c_mock = testutil::oracle_mock(false);
    EXPECT_NE(run_experiment(other, c_mock.get()).config_digest, a.config_digest);
}

TEST_F(Experiment, ErrorsNameTheCell) {
    auto s = spec();
    s.shots = {500};
    auto mock = testutil::oracle_mock(false);
    try {
        run_experiment(s, mock.get());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::InsufficientData);
        EXPECT_NE(std::string(e.what()).find("shot 500, seed 0"), std::string::npos);
    }
}
