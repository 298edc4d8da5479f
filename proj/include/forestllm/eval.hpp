#pragma once

#include "forestllm/dataset.hpp"
#include "forestllm/forest.hpp"
#include "forestllm/gateway.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace forestllm {

/// One-vs-rest AUC (midrank statistic, ties count one half) averaged over the
/// classes present in `truth`. A class absent from a score map scores 0.
/// Throws DegenerateTruth, LengthMismatch.
double auc_macro(const std::vector<std::string>& truth,
                 const std::vector<std::map<std::string, double>>& scores);

/// RMSE divided by the population standard deviation of `truth`.
/// Throws LengthMismatch, InsufficientData, ZeroVariance.
double nrmse(std::span<const double> truth, std::span<const double> pred);

struct ExperimentSpec {
    std::filesystem::path dataset;
    std::optional<std::filesystem::path> schema_hint;
    std::optional<std::string> target;
    std::optional<TaskKind> task;
    std::vector<std::size_t> shots;
    std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    double test_fraction = 0.2;
    ForestConfig forest;
    BackendSpec backend;
    /// When set, every trained model is saved here.
    std::optional<std::filesystem::path> models_dir;

    void validate() const;
};

/// Relative paths resolve against `base_dir`.
ExperimentSpec parse_experiment_spec(std::string_view json_text,
                                     const std::filesystem::path& base_dir);
ExperimentSpec load_experiment_spec(const std::filesystem::path& path);

struct CellResult {
    std::size_t shot = 0;
    std::uint64_t seed = 0;
    double value = 0.0;
    std::size_t gateway_calls = 0;
    std::size_t retries = 0;
    std::size_t labeled_rows = 0;
    std::size_t unlabeled_rows = 0;
    std::size_t test_rows = 0;
};

struct ShotAggregate {
    std::size_t shot = 0;
    double mean = 0.0;
    double std = 0.0;  // population
    std::vector<std::uint64_t> seeds;
};

struct ExperimentReport {
    std::string dataset;
    std::string metric;  // "auc" or "nrmse"
    std::vector<CellResult> cells;
    std::vector<ShotAggregate> aggregates;
    std::string config_digest;
    std::string backend;
    std::size_t gateway_calls = 0;

    /// One JSON object per line: cells, then aggregates, then provenance.
    std::string to_jsonl() const;
};

ExperimentReport run_experiment(const ExperimentSpec& spec, ChatBackend* gateway);

}  // namespace forestllm
