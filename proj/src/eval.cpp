#include "forestllm/eval.hpp"

#include "forestllm/error.hpp"
#include "forestllm/model_io.hpp"
#include "forestllm/text.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <fmt/format.h>
#include <json.hpp>

namespace forestllm {

using nlohmann::json;

double auc_macro(const std::vector<std::string>& truth,
                 const std::vector<std::map<std::string, double>>& scores) {
    if (truth.size() != scores.size())
        throw Error(ErrorCode::LengthMismatch,
                    fmt::format("{} labels but {} score rows", truth.size(), scores.size()));
    const std::set<std::string> present(truth.begin(), truth.end());
    if (present.size() < 2)
        throw Error(ErrorCode::DegenerateTruth, "AUC needs at least two classes in the truth");

    const std::size_t n = truth.size();
    std::vector<std::size_t> order(n);
    std::vector<double> s(n), ranks(n);
    double total = 0.0;
    for (const auto& c : present) {
        for (std::size_t i = 0; i < n; ++i) {
            auto it = scores[i].find(c);
            s[i] = it == scores[i].end() ? 0.0 : it->second;
        }
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](auto a, auto b) { return s[a] < s[b]; });
        for (std::size_t i = 0; i < n;) {
            std::size_t j = i;
            while (j + 1 < n && s[order[j + 1]] == s[order[i]]) ++j;
            const double midrank = (static_cast<double>(i + j) / 2.0) + 1.0;
            for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = midrank;
            i = j + 1;
        }
        double rank_sum = 0.0;
        std::size_t pos = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (truth[i] == c) {
                rank_sum += ranks[i];
                ++pos;
            }
        }
        const double p = static_cast<double>(pos), q = static_cast<double>(n - pos);
        total += (rank_sum - p * (p + 1.0) / 2.0) / (p * q);
    }
    return total / static_cast<double>(present.size());
}

double nrmse(std::span<const double> truth, std::span<const double> pred) {
    if (truth.size() != pred.size())
        throw Error(ErrorCode::LengthMismatch,
                    fmt::format("{} targets but {} predictions", truth.size(), pred.size()));
    if (truth.size() < 2) throw Error(ErrorCode::InsufficientData, "NRMSE needs at least two rows");
    if (std::all_of(truth.begin(), truth.end(), [&](double v) { return v == truth.front(); }))
        throw Error(ErrorCode::ZeroVariance, "truth is constant");
    const double n = static_cast<double>(truth.size());
    const double mean = std::accumulate(truth.begin(), truth.end(), 0.0) / n;
    double ss_truth = 0.0, ss_err = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        ss_truth += (truth[i] - mean) * (truth[i] - mean);
        ss_err += (truth[i] - pred[i]) * (truth[i] - pred[i]);
    }
    return std::sqrt(ss_err / n) / std::sqrt(ss_truth / n);
}

void ExperimentSpec::validate() const {
    if (shots.empty()) throw Error(ErrorCode::InvalidConfig, "experiment needs at least one shot count");
    if (seeds.empty()) throw Error(ErrorCode::InvalidConfig, "experiment needs at least one seed");
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw Error(ErrorCode::InvalidConfig, "test_fraction must lie in (0, 1)");
    forest.validate();
}

ExperimentSpec parse_experiment_spec(std::string_view json_text,
                                     const std::filesystem::path& base_dir) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidConfig, std::string("experiment spec is not JSON: ") + e.what());
    }
    auto resolve = [&](const std::string& p) {
        std::filesystem::path path(p);
        return path.is_absolute() ? path : base_dir / path;
    };
    ExperimentSpec spec;
    try {
        spec.dataset = resolve(j.at("dataset").get<std::string>());
        if (j.contains("schema")) spec.schema_hint = resolve(j["schema"].get<std::string>());
        if (j.contains("target")) spec.target = j["target"].get<std::string>();
        if (j.contains("task")) spec.task = parse_task_kind(j["task"].get<std::string>());
        spec.shots = j.at("shots").get<std::vector<std::size_t>>();
        if (j.contains("seeds")) spec.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
        if (j.contains("test_fraction")) spec.test_fraction = j["test_fraction"].get<double>();
        if (j.contains("forest")) spec.forest = config_from_json(j["forest"]);
        if (j.contains("models_dir")) spec.models_dir = resolve(j["models_dir"].get<std::string>());
        if (j.contains("backend")) {
            const auto& b = j["backend"];
            spec.backend.kind = b.value("kind", spec.backend.kind);
            if (b.contains("script")) spec.backend.script = resolve(b["script"].get<std::string>());
            if (b.contains("fixtures"))
                spec.backend.fixtures = resolve(b["fixtures"].get<std::string>());
            spec.backend.record_from = b.value("record_from", std::string());
            spec.backend.base_url = b.value("base_url", spec.backend.base_url);
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidConfig, std::string("bad experiment spec: ") + e.what());
    }
    spec.validate();
    return spec;
}

ExperimentSpec load_experiment_spec(const std::filesystem::path& path) {
    return parse_experiment_spec(text::read_file(path.string()), path.parent_path());
}

std::string ExperimentReport::to_jsonl() const {
    std::string out;
    for (const auto& c : cells) {
        out += json{{"type", "cell"},
                    {"dataset", dataset},
                    {"metric", metric},
                    {"shot", c.shot},
                    {"seed", c.seed},
                    {"value", c.value},
                    {"gateway_calls", c.gateway_calls},
                    {"retries", c.retries},
                    {"labeled_rows", c.labeled_rows},
                    {"unlabeled_rows", c.unlabeled_rows},
                    {"test_rows", c.test_rows}}
                   .dump();
        out += '\n';
    }
    for (const auto& a : aggregates) {
        out += json{{"type", "aggregate"}, {"dataset", dataset}, {"metric", metric},
                    {"shot", a.shot},      {"mean", a.mean},       {"std", a.std},
                    {"seeds", a.seeds}}
                   .dump();
        out += '\n';
    }
    out += json{{"type", "provenance"},
                {"dataset", dataset},
                {"config_digest", config_digest},
                {"backend", backend},
                {"gateway_calls", gateway_calls}}
               .dump();
    out += '\n';
    return out;
}

ExperimentReport run_experiment(const ExperimentSpec& spec, ChatBackend* gateway) {
    spec.validate();
    LoadOptions load;
    if (spec.schema_hint) load.hint = load_schema_hint(*spec.schema_hint);
    load.target = spec.target;
    load.task = spec.task;
    const auto raw = text::read_file(spec.dataset.string());
    // Imputation runs once on the full table, before any split.
    const auto data = impute(parse_csv_dataset(raw, load), ImputeMode::LlmFacing).with_known_targets();
    const bool classification = data.schema.is_classification();

    ExperimentReport report;
    report.dataset = spec.dataset.stem().string();
    report.metric = classification ? "auc" : "nrmse";
    report.backend = gateway ? gateway->kind() : "none";
    report.config_digest = text::sha256_hex(json{{"dataset_sha256", text::sha256_hex(raw)},
                                                 {"schema", schema_to_json(data.schema)},
                                                 {"forest", config_to_json(spec.forest)},
                                                 {"shots", spec.shots},
                                                 {"seeds", spec.seeds},
                                                 {"test_fraction", spec.test_fraction}}
                                                .dump());
    if (spec.models_dir) std::filesystem::create_directories(*spec.models_dir);

    for (auto shot : spec.shots) {
        ShotAggregate agg;
        agg.shot = shot;
        std::vector<double> values;
        for (auto seed : spec.seeds) {
            try {
                const auto [train_pool, test] =
                    train_test_split(data, {spec.test_fraction, seed, classification});
                const auto train = sample_k_shot(train_pool, shot, seed);
                auto cfg = spec.forest;
                cfg.seed = seed;
                const auto model = train_forest(train, cfg, gateway);
                if (spec.models_dir)
                    save_model(model, *spec.models_dir /
                                          fmt::format("{}_shot{}_seed{}.json", report.dataset, shot, seed));

                CellResult cell;
                cell.shot = shot;
                cell.seed = seed;
                cell.labeled_rows = train.labeled.size();
                cell.unlabeled_rows = train.unlabeled.size();
                cell.test_rows = test.unlabeled.size();
                for (const auto& t : model.provenance.trees) {
                    cell.gateway_calls += t.gateway_calls;
                    cell.retries += t.retries;
                }
                if (classification) {
                    std::vector<std::string> truth;
                    std::vector<std::map<std::string, double>> scores;
                    for (auto i : test.unlabeled) {
                        truth.push_back(std::get<std::string>(*data.table->truth[i]));
                        scores.push_back(predict_scores(model, data.row(i)));
                    }
                    cell.value = auc_macro(truth, scores);
                } else {
                    std::vector<double> truth, pred;
                    for (auto i : test.unlabeled) {
                        truth.push_back(std::get<double>(*data.table->truth[i]));
                        pred.push_back(std::get<double>(predict(model, data.row(i))));
                    }
                    cell.value = nrmse(truth, pred);
                }
                report.gateway_calls += cell.gateway_calls;
                values.push_back(cell.value);
                agg.seeds.push_back(seed);
                report.cells.push_back(cell);
            } catch (const Error& e) {
                throw Error(e.code(), fmt::format("shot {}, seed {}: {}", shot, seed, e.detail()));
            }
        }
        const double n = static_cast<double>(values.size());
        agg.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
        double ss = 0.0;
        for (double v : values) ss += (v - agg.mean) * (v - agg.mean);
        agg.std = std::sqrt(ss / n);
        report.aggregates.push_back(std::move(agg));
    }
    return report;
}

}  // namespace forestllm
