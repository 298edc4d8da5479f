#include "forestllm/cli.hpp"

#include "forestllm/csv.hpp"
#include "forestllm/distill.hpp"
#include "forestllm/error.hpp"
#include "forestllm/eval.hpp"
#include "forestllm/model_io.hpp"
#include "forestllm/text.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

namespace forestllm {

using nlohmann::json;

namespace {

struct BackendFlags {
    std::string kind;
    std::string script;
    std::string fixtures;
    std::string record_from;
    std::string base_url;
};

void add_backend_flags(CLI::App* cmd, BackendFlags& f) {
    cmd->add_option("--backend", f.kind, "Chat backend")->check(CLI::IsMember({"live", "replay", "mock"}));
    cmd->add_option("--script", f.script, "Mock rule script (.toyrules JSON)");
    cmd->add_option("--fixtures", f.fixtures, "Replay fixture directory");
    cmd->add_option("--record-from", f.record_from, "Answer replay misses with this backend and record them")
        ->check(CLI::IsMember({"mock", "live"}));
    cmd->add_option("--base-url", f.base_url, "OpenAI-compatible endpoint base URL");
}

/// Flags override whatever `spec` already holds.
void apply_backend_flags(const BackendFlags& f, BackendSpec& spec) {
    if (!f.kind.empty()) spec.kind = f.kind;
    if (!f.script.empty()) spec.script = f.script;
    if (!f.fixtures.empty()) spec.fixtures = f.fixtures;
    if (!f.record_from.empty()) spec.record_from = f.record_from;
    if (!f.base_url.empty()) spec.base_url = f.base_url;
}

std::filesystem::path resolve_against(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
}

struct TrainArgs {
    std::string data, schema, target, task, config, out, log, split_source, model_id;
    std::size_t shots = 0, threads = 0;
    std::uint64_t seed = 0;
    bool labeled_only = false, timestamp = false;
    BackendFlags backend;
};

std::string plural(std::size_t n, std::string_view one, std::string_view many) {
    return fmt::format("{} {}", n, n == 1 ? one : many);
}

std::string now_utc() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

int run_train(const TrainArgs& a, CLI::App* cmd, std::ostream& out) {
    ForestConfig cfg;
    BackendSpec backend;
    backend.kind = "live";
    if (!a.config.empty()) {
        const std::filesystem::path cfg_path(a.config);
        json j;
        try {
            j = json::parse(text::read_file(a.config));
        } catch (const json::exception& e) {
            throw Error(ErrorCode::InvalidConfig, std::string("config is not JSON: ") + e.what());
        }
        if (j.contains("backend")) {
            const auto& b = j["backend"];
            const auto base = cfg_path.parent_path();
            backend.kind = b.value("kind", backend.kind);
            if (b.contains("script")) backend.script = resolve_against(base, b["script"].get<std::string>());
            if (b.contains("fixtures")) backend.fixtures = resolve_against(base, b["fixtures"].get<std::string>());
            backend.record_from = b.value("record_from", std::string());
            backend.base_url = b.value("base_url", backend.base_url);
            j.erase("backend");
        }
        cfg = config_from_json(j);
    }
    apply_backend_flags(a.backend, backend);
    if (cmd->count("--seed")) cfg.seed = a.seed;
    if (cmd->count("--labeled-only")) cfg.labeled_only = true;
    if (cmd->count("--split-source")) cfg.split_source = parse_split_source(a.split_source);
    if (cmd->count("--model-id")) cfg.model_id = a.model_id;
    if (cmd->count("--threads")) cfg.threads = a.threads;
    cfg.validate();

    LoadOptions load;
    if (!a.schema.empty()) load.hint = load_schema_hint(a.schema);
    if (!a.target.empty()) load.target = a.target;
    if (!a.task.empty()) load.task = parse_task_kind(a.task);
    const auto loaded = impute(load_csv(a.data, load), ImputeMode::LlmFacing);

    // Rows with a target are the labeled pool, the rest are unlabeled.
    Dataset train;
    if (cmd->count("--shots")) {
        const auto sampled = sample_k_shot(loaded.with_known_targets(), a.shots, cfg.seed);
        train = sampled;
        IndexSet rest;
        std::set_difference(loaded.unlabeled.begin(), loaded.unlabeled.end(), sampled.labeled.begin(),
                            sampled.labeled.end(), std::back_inserter(rest));
        train.unlabeled = std::move(rest);
    } else {
        train.schema = loaded.schema;
        train.table = loaded.table;
        for (auto i : loaded.unlabeled) {
            if (const auto& t = loaded.table->truth[i]) {
                train.labeled.push_back(i);
                train.targets.emplace(i, *t);
            } else {
                train.unlabeled.push_back(i);
            }
        }
    }

    std::shared_ptr<ChatBackend> gateway;
    if (cfg.split_source == SplitSource::Semantic) gateway = make_backend(backend);
    auto model = train_forest(train, cfg, gateway.get());
    if (a.timestamp) model.provenance.created_at = now_utc();
    save_model(model, a.out);

    std::string log = fmt::format("trained {} tree(s) on {} labeled and {} unlabeled row(s)\n",
                                  model.trees.size(), train.labeled.size(), train.unlabeled.size());
    log += fmt::format("backend {}, model_id {}, seed {}, max_depth {}\n", model.provenance.backend,
                       cfg.model_id, cfg.seed, *model.config.max_depth);
    std::size_t calls = 0;
    for (std::size_t k = 0; k < model.provenance.trees.size(); ++k) {
        const auto& t = model.provenance.trees[k];
        calls += t.gateway_calls;
        log += fmt::format(
            "tree {}: gateway_calls {}, retries {}, internal_nodes {}, leaves {}, "
            "classical_fallbacks {}\n",
            k, t.gateway_calls, t.retries, t.internal_nodes, t.leaves, t.classical_fallbacks);
    }
    log += fmt::format("total gateway calls {}\n", calls);
    text::write_file_atomic(a.log.empty() ? a.out + ".log" : a.log, log);
    out << "wrote " << a.out << "\n";
    return 0;
}

std::string format_target(const Target& t) {
    if (const auto* s = std::get_if<std::string>(&t)) return *s;
    return text::format_shortest(std::get<double>(t));
}

int run_predict(const std::string& model_path, const std::string& data, const std::string& out_path,
                std::ostream& out) {
    // Inference never needs a model endpoint.
    set_network_forbidden(true);
    const auto model = load_model(model_path);
    const auto records = csv::read_file(data);

    std::vector<std::string> header = records.header;
    header.push_back("prediction");
    const bool classification = model.schema.is_classification();
    if (classification)
        for (const auto& c : model.schema.classes) header.push_back("score_" + c);

    std::string text_out = csv::format_record(header) + "\n";
    for (const auto& fields : records.rows) {
        const auto row = parse_row(records.header, fields, model.schema);
        auto line = fields;
        line.push_back(format_target(predict(model, row)));
        if (classification)
            for (const auto& [c, s] : predict_scores(model, row)) line.push_back(text::format_shortest(s));
        text_out += csv::format_record(line) + "\n";
    }
    if (out_path.empty() || out_path == "-")
        out << text_out;
    else
        text::write_file_atomic(out_path, text_out);
    return 0;
}

std::string indent_lines(const std::string& text, const std::string& indent) {
    return text::join(text::split_lines(text), "\n" + indent);
}

std::string describe_predicate(const SplitPredicate& p, const Schema& schema) {
    const auto& name = schema.features.at(predicate_feature(p)).name;
    if (const auto* num = std::get_if<NumericThreshold>(&p))
        return fmt::format("{} <= {}", name, text::format_shortest(num->threshold));
    return fmt::format("{} in {{{}}}", name, text::join(std::get<CategoryMembership>(p).categories, ", "));
}

}  // namespace

std::string render_model_dump(const ForestModel& model) {
    const auto& schema = model.schema;
    std::string s;
    s += fmt::format("target: {} ({})", schema.target_name, to_string(schema.task));
    if (schema.is_classification()) s += ", classes: " + text::join(schema.classes, ", ");
    s += "\n";
    s += fmt::format("trees: {}, max_depth {}, model_id {}, backend {}\n", model.trees.size(),
                     model.config.max_depth.value_or(0), model.provenance.model_id,
                     model.provenance.backend);

    std::size_t internal = 0, leaves = 0;
    for (std::size_t k = 0; k < model.trees.size(); ++k) {
        const auto& tree = model.trees[k];
        std::vector<std::string> allowed;
        for (auto f : tree.allowed_features) allowed.push_back(schema.features[f].name);
        s += fmt::format("\ntree {}: {}, {}; allowed features: {}\n", k,
                         plural(tree.internal_count(), "internal node", "internal nodes"),
                         plural(tree.leaf_count(), "leaf", "leaves"), text::join(allowed, ", "));
        internal += tree.internal_count();
        leaves += tree.leaf_count();

        // Depth-first walk carrying the decision path for rule texts.
        std::vector<std::pair<std::size_t, DecisionPath>> stack{{0, {}}};
        while (!stack.empty()) {
            auto [idx, path] = std::move(stack.back());
            stack.pop_back();
            const std::string indent(2 * (path.size() + 1), ' ');
            const auto& node = tree.nodes[idx];
            if (node.is_leaf()) {
                const auto& leaf = node.leaf();
                s += fmt::format("{}[{}] leaf -> {} ({}, support {})\n", indent, node_id(path),
                                 format_target(leaf.assignment.target), to_string(leaf.assignment.source),
                                 leaf.support);
                s += fmt::format("{}  rule: {}\n", indent, induce_rule_text(path, schema));
                if (!leaf.assignment.rationale.empty())
                    s += fmt::format("{}  rationale: {}\n", indent,
                                     indent_lines(leaf.assignment.rationale, indent + "    "));
                continue;
            }
            const auto& in = node.internal();
            s += fmt::format("{}[{}] split {} ({}, missing -> {})\n", indent, node_id(path),
                             describe_predicate(in.predicate, schema), to_string(in.origin),
                             to_string(in.majority_branch));
            if (!in.reasoning.empty()) s += fmt::format("{}  reasoning: {}\n", indent,
                                                   indent_lines(in.reasoning, indent + "    "));
            auto right = path;
            right.push_back({in.predicate, Branch::Right});
            auto left = path;
            left.push_back({in.predicate, Branch::Left});
            stack.emplace_back(in.right, std::move(right));
            stack.emplace_back(in.left, std::move(left));
        }
    }

    s += "\nsplit frequency:\n";
    const auto freq = split_frequency(model);
    for (const auto& f : schema.features) s += fmt::format("  {}: {}\n", f.name, freq.at(f.name));
    s += fmt::format("\ntotal: {}, {}\n", plural(internal, "internal node", "internal nodes"),
                     plural(leaves, "leaf", "leaves"));
    return s;
}

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Few-shot tabular decision forests with LLM-chosen splits and leaves"};
    app.name("forestllm");
    app.require_subcommand(1);

    TrainArgs train;
    auto* train_cmd = app.add_subcommand("train", "Train a forest and write the model file");
    train_cmd->add_option("--data", train.data, "Training CSV; rows with an empty target are unlabeled")
        ->required();
    train_cmd->add_option("--schema", train.schema, "Schema hint JSON");
    train_cmd->add_option("--target", train.target, "Target column name");
    train_cmd->add_option("--task", train.task, "classification or regression");
    train_cmd->add_option("--config", train.config, "Forest config JSON");
    train_cmd->add_option("--out", train.out, "Model file to write")->required();
    train_cmd->add_option("--log", train.log, "Training log (default <out>.log)");
    train_cmd->add_option("--shots", train.shots, "Label only k sampled rows of the labeled pool");
    train_cmd->add_option("--seed", train.seed, "Random seed");
    train_cmd->add_flag("--labeled-only", train.labeled_only, "Ignore unlabeled rows");
    train_cmd->add_option("--split-source", train.split_source, "semantic or classical_only");
    train_cmd->add_option("--model-id", train.model_id, "Chat model id");
    train_cmd->add_option("--threads", train.threads, "Trees trained in parallel (0 = all cores)");
    train_cmd->add_flag("--timestamp", train.timestamp, "Record the training time in the model");
    add_backend_flags(train_cmd, train.backend);

    std::string predict_model, predict_data, predict_out;
    auto* predict_cmd = app.add_subcommand("predict", "Predict a CSV with a trained model (no backend)");
    predict_cmd->add_option("--model", predict_model, "Model file")->required();
    predict_cmd->add_option("--data", predict_data, "Input CSV")->required();
    predict_cmd->add_option("--out", predict_out, "Predictions CSV (default stdout)");

    std::string eval_spec, eval_out, eval_models, eval_model_id;
    BackendFlags eval_backend;
    auto* eval_cmd = app.add_subcommand("evaluate", "Run a multi-seed few-shot experiment");
    eval_cmd->add_option("--spec", eval_spec, "Experiment spec JSON")->required();
    eval_cmd->add_option("--out", eval_out, "Report file (JSON lines; default stdout)");
    eval_cmd->add_option("--models-dir", eval_models, "Save every trained model here");
    eval_cmd->add_option("--model-id", eval_model_id, "Chat model id");
    add_backend_flags(eval_cmd, eval_backend);

    std::string inspect_model;
    auto* inspect_cmd = app.add_subcommand("inspect", "Print trees, rules and split frequencies");
    inspect_cmd->add_option("--model", inspect_model, "Model file")->required();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n";
        const auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
        err << sub->help();
        return 2;
    }

    try {
        if (*train_cmd) return run_train(train, train_cmd, out);
        if (*predict_cmd) return run_predict(predict_model, predict_data, predict_out, out);
        if (*eval_cmd) {
            auto spec = load_experiment_spec(eval_spec);
            apply_backend_flags(eval_backend, spec.backend);
            if (!eval_models.empty()) spec.models_dir = eval_models;
            if (!eval_model_id.empty()) spec.forest.model_id = eval_model_id;
            std::shared_ptr<ChatBackend> gateway;
            if (spec.forest.split_source == SplitSource::Semantic) gateway = make_backend(spec.backend);
            const auto report = run_experiment(spec, gateway.get()).to_jsonl();
            if (eval_out.empty() || eval_out == "-")
                out << report;
            else
                text::write_file_atomic(eval_out, report);
            return 0;
        }
        if (*inspect_cmd) {
            set_network_forbidden(true);
            out << render_model_dump(load_model(inspect_model));
            return 0;
        }
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: IoError: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error: Unexpected: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

int cli_main(int argc, const char* const* argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return cli_main(args, std::cout, std::cerr);
}

}  // namespace forestllm
