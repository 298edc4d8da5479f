#pragma once

#include "forestllm/dataset.hpp"
#include "forestllm/gateway.hpp"
#include "forestllm/rng.hpp"
#include "oracles.hpp"

#include <fmt/format.h>

#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace testutil {

using namespace forestllm;

/// Dataset over `rows` with targets bound on `labeled`.
inline Dataset make_dataset(Schema schema, std::vector<Row> rows,
                            std::vector<std::optional<Target>> truth, IndexSet labeled,
                            IndexSet unlabeled) {
    auto table = std::make_shared<Table>();
    table->rows = std::move(rows);
    table->truth = std::move(truth);
    Dataset ds;
    ds.schema = std::move(schema);
    ds.table = table;
    ds.labeled = std::move(labeled);
    ds.unlabeled = std::move(unlabeled);
    for (auto i : ds.labeled) ds.targets.emplace(i, *table->truth.at(i));
    return ds;
}

inline Schema numeric_schema(std::size_t d, bool regression, std::vector<std::string> classes = {"A", "B"}) {
    Schema s;
    for (std::size_t f = 0; f < d; ++f) s.features.push_back({"x" + std::to_string(f), FeatureKind::Numeric});
    s.target_name = "y";
    s.task = regression ? TaskKind::Regression : TaskKind::Classification;
    if (!regression) s.classes = std::move(classes);
    s.task_description = "Synthetic task.";
    return s;
}

/// Random small table for the gain oracle, in both representations.
struct RandomTable {
    std::vector<oracle::Column> columns;
    oracle::Labels labels;
    Dataset ds;  // rows 0..n-1 labeled
    std::vector<std::size_t> allowed;
};

inline RandomTable random_table(Rng& rng, std::size_t max_rows = 12, std::size_t max_features = 4,
                                bool allow_missing = true) {
    RandomTable t;
    const std::size_t n = 2 + rng.uniform_index(max_rows - 1);
    const std::size_t d = 1 + rng.uniform_index(max_features);
    const bool regression = rng.uniform_index(3) == 0;
    Schema schema;
    schema.target_name = "y";
    schema.task_description = "Random table.";
    schema.task = regression ? TaskKind::Regression : TaskKind::Classification;
    const std::size_t n_classes = 2 + rng.uniform_index(2);
    for (std::size_t c = 0; c < n_classes; ++c) schema.classes.push_back(std::string(1, char('a' + c)));
    if (regression) schema.classes.clear();

    std::vector<Row> rows(n);
    for (std::size_t f = 0; f < d; ++f) {
        oracle::Column col;
        col.numeric = rng.uniform_index(3) != 0;
        schema.features.push_back({"f" + std::to_string(f),
                                   col.numeric ? FeatureKind::Numeric : FeatureKind::Categorical});
        // Few distinct values so that ties in gain are common.
        const std::size_t levels = 1 + rng.uniform_index(4);
        for (std::size_t i = 0; i < n; ++i) {
            if (allow_missing && rng.uniform_index(8) == 0) {
                col.cells.push_back(std::nullopt);
                rows[i].push_back(Missing{});
            } else if (col.numeric) {
                const double v = static_cast<double>(rng.uniform_index(levels)) * 1.5 - 1.0;
                col.cells.push_back(v);
                rows[i].push_back(v);
            } else {
                const std::string v(1, char('p' + rng.uniform_index(levels)));
                col.cells.push_back(v);
                rows[i].push_back(v);
            }
        }
        t.columns.push_back(std::move(col));
    }
    std::vector<std::optional<Target>> truth;
    t.labels.regression = regression;
    for (std::size_t i = 0; i < n; ++i) {
        if (regression) {
            const double v = static_cast<double>(rng.uniform_index(5));
            t.labels.values.push_back(v);
            truth.emplace_back(v);
        } else {
            const auto c = schema.classes[rng.uniform_index(n_classes)];
            t.labels.classes.push_back(c);
            truth.emplace_back(c);
        }
    }
    for (std::size_t f = 0; f < d; ++f)
        if (rng.uniform_index(4) != 0 || f == 0) t.allowed.push_back(f);
    IndexSet labeled(n);
    for (std::size_t i = 0; i < n; ++i) labeled[i] = i;
    t.ds = make_dataset(schema, std::move(rows), std::move(truth), labeled, {});
    return t;
}

/// Two well separated 2-D Gaussian classes. Rows [0, labeled) are labeled
/// (balanced), the next `unlabeled` rows unlabeled, the rest are test rows.
inline Dataset gaussian_dataset(std::size_t labeled, std::size_t unlabeled, std::size_t test,
                                std::uint64_t seed) {
    Rng rng(seed);
    const std::size_t n = labeled + unlabeled + test;
    std::vector<Row> rows;
    std::vector<std::optional<Target>> truth;
    for (std::size_t i = 0; i < n; ++i) {
        const bool pos = i % 2 == 1;
        const double cx = pos ? 3.0 : -3.0, cy = pos ? 3.0 : -3.0;
        rows.push_back({rng.normal(cx, 1.0), rng.normal(cy, 1.0)});
        truth.emplace_back(std::string(pos ? "B" : "A"));
    }
    IndexSet lab, unl;
    for (std::size_t i = 0; i < labeled; ++i) lab.push_back(i);
    for (std::size_t i = labeled; i < labeled + unlabeled; ++i) unl.push_back(i);
    return make_dataset(numeric_schema(2, false), std::move(rows), std::move(truth), lab, unl);
}

/// y = 10 when x0 <= 0, else 30; x1 is noise. Labeled rows alternate sides.
inline Dataset piecewise_dataset(std::size_t labeled, std::size_t unlabeled, std::size_t test,
                                 std::uint64_t seed) {
    Rng rng(seed);
    const std::size_t n = labeled + unlabeled + test;
    std::vector<Row> rows;
    std::vector<std::optional<Target>> truth;
    for (std::size_t i = 0; i < n; ++i) {
        double x0 = rng.uniform01() * 2.0 - 1.0;
        if (i < labeled) x0 = (i % 2 ? 1.0 : -1.0) * (0.1 + rng.uniform01() * 0.9);
        rows.push_back({x0, rng.normal(0.0, 1.0)});
        truth.emplace_back(x0 <= 0.0 ? 10.0 : 30.0);
    }
    IndexSet lab, unl;
    for (std::size_t i = 0; i < labeled; ++i) lab.push_back(i);
    for (std::size_t i = labeled; i < labeled + unlabeled; ++i) unl.push_back(i);
    return make_dataset(numeric_schema(2, true), std::move(rows), std::move(truth), lab, unl);
}

/// Every table row with its true target, as CSV text.
inline std::string to_csv(const Dataset& ds) {
    std::ostringstream out;
    for (const auto& f : ds.schema.features) out << f.name << ',';
    out << ds.schema.target_name << '\n';
    for (std::size_t i = 0; i < ds.row_count(); ++i) {
        for (const auto& cell : ds.row(i)) {
            if (const auto* d = std::get_if<double>(&cell))
                out << fmt::format("{}", *d);
            else if (const auto* s = std::get_if<std::string>(&cell))
                out << *s;
            out << ',';
        }
        const auto& t = ds.table->truth[i];
        if (t) out << (std::holds_alternative<double>(*t) ? fmt::format("{}", std::get<double>(*t))
                                                         : std::get<std::string>(*t));
        out << '\n';
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// Oracle-driven mock: reads the serialized exemplars back out of the prompt
// and answers with oracle::best_split (splits) or the exemplar majority/mean
// (leaves). Independent of the library's own built-in responders.

inline std::vector<std::string> lines_after(const std::string& text, const std::string& header) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string line;
    bool inside = false;
    while (std::getline(in, line)) {
        if (!inside) {
            inside = line.rfind(header, 0) == 0;
            continue;
        }
        if (line.rfind("## ", 0) == 0) break;
        if (line.find(" -> ") != std::string::npos) out.push_back(line);
    }
    return out;
}

/// "x0 is 1.5. x1 is Unknown. -> A" for numeric features only.
inline std::pair<std::vector<std::optional<double>>, std::string> parse_numeric_example(
    const std::string& line) {
    std::vector<std::optional<double>> values;
    const auto arrow = line.rfind(" -> ");
    const std::string lhs = line.substr(0, arrow);
    std::size_t pos = 0;
    while (pos < lhs.size()) {
        const auto is = lhs.find(" is ", pos);
        const auto dot = lhs.find(". ", is);
        const auto end = dot == std::string::npos ? lhs.size() - 1 : dot;
        const auto v = lhs.substr(is + 4, end - is - 4);
        if (v == "Unknown")
            values.push_back(std::nullopt);
        else
            values.push_back(std::stod(v));
        pos = end + 2;
    }
    return {values, line.substr(arrow + 4)};
}

inline std::shared_ptr<MockBackend> oracle_mock(bool regression) {
    MockRule split;
    split.kind = PromptKind::Split;
    split.responder = [regression](const ChatRequest& req) -> std::variant<ToolCall, TextReply> {
        std::vector<std::string> names;
        for (const auto& n : req.tool_schema["parameters"]["properties"]["feature"]["enum"])
            names.push_back(n.get<std::string>());
        std::vector<oracle::Column> cols(names.size());
        oracle::Labels labels;
        labels.regression = regression;
        for (const auto& line : lines_after(req.user_text(), "## Labeled examples at this node")) {
            auto [vals, target] = parse_numeric_example(line);
            for (std::size_t f = 0; f < names.size(); ++f) {
                if (vals[f])
                    cols[f].cells.push_back(*vals[f]);
                else
                    cols[f].cells.push_back(std::nullopt);
            }
            if (regression)
                labels.values.push_back(std::stod(target));
            else
                labels.classes.push_back(target);
        }
        std::vector<std::size_t> allowed(names.size());
        for (std::size_t f = 0; f < names.size(); ++f) allowed[f] = f;
        const auto best = oracle::best_split(cols, labels, allowed);
        nlohmann::json args;
        if (best)
            args = {{"feature", names[best->feature]}, {"operator", "<="}, {"threshold", best->threshold}};
        else
            args = {{"feature", names[0]}, {"operator", "<="}, {"threshold", 1e9}};
        args["reasoning"] = "oracle split";
        return ToolCall{"select_split", args};
    };
    MockRule leaf;
    leaf.kind = PromptKind::Leaf;
    leaf.responder = [regression](const ChatRequest& req) -> std::variant<ToolCall, TextReply> {
        std::map<std::string, int> votes;
        double sum = 0.0;
        int n = 0;
        for (const auto& line : lines_after(req.user_text(), "## Labeled examples")) {
            const auto target = line.substr(line.rfind(" -> ") + 4);
            ++votes[target];
            if (regression) sum += std::stod(target);
            ++n;
        }
        if (regression) return TextReply{std::to_string(n ? sum / n : 0.0)};
        std::string best;
        int top = -1;
        for (const auto& [c, k] : votes)
            if (k > top) {
                top = k;
                best = c;
            }
        return TextReply{best};
    };
    return std::make_shared<MockBackend>(std::vector<MockRule>{split, leaf});
}

}  // namespace testutil
