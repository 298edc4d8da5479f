#include "forestllm/dataset.hpp"

#include "forestllm/csv.hpp"
#include "forestllm/error.hpp"
#include "forestllm/rng.hpp"
#include "forestllm/text.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <set>
#include <unordered_map>

#include <json.hpp>

namespace forestllm {

std::string_view to_string(FeatureKind kind) {
    return kind == FeatureKind::Numeric ? "numeric" : "categorical";
}

std::string_view to_string(TaskKind kind) {
    return kind == TaskKind::Classification ? "classification" : "regression";
}

FeatureKind parse_feature_kind(std::string_view text) {
    const auto t = text::to_lower(text);
    if (t == "numeric") return FeatureKind::Numeric;
    if (t == "categorical") return FeatureKind::Categorical;
    throw Error(ErrorCode::InvalidSchema, "unknown feature kind '" + std::string(text) + "'");
}

TaskKind parse_task_kind(std::string_view text) {
    const auto t = text::to_lower(text);
    if (t == "classification") return TaskKind::Classification;
    if (t == "regression") return TaskKind::Regression;
    throw Error(ErrorCode::InvalidSchema, "unknown task '" + std::string(text) + "'");
}

std::string target_to_string(const Target& t) {
    if (const auto* s = std::get_if<std::string>(&t)) return *s;
    return text::format_shortest(std::get<double>(t));
}

void Schema::validate() const {
    if (features.empty()) throw Error(ErrorCode::InvalidSchema, "schema has no features");
    std::set<std::string_view> seen;
    for (const auto& f : features) {
        if (f.name.empty()) throw Error(ErrorCode::InvalidSchema, "empty feature name");
        if (!seen.insert(f.name).second)
            throw Error(ErrorCode::InvalidSchema, "duplicate feature name '" + f.name + "'");
    }
    if (target_name.empty()) throw Error(ErrorCode::InvalidSchema, "empty target name");
    if (seen.contains(target_name))
        throw Error(ErrorCode::InvalidSchema, "target '" + target_name + "' is also a feature");
    if (task == TaskKind::Classification) {
        if (classes.empty()) throw Error(ErrorCode::InvalidSchema, "empty class set");
        for (std::size_t i = 1; i < classes.size(); ++i) {
            if (!(classes[i - 1] < classes[i]))
                throw Error(ErrorCode::InvalidSchema, "class set must be unique and sorted");
        }
    } else if (!classes.empty()) {
        throw Error(ErrorCode::InvalidSchema, "regression schema carries classes");
    }
}

std::optional<std::size_t> Schema::feature_index(std::string_view name) const {
    for (std::size_t i = 0; i < features.size(); ++i)
        if (features[i].name == name) return i;
    return std::nullopt;
}

bool Schema::has_class(std::string_view label) const {
    return std::binary_search(classes.begin(), classes.end(), label);
}

IndexSet Dataset::active() const {
    IndexSet all;
    all.reserve(labeled.size() + unlabeled.size());
    std::merge(labeled.begin(), labeled.end(), unlabeled.begin(), unlabeled.end(),
               std::back_inserter(all));
    return all;
}

Dataset Dataset::with_unlabeled(IndexSet rows) const {
    std::sort(rows.begin(), rows.end());
    Dataset out;
    out.schema = schema;
    out.table = table;
    out.unlabeled = std::move(rows);
    return out;
}

Dataset Dataset::with_known_targets() const {
    IndexSet keep;
    for (auto i : active())
        if (table->truth.at(i)) keep.push_back(i);
    return with_unlabeled(std::move(keep));
}

// ---------------------------------------------------------------------------
// Schema hints and CSV loading

SchemaHint parse_schema_hint(std::string_view json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidSchema, std::string("schema hint is not JSON: ") + e.what());
    }
    if (!j.is_object()) throw Error(ErrorCode::InvalidSchema, "schema hint must be an object");
    SchemaHint hint;
    try {
        if (j.contains("target")) hint.target = j.at("target").get<std::string>();
        if (j.contains("task")) hint.task = parse_task_kind(j.at("task").get<std::string>());
        if (j.contains("classes")) hint.classes = j.at("classes").get<std::vector<std::string>>();
        if (j.contains("task_description"))
            hint.task_description = j.at("task_description").get<std::string>();
        if (j.contains("features")) {
            for (const auto& [name, kind] : j.at("features").items())
                hint.feature_kinds[name] = parse_feature_kind(kind.get<std::string>());
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidSchema, std::string("bad schema hint: ") + e.what());
    }
    return hint;
}

SchemaHint load_schema_hint(const std::filesystem::path& path) {
    return parse_schema_hint(text::read_file(path.string()));
}

namespace {

std::optional<double> parse_finite(std::string_view s) {
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    if (s.empty()) return std::nullopt;
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

Cell parse_cell(const std::string& raw, const Feature& feature) {
    auto v = text::trim(raw);
    if (v.empty()) return Missing{};
    if (feature.kind == FeatureKind::Categorical) return v;
    auto d = parse_finite(v);
    if (!d)
        throw Error(ErrorCode::NumericParseFailure,
                    "column '" + feature.name + "' value '" + v + "' is not a finite number");
    return *d;
}

}  // namespace

Row parse_row(const std::vector<std::string>& columns, const std::vector<std::string>& fields,
              const Schema& schema) {
    if (fields.size() != columns.size())
        throw Error(ErrorCode::RaggedRow, "expected " + std::to_string(columns.size()) +
                                              " fields, got " + std::to_string(fields.size()));
    Row row(schema.features.size(), Missing{});
    std::vector<bool> seen(schema.features.size(), false);
    for (std::size_t c = 0; c < columns.size(); ++c) {
        auto idx = schema.feature_index(columns[c]);
        if (!idx) continue;
        row[*idx] = parse_cell(fields[c], schema.features[*idx]);
        seen[*idx] = true;
    }
    for (std::size_t f = 0; f < seen.size(); ++f)
        if (!seen[f])
            throw Error(ErrorCode::InvalidSchema,
                        "input lacks feature column '" + schema.features[f].name + "'");
    return row;
}

Dataset parse_csv_dataset(std::string_view csv_text, const LoadOptions& options) {
    auto records = csv::parse(csv_text);
    const auto& header = records.header;

    std::set<std::string_view> names;
    for (const auto& h : header) {
        if (h.empty()) throw Error(ErrorCode::MissingHeader, "empty header name");
        if (!names.insert(h).second)
            throw Error(ErrorCode::DuplicateHeader, "duplicate header '" + h + "'");
    }
    for (std::size_t r = 0; r < records.rows.size(); ++r) {
        if (records.rows[r].size() != header.size())
            throw Error(ErrorCode::RaggedRow, "data row " + std::to_string(r + 1) + " has " +
                                                  std::to_string(records.rows[r].size()) +
                                                  " fields, header has " +
                                                  std::to_string(header.size()));
    }

    const SchemaHint hint = options.hint.value_or(SchemaHint{});
    std::string target = options.target ? *options.target : hint.target.value_or("");
    if (target.empty()) throw Error(ErrorCode::TargetColumnAbsent, "no target column named");
    auto target_it = std::find(header.begin(), header.end(), target);
    if (target_it == header.end())
        throw Error(ErrorCode::TargetColumnAbsent, "target column '" + target + "' not in header");
    const auto target_col = static_cast<std::size_t>(target_it - header.begin());

    auto column_is_numeric = [&](std::size_t c) {
        for (const auto& row : records.rows) {
            auto v = text::trim(row[c]);
            if (!v.empty() && !parse_finite(v)) return false;
        }
        return true;
    };

    Schema schema;
    schema.target_name = target;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (c == target_col) continue;
        Feature f{header[c], FeatureKind::Numeric};
        if (auto it = hint.feature_kinds.find(header[c]); it != hint.feature_kinds.end())
            f.kind = it->second;
        else
            f.kind = column_is_numeric(c) ? FeatureKind::Numeric : FeatureKind::Categorical;
        schema.features.push_back(std::move(f));
    }
    if (options.task)
        schema.task = *options.task;
    else if (hint.task)
        schema.task = *hint.task;
    else
        schema.task = column_is_numeric(target_col) ? TaskKind::Regression
                                                    : TaskKind::Classification;
    schema.task_description = hint.task_description.value_or(
        schema.task == TaskKind::Classification
            ? "Predict the value of '" + target + "' for each record."
            : "Predict the numeric value of '" + target + "' for each record.");

    auto table = std::make_shared<Table>();
    table->rows.reserve(records.rows.size());
    table->truth.reserve(records.rows.size());
    std::set<std::string> observed_classes;
    for (const auto& fields : records.rows) {
        table->rows.push_back(parse_row(header, fields, schema));
        auto t = text::trim(fields[target_col]);
        if (t.empty()) {
            table->truth.emplace_back(std::nullopt);
        } else if (schema.task == TaskKind::Classification) {
            observed_classes.insert(t);
            table->truth.emplace_back(Target{t});
        } else {
            auto v = parse_finite(t);
            if (!v)
                throw Error(ErrorCode::NumericParseFailure,
                            "regression target '" + t + "' is not a finite number");
            table->truth.emplace_back(Target{*v});
        }
    }

    if (schema.task == TaskKind::Classification) {
        if (!hint.classes.empty()) {
            std::set<std::string> declared(hint.classes.begin(), hint.classes.end());
            for (const auto& c : observed_classes)
                if (!declared.contains(c))
                    throw Error(ErrorCode::InvalidSchema,
                                "target value '" + c + "' is not a declared class");
            schema.classes.assign(declared.begin(), declared.end());
        } else {
            schema.classes.assign(observed_classes.begin(), observed_classes.end());
        }
    }
    schema.validate();

    Dataset ds;
    ds.schema = std::move(schema);
    ds.unlabeled.resize(table->rows.size());
    std::iota(ds.unlabeled.begin(), ds.unlabeled.end(), std::size_t{0});
    ds.table = std::move(table);
    return ds;
}

Dataset load_csv(const std::filesystem::path& path, const LoadOptions& options) {
    return parse_csv_dataset(text::read_file(path.string()), options);
}

// ---------------------------------------------------------------------------
// Imputation

Dataset impute(const Dataset& ds, ImputeMode mode) {
    const auto& schema = ds.schema;
    std::vector<std::optional<double>> means(schema.features.size());
    if (mode == ImputeMode::Classical) {
        for (std::size_t f = 0; f < schema.features.size(); ++f) {
            if (schema.features[f].kind != FeatureKind::Numeric) continue;
            double sum = 0.0;
            std::size_t n = 0;
            bool any_missing = false;
            for (const auto& row : ds.table->rows) {
                if (const auto* v = std::get_if<double>(&row[f])) {
                    sum += *v;
                    ++n;
                } else {
                    any_missing = true;
                }
            }
            if (!any_missing) continue;
            if (n == 0)
                throw Error(ErrorCode::NoObservedValues,
                            "numeric column '" + schema.features[f].name + "' has no values");
            means[f] = sum / static_cast<double>(n);
        }
    }

    auto table = std::make_shared<Table>(*ds.table);
    for (auto& row : table->rows) {
        for (std::size_t f = 0; f < row.size(); ++f) {
            if (!is_missing(row[f])) continue;
            if (schema.features[f].kind == FeatureKind::Categorical)
                row[f] = std::string(kUnknown);
            else if (means[f])
                row[f] = *means[f];
            // LlmFacing numeric cells stay Missing; serialization renders them as "Unknown".
        }
    }
    Dataset out = ds;
    out.table = std::move(table);
    return out;
}

// ---------------------------------------------------------------------------
// Partitioning

namespace {

const Target& known_truth(const Dataset& ds, std::size_t i) {
    const auto& t = ds.table->truth.at(i);
    if (!t) throw Error(ErrorCode::InsufficientData, "row " + std::to_string(i) + " has no target");
    return *t;
}

/// Class label -> member rows, in row order.
std::map<std::string, IndexSet> group_by_class(const Dataset& ds, const IndexSet& rows) {
    std::map<std::string, IndexSet> groups;
    for (auto i : rows) groups[std::get<std::string>(known_truth(ds, i))].push_back(i);
    return groups;
}

}  // namespace

std::pair<Dataset, Dataset> train_test_split(const Dataset& ds, const SplitSpec& spec) {
    if (!(spec.test_fraction > 0.0 && spec.test_fraction < 1.0))
        throw Error(ErrorCode::InvalidConfig, "test_fraction must lie in (0,1)");
    const IndexSet rows = ds.active();
    for (auto i : rows) (void)known_truth(ds, i);
    const auto n = rows.size();
    const auto n_test = static_cast<std::size_t>(
        std::llround(spec.test_fraction * static_cast<double>(n)));

    Rng rng(derive_seed(spec.seed, 0x5b117));
    IndexSet test;

    if (spec.stratify && ds.schema.is_classification()) {
        auto groups = group_by_class(ds, rows);
        struct Quota {
            std::string label;
            std::size_t count;
            double remainder;
        };
        std::vector<Quota> quotas;
        std::size_t assigned = 0;
        for (const auto& [label, members] : groups) {
            if (members.size() < 2)
                throw Error(ErrorCode::StratifyInfeasible,
                            "class '" + label + "' has fewer than 2 rows");
            const double exact = spec.test_fraction * static_cast<double>(members.size());
            const auto base = static_cast<std::size_t>(std::floor(exact));
            quotas.push_back({label, base, exact - static_cast<double>(base)});
            assigned += base;
        }
        // Largest remainder; ties go to the lexicographically smaller class.
        std::vector<std::size_t> order(quotas.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return quotas[a].remainder > quotas[b].remainder;
        });
        for (std::size_t k = 0; assigned < n_test && k < order.size(); ++k, ++assigned)
            ++quotas[order[k]].count;

        for (const auto& q : quotas) {
            auto members = groups[q.label];
            rng.shuffle(std::span(members));
            test.insert(test.end(), members.begin(), members.begin() + static_cast<long>(q.count));
        }
    } else {
        IndexSet shuffled = rows;
        rng.shuffle(std::span(shuffled));
        test.assign(shuffled.begin(), shuffled.begin() + static_cast<long>(n_test));
    }

    std::sort(test.begin(), test.end());
    IndexSet train;
    std::set_difference(rows.begin(), rows.end(), test.begin(), test.end(),
                        std::back_inserter(train));
    return {ds.with_unlabeled(std::move(train)), ds.with_unlabeled(std::move(test))};
}

Dataset sample_k_shot(const Dataset& train, std::size_t k, std::uint64_t seed) {
    const IndexSet rows = train.active();
    if (k > rows.size())
        throw Error(ErrorCode::InsufficientData, "k=" + std::to_string(k) + " exceeds " +
                                                     std::to_string(rows.size()) + " rows");
    if (train.schema.is_classification() && k == 0)
        throw Error(ErrorCode::InsufficientData, "classification needs k >= 1");

    Rng rng(derive_seed(seed, 0x6b5407));
    IndexSet chosen;

    if (train.schema.is_classification()) {
        auto groups = group_by_class(train, rows);
        for (auto& [label, members] : groups) rng.shuffle(std::span(members));

        // Round-robin over classes by descending pool size (ties: label order).
        std::vector<std::pair<std::string, std::size_t>> order;  // label, pool size
        for (const auto& [label, members] : groups) order.emplace_back(label, members.size());
        std::stable_sort(order.begin(), order.end(),
                         [](const auto& a, const auto& b) { return a.second > b.second; });
        std::map<std::string, std::size_t> taken;
        std::size_t drawn = 0;
        while (drawn < k) {
            for (const auto& [label, pool] : order) {
                if (drawn == k) break;
                if (taken[label] < pool) {
                    ++taken[label];
                    ++drawn;
                }
            }
        }
        for (const auto& [label, count] : taken) {
            const auto& members = groups[label];
            chosen.insert(chosen.end(), members.begin(), members.begin() + static_cast<long>(count));
        }
    } else if (k > 0) {
        // Equal-frequency bins over the sorted targets, then one draw per bin in turn.
        IndexSet by_target = rows;
        std::stable_sort(by_target.begin(), by_target.end(), [&](std::size_t a, std::size_t b) {
            return std::get<double>(known_truth(train, a)) < std::get<double>(known_truth(train, b));
        });
        const std::size_t n = by_target.size();
        const std::size_t bins = std::min<std::size_t>(k, 10);
        std::vector<IndexSet> members(bins);
        for (std::size_t b = 0; b < bins; ++b) {
            members[b].assign(by_target.begin() + static_cast<long>(b * n / bins),
                              by_target.begin() + static_cast<long>((b + 1) * n / bins));
            rng.shuffle(std::span(members[b]));
        }
        std::vector<std::size_t> cursor(bins, 0);
        while (chosen.size() < k) {
            for (std::size_t b = 0; b < bins && chosen.size() < k; ++b) {
                if (cursor[b] < members[b].size()) chosen.push_back(members[b][cursor[b]++]);
            }
        }
    }

    std::sort(chosen.begin(), chosen.end());
    Dataset out;
    out.schema = train.schema;
    out.table = train.table;
    out.labeled = chosen;
    std::set_difference(rows.begin(), rows.end(), chosen.begin(), chosen.end(),
                        std::back_inserter(out.unlabeled));
    for (auto i : chosen) out.targets.emplace(i, known_truth(train, i));
    return out;
}

}  // namespace forestllm
