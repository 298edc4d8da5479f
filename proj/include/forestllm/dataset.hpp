#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace forestllm {

enum class FeatureKind { Numeric, Categorical };
enum class TaskKind { Classification, Regression };

std::string_view to_string(FeatureKind kind);
std::string_view to_string(TaskKind kind);
FeatureKind parse_feature_kind(std::string_view text);
TaskKind parse_task_kind(std::string_view text);

struct Feature {
    std::string name;
    FeatureKind kind = FeatureKind::Numeric;

    bool operator==(const Feature&) const = default;
};

struct Schema {
    std::vector<Feature> features;
    std::string target_name;
    TaskKind task = TaskKind::Classification;
    std::vector<std::string> classes;  // lexicographic, classification only
    std::string task_description;

    /// Throws Error(InvalidSchema) if names collide, the class set is empty or
    /// unsorted, or the target shadows a feature.
    void validate() const;

    std::optional<std::size_t> feature_index(std::string_view name) const;
    bool is_classification() const { return task == TaskKind::Classification; }
    bool has_class(std::string_view label) const;

    bool operator==(const Schema&) const = default;
};

struct Missing {
    bool operator==(const Missing&) const = default;
};

/// A cell is absent, a number, or a category. Categorical columns imputed for
/// prompting hold the literal "Unknown"; numeric columns keep Missing so that
/// routing can still tell the value is absent.
using Cell = std::variant<Missing, double, std::string>;
using Row = std::vector<Cell>;

/// Class label (classification) or value (regression).
using Target = std::variant<std::string, double>;

inline constexpr std::string_view kUnknown = "Unknown";

inline bool is_missing(const Cell& c) { return std::holds_alternative<Missing>(c); }

std::string target_to_string(const Target& t);

/// Sorted row positions. Bootstrapped node sets may repeat positions; the
/// labeled/unlabeled sets of a Dataset never do.
using IndexSet = std::vector<std::size_t>;

struct Table {
    std::vector<Row> rows;
    /// Target column as read. Rows whose target cell was empty hold nullopt.
    std::vector<std::optional<Target>> truth;
};

/// Immutable view over a shared table plus the labeled / unlabeled partition.
/// Rows outside both sets (e.g. held-out test rows) are simply not referenced.
struct Dataset {
    Schema schema;
    std::shared_ptr<const Table> table;
    IndexSet labeled;
    IndexSet unlabeled;
    std::map<std::size_t, Target> targets;  // defined exactly on `labeled`

    const Row& row(std::size_t i) const { return table->rows.at(i); }
    std::size_t row_count() const { return table ? table->rows.size() : 0; }
    const Target& target(std::size_t i) const { return targets.at(i); }

    /// labeled ∪ unlabeled, sorted.
    IndexSet active() const;

    /// Same table, every given row unlabeled, no targets bound.
    Dataset with_unlabeled(IndexSet rows) const;

    /// Keeps only the active rows whose target is known in the table.
    Dataset with_known_targets() const;
};

struct SchemaHint {
    std::optional<std::string> target;
    std::optional<TaskKind> task;
    std::vector<std::string> classes;
    std::optional<std::string> task_description;
    std::map<std::string, FeatureKind> feature_kinds;
};

/// Reads the JSON hint file; documented keys: target, task, classes,
/// task_description, features (object of column -> "numeric"|"categorical").
SchemaHint load_schema_hint(const std::filesystem::path& path);
SchemaHint parse_schema_hint(std::string_view json_text);

struct LoadOptions {
    std::optional<SchemaHint> hint;
    std::optional<std::string> target;  // overrides hint->target
    std::optional<TaskKind> task;       // overrides hint->task
};

/// All rows land in `unlabeled`; no targets are bound.
Dataset load_csv(const std::filesystem::path& path, const LoadOptions& options);
Dataset parse_csv_dataset(std::string_view text, const LoadOptions& options);

/// Parses a row of raw text fields (header order `columns`) against a schema.
/// Columns not named in the schema are ignored.
Row parse_row(const std::vector<std::string>& columns, const std::vector<std::string>& fields,
              const Schema& schema);

enum class ImputeMode { LlmFacing, Classical };

Dataset impute(const Dataset& ds, ImputeMode mode);

struct SplitSpec {
    double test_fraction = 0.2;
    std::uint64_t seed = 0;
    bool stratify = true;
};

/// Splits ds.active(). Both outputs share the table and hold their rows as
/// unlabeled.
std::pair<Dataset, Dataset> train_test_split(const Dataset& ds, const SplitSpec& spec);

/// Labels k rows of train.active(); the remaining rows form the unlabeled pool.
Dataset sample_k_shot(const Dataset& train, std::size_t k, std::uint64_t seed);

}  // namespace forestllm
