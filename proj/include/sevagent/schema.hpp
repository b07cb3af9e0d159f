#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sevagent {

/// Marker stored in place of a missing feature value.
inline constexpr std::string_view kUnknown = "unknown";

/// Severity scale size shared by both datasets.
inline constexpr int kNumSeverityLevels = 4;

enum class Dataset { CPSRMS, NEISS };

std::string_view to_string(Dataset dataset) noexcept;
Dataset parse_dataset(std::string_view text);

struct SeverityLevel {
    int code = 1;  // 1..4, ordering follows the code
    std::string label;

    friend bool operator==(const SeverityLevel&, const SeverityLevel&) = default;
    friend auto operator<=>(const SeverityLevel& a, const SeverityLevel& b) { return a.code <=> b.code; }
};

std::vector<SeverityLevel> severity_scale(Dataset dataset);
SeverityLevel severity_level(Dataset dataset, int code);

/// Accepts a numeric code ("3") or the dataset label, case-insensitively.
/// Throws Error(ValueOutOfDomain) for anything else.
int parse_severity(Dataset dataset, std::string_view text);

enum class VariableKind { Ordinal, Nominal, Numeric, Narrative };

std::string_view to_string(VariableKind kind) noexcept;
VariableKind parse_variable_kind(std::string_view text);

struct AllowedValue {
    std::string value;
    std::string description;
};

struct VariableSpec {
    std::string name;
    std::string annotation;
    VariableKind kind = VariableKind::Nominal;
    std::vector<AllowedValue> allowed_values;

    bool is_categorical() const { return kind == VariableKind::Ordinal || kind == VariableKind::Nominal; }
    bool allows(std::string_view value) const;
    /// Position of the value in allowed_values, if present.
    std::optional<std::size_t> value_index(std::string_view value) const;
    std::string_view describe(std::string_view value) const;
};

/// Annotated column layout of one dataset. The id and severity columns are
/// bookkeeping; only `variables` are features. A variable may share the id
/// column's name, in which case the raw id is also offered as a feature.
struct DatasetSchema {
    Dataset dataset = Dataset::CPSRMS;
    std::string id_column;
    std::string severity_column;
    std::vector<VariableSpec> variables;

    const VariableSpec* find(std::string_view name) const;
    const VariableSpec* narrative() const;
    /// Column names a data file must carry, in canonical order.
    std::vector<std::string> expected_columns() const;

    /// Throws Error(InvalidSchema) on duplicate names, categorical variables
    /// without allowed values, narrative with allowed values, more than one
    /// narrative, or a variable named like the severity column.
    void validate() const;

    static DatasetSchema from_json_text(std::string_view text);
    static DatasetSchema load(const std::filesystem::path& path);
    std::string to_json_text() const;
};

struct IncidentRecord {
    std::string id;
    Dataset dataset = Dataset::CPSRMS;
    std::map<std::string, std::string> fields;  // non-narrative variables only
    std::string narrative;
    int severity = 1;

    friend bool operator==(const IncidentRecord&, const IncidentRecord&) = default;
};

/// Throws Error(LeakageGuard) if the severity column appears among the
/// fields, Error(SchemaMismatch) for unknown or missing field names, and
/// Error(ValueOutOfDomain) for values outside the variable's domain.
void validate_record(const DatasetSchema& schema, const IncidentRecord& record);

std::vector<IncidentRecord> load_dataset(const std::filesystem::path& path, const DatasetSchema& schema);
std::vector<IncidentRecord> parse_dataset_csv(std::string_view text, const DatasetSchema& schema);

/// CSV text in the same layout load_dataset accepts.
std::string to_dataset_csv(const std::vector<IncidentRecord>& records, const DatasetSchema& schema);

/// One JSON object per line with schema-ordered keys; used as the canonical
/// snapshot for golden comparisons.
std::string serialize_snapshot(const std::vector<IncidentRecord>& records, const DatasetSchema& schema);
std::vector<IncidentRecord> parse_snapshot(std::string_view text, const DatasetSchema& schema);

struct VariableCounts {
    std::string name;
    std::vector<std::pair<std::string, std::size_t>> counts;  // allowed-value order
    std::size_t unknown = 0;
};

struct CountTable {
    std::size_t total = 0;
    std::array<std::size_t, kNumSeverityLevels> severity{};
    std::vector<VariableCounts> variables;  // categorical variables, schema order

    const VariableCounts* find(std::string_view name) const;
    std::string to_csv() const;
};

CountTable summarize(const std::vector<IncidentRecord>& records, const DatasetSchema& schema);

struct SplitRatio {
    int train = 3;
    int test = 1;
};

struct DataSplit {
    std::vector<std::string> train;
    std::vector<std::string> test;
    std::uint64_t seed = 0;
    SplitRatio ratio;

    friend bool operator==(const DataSplit& a, const DataSplit& b) {
        return a.train == b.train && a.test == b.test && a.seed == b.seed &&
               a.ratio.train == b.ratio.train && a.ratio.test == b.ratio.test;
    }
};

/// Per severity level, round(n * test / (train + test)) records go to test,
/// clamped so each side keeps at least one. Both id lists keep input order.
/// Throws Error(Unsplittable) when a present level has fewer than 2 records.
DataSplit stratified_split(const std::vector<IncidentRecord>& records, SplitRatio ratio, std::uint64_t seed);

/// Keeps at most `cap` records per severity level, sampled by seed; the
/// survivors keep their input order.
std::vector<IncidentRecord> balance_subset(const std::vector<IncidentRecord>& records, std::size_t cap,
                                           std::uint64_t seed);

/// Records whose ids are listed, in list order. Throws on unknown ids.
std::vector<IncidentRecord> select_records(const std::vector<IncidentRecord>& records,
                                           const std::vector<std::string>& ids);

}  // namespace sevagent
