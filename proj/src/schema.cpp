#include "sevagent/schema.hpp"
#include "sevagent/error.hpp"
#include "sevagent/io.hpp"
#include "sevagent/random.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>
#include <sstream>
#include <unordered_map>

namespace sevagent {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

const std::array<std::string_view, kNumSeverityLevels> kCpsrmsLabels = {
    "Incident, No Injury", "Non-admission Medical Care", "Hospital Admission", "Death"};
const std::array<std::string_view, kNumSeverityLevels> kNeissLabels = {"Mild", "Moderate", "Severe", "Fatal"};

const std::array<std::string_view, kNumSeverityLevels>& labels_for(Dataset dataset) {
    return dataset == Dataset::CPSRMS ? kCpsrmsLabels : kNeissLabels;
}

bool is_missing(std::string_view raw) {
    const auto t = to_lower(trim(raw));
    return t.empty() || t == kUnknown || t == "na" || t == "n/a";
}

bool parses_as_number(std::string_view text) {
    double value = 0.0;
    const auto* first = text.data();
    const auto* last = text.data() + text.size();
    if (first != last && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, value);
    return ec == std::errc{} && ptr == last && std::isfinite(value);
}

void check_value(const VariableSpec& spec, const std::string& value, const std::string& where) {
    if (value == kUnknown) return;
    if (spec.is_categorical() && !spec.allows(value))
        throw Error(ErrorCode::ValueOutOfDomain, where + " column '" + spec.name + "' value '" + value + "'");
    if (spec.kind == VariableKind::Numeric && !parses_as_number(value))
        throw Error(ErrorCode::ValueOutOfDomain, where + " column '" + spec.name + "' non-numeric '" + value + "'");
}

}  // namespace

std::string_view to_string(Dataset dataset) noexcept { return dataset == Dataset::CPSRMS ? "CPSRMS" : "NEISS"; }

Dataset parse_dataset(std::string_view text) {
    const auto t = to_lower(trim(text));
    if (t == "cpsrms") return Dataset::CPSRMS;
    if (t == "neiss") return Dataset::NEISS;
    throw Error(ErrorCode::InvalidArgument, "unknown dataset tag '" + std::string(text) + "'");
}

std::vector<SeverityLevel> severity_scale(Dataset dataset) {
    std::vector<SeverityLevel> scale;
    const auto& labels = labels_for(dataset);
    for (int code = 1; code <= kNumSeverityLevels; ++code)
        scale.push_back({code, std::string(labels[static_cast<std::size_t>(code - 1)])});
    return scale;
}

SeverityLevel severity_level(Dataset dataset, int code) {
    if (code < 1 || code > kNumSeverityLevels)
        throw Error(ErrorCode::OutOfRange, "severity code " + std::to_string(code));
    return {code, std::string(labels_for(dataset)[static_cast<std::size_t>(code - 1)])};
}

int parse_severity(Dataset dataset, std::string_view text) {
    const auto t = trim(text);
    if (t.size() == 1 && t[0] >= '1' && t[0] < '1' + kNumSeverityLevels) return t[0] - '0';
    const auto lower = to_lower(t);
    const auto& labels = labels_for(dataset);
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (lower == to_lower(labels[i])) return static_cast<int>(i) + 1;
    throw Error(ErrorCode::ValueOutOfDomain, "severity '" + std::string(text) + "' for " + std::string(to_string(dataset)));
}

std::string_view to_string(VariableKind kind) noexcept {
    switch (kind) {
        case VariableKind::Ordinal: return "ordinal";
        case VariableKind::Nominal: return "nominal";
        case VariableKind::Numeric: return "numeric";
        case VariableKind::Narrative: return "narrative";
    }
    return "nominal";
}

VariableKind parse_variable_kind(std::string_view text) {
    const auto t = to_lower(trim(text));
    if (t == "ordinal") return VariableKind::Ordinal;
    if (t == "nominal") return VariableKind::Nominal;
    if (t == "numeric") return VariableKind::Numeric;
    if (t == "narrative") return VariableKind::Narrative;
    throw Error(ErrorCode::InvalidSchema, "unknown variable kind '" + std::string(text) + "'");
}

bool VariableSpec::allows(std::string_view value) const { return value_index(value).has_value(); }

std::optional<std::size_t> VariableSpec::value_index(std::string_view value) const {
    for (std::size_t i = 0; i < allowed_values.size(); ++i)
        if (allowed_values[i].value == value) return i;
    return std::nullopt;
}

std::string_view VariableSpec::describe(std::string_view value) const {
    if (auto idx = value_index(value)) return allowed_values[*idx].description;
    return {};
}

const VariableSpec* DatasetSchema::find(std::string_view name) const {
    for (const auto& v : variables)
        if (v.name == name) return &v;
    return nullptr;
}

const VariableSpec* DatasetSchema::narrative() const {
    for (const auto& v : variables)
        if (v.kind == VariableKind::Narrative) return &v;
    return nullptr;
}

std::vector<std::string> DatasetSchema::expected_columns() const {
    std::vector<std::string> columns{id_column};
    for (const auto& v : variables)
        if (v.name != id_column) columns.push_back(v.name);
    columns.push_back(severity_column);
    return columns;
}

void DatasetSchema::validate() const {
    if (id_column.empty()) throw Error(ErrorCode::InvalidSchema, "id_column is empty");
    if (severity_column.empty()) throw Error(ErrorCode::InvalidSchema, "severity_column is empty");
    if (id_column == severity_column) throw Error(ErrorCode::InvalidSchema, "id and severity columns coincide");
    std::set<std::string> names;
    int narratives = 0;
    for (const auto& v : variables) {
        if (v.name.empty()) throw Error(ErrorCode::InvalidSchema, "variable with empty name");
        if (!names.insert(v.name).second) throw Error(ErrorCode::InvalidSchema, "duplicate variable '" + v.name + "'");
        if (v.name == severity_column)
            throw Error(ErrorCode::InvalidSchema, "severity column '" + v.name + "' listed as a feature");
        if (v.is_categorical() && v.allowed_values.empty())
            throw Error(ErrorCode::InvalidSchema, "categorical variable '" + v.name + "' has no allowed values");
        if (v.kind == VariableKind::Narrative) {
            if (!v.allowed_values.empty())
                throw Error(ErrorCode::InvalidSchema, "narrative variable '" + v.name + "' carries allowed values");
            if (v.name == id_column) throw Error(ErrorCode::InvalidSchema, "narrative cannot be the id column");
            ++narratives;
        }
        std::set<std::string> values;
        for (const auto& a : v.allowed_values) {
            if (!values.insert(a.value).second)
                throw Error(ErrorCode::InvalidSchema, "duplicate value '" + a.value + "' in '" + v.name + "'");
            if (to_lower(a.value) == kUnknown)
                throw Error(ErrorCode::InvalidSchema, "'unknown' is reserved in '" + v.name + "'");
        }
    }
    if (narratives > 1) throw Error(ErrorCode::InvalidSchema, "more than one narrative variable");
}

DatasetSchema DatasetSchema::from_json_text(std::string_view text) {
    DatasetSchema schema;
    try {
        const auto doc = json::parse(text);
        schema.dataset = parse_dataset(doc.at("dataset").get<std::string>());
        schema.id_column = doc.at("id_column").get<std::string>();
        schema.severity_column = doc.at("severity_column").get<std::string>();
        for (const auto& item : doc.at("variables")) {
            VariableSpec spec;
            spec.name = item.at("name").get<std::string>();
            spec.annotation = item.value("annotation", std::string{});
            spec.kind = parse_variable_kind(item.at("kind").get<std::string>());
            if (item.contains("allowed_values")) {
                for (const auto& a : item.at("allowed_values")) {
                    if (a.is_object())
                        spec.allowed_values.push_back(
                            {a.at("value").get<std::string>(), a.value("description", std::string{})});
                    else
                        spec.allowed_values.push_back({a.get<std::string>(), {}});
                }
            }
            schema.variables.push_back(std::move(spec));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidSchema, e.what());
    }
    schema.validate();
    return schema;
}

DatasetSchema DatasetSchema::load(const std::filesystem::path& path) { return from_json_text(read_text_file(path)); }

std::string DatasetSchema::to_json_text() const {
    ordered_json doc;
    doc["dataset"] = std::string(to_string(dataset));
    doc["id_column"] = id_column;
    doc["severity_column"] = severity_column;
    doc["variables"] = ordered_json::array();
    for (const auto& v : variables) {
        ordered_json item;
        item["name"] = v.name;
        item["kind"] = std::string(to_string(v.kind));
        item["annotation"] = v.annotation;
        if (!v.allowed_values.empty()) {
            item["allowed_values"] = ordered_json::array();
            for (const auto& a : v.allowed_values)
                item["allowed_values"].push_back({{"value", a.value}, {"description", a.description}});
        }
        doc["variables"].push_back(std::move(item));
    }
    return doc.dump(2) + "\n";
}

void validate_record(const DatasetSchema& schema, const IncidentRecord& record) {
    const auto where = "record '" + record.id + "'";
    if (record.fields.count(schema.severity_column))
        throw Error(ErrorCode::LeakageGuard, where + " exposes '" + schema.severity_column + "' as a feature");
    if (record.dataset != schema.dataset) throw Error(ErrorCode::SchemaMismatch, where + " dataset tag");
    if (record.severity < 1 || record.severity > kNumSeverityLevels)
        throw Error(ErrorCode::ValueOutOfDomain, where + " severity " + std::to_string(record.severity));
    std::size_t expected = 0;
    for (const auto& v : schema.variables) {
        if (v.kind == VariableKind::Narrative) continue;
        ++expected;
        auto it = record.fields.find(v.name);
        if (it == record.fields.end()) throw Error(ErrorCode::SchemaMismatch, where + " missing '" + v.name + "'");
        check_value(v, it->second, where);
    }
    if (record.fields.size() != expected) {
        for (const auto& [name, value] : record.fields)
            if (!schema.find(name)) throw Error(ErrorCode::SchemaMismatch, where + " unknown field '" + name + "'");
        throw Error(ErrorCode::SchemaMismatch, where + " narrative stored as a field");
    }
}

std::vector<IncidentRecord> parse_dataset_csv(std::string_view text, const DatasetSchema& schema) {
    schema.validate();
    const auto rows = parse_csv(text);
    if (rows.empty()) throw Error(ErrorCode::SchemaMismatch, "missing header row");

    std::unordered_map<std::string, std::size_t> column_of;
    for (std::size_t i = 0; i < rows[0].size(); ++i) {
        const auto name = trim(rows[0][i]);
        if (!column_of.emplace(name, i).second) throw Error(ErrorCode::SchemaMismatch, "duplicate column '" + name + "'");
    }
    const auto expected = schema.expected_columns();
    for (const auto& name : expected)
        if (!column_of.count(name)) throw Error(ErrorCode::SchemaMismatch, "missing column '" + name + "'");
    if (column_of.size() != expected.size()) {
        for (const auto& [name, idx] : column_of)
            if (std::find(expected.begin(), expected.end(), name) == expected.end())
                throw Error(ErrorCode::SchemaMismatch, "unexpected column '" + name + "'");
    }

    std::vector<IncidentRecord> records;
    std::set<std::string> seen_ids;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        const auto where = "row " + std::to_string(r + 1);
        if (row.size() != rows[0].size())
            throw Error(ErrorCode::SchemaMismatch, where + " has " + std::to_string(row.size()) + " cells");
        const auto cell = [&](const std::string& name) -> const std::string& { return row[column_of.at(name)]; };

        IncidentRecord rec;
        rec.dataset = schema.dataset;
        rec.id = trim(cell(schema.id_column));
        if (rec.id.empty()) throw Error(ErrorCode::SchemaMismatch, where + " empty id");
        if (!seen_ids.insert(rec.id).second) throw Error(ErrorCode::SchemaMismatch, where + " duplicate id '" + rec.id + "'");

        const auto& severity_raw = cell(schema.severity_column);
        if (is_missing(severity_raw)) throw Error(ErrorCode::MissingSeverity, where);
        try {
            rec.severity = parse_severity(schema.dataset, severity_raw);
        } catch (const Error&) {
            throw Error(ErrorCode::ValueOutOfDomain, where + " column '" + schema.severity_column + "' value '" +
                                                         severity_raw + "'");
        }

        for (const auto& v : schema.variables) {
            const auto& raw = cell(v.name);
            if (v.kind == VariableKind::Narrative) {
                rec.narrative = trim(raw);
                continue;
            }
            auto value = is_missing(raw) ? std::string(kUnknown) : trim(raw);
            check_value(v, value, where);
            rec.fields.emplace(v.name, std::move(value));
        }
        records.push_back(std::move(rec));
    }
    return records;
}

std::vector<IncidentRecord> load_dataset(const std::filesystem::path& path, const DatasetSchema& schema) {
    return parse_dataset_csv(read_text_file(path), schema);
}

std::string to_dataset_csv(const std::vector<IncidentRecord>& records, const DatasetSchema& schema) {
    const auto columns = schema.expected_columns();
    std::string out = csv_line(columns);
    for (const auto& rec : records) {
        CsvRow row;
        for (const auto& name : columns) {
            if (name == schema.id_column) row.push_back(rec.id);
            else if (name == schema.severity_column) row.push_back(std::to_string(rec.severity));
            else if (const auto* v = schema.find(name); v && v->kind == VariableKind::Narrative) row.push_back(rec.narrative);
            else row.push_back(rec.fields.at(name));
        }
        out += csv_line(row);
    }
    return out;
}

std::string serialize_snapshot(const std::vector<IncidentRecord>& records, const DatasetSchema& schema) {
    std::string out;
    for (const auto& rec : records) {
        ordered_json line;
        line["id"] = rec.id;
        line["dataset"] = std::string(to_string(rec.dataset));
        line["severity"] = rec.severity;
        ordered_json fields = ordered_json::object();
        for (const auto& v : schema.variables)
            if (v.kind != VariableKind::Narrative) fields[v.name] = rec.fields.at(v.name);
        line["fields"] = std::move(fields);
        line["narrative"] = rec.narrative;
        out += line.dump() + "\n";
    }
    return out;
}

std::vector<IncidentRecord> parse_snapshot(std::string_view text, const DatasetSchema& schema) {
    std::vector<IncidentRecord> records;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        IncidentRecord rec;
        try {
            const auto doc = json::parse(line);
            rec.id = doc.at("id").get<std::string>();
            rec.dataset = parse_dataset(doc.at("dataset").get<std::string>());
            rec.severity = doc.at("severity").get<int>();
            for (const auto& [name, value] : doc.at("fields").items()) rec.fields.emplace(name, value.get<std::string>());
            rec.narrative = doc.value("narrative", std::string{});
        } catch (const json::exception& e) {
            throw Error(ErrorCode::SchemaMismatch, "snapshot line " + std::to_string(line_no) + ": " + e.what());
        }
        validate_record(schema, rec);
        records.push_back(std::move(rec));
    }
    return records;
}

const VariableCounts* CountTable::find(std::string_view name) const {
    for (const auto& v : variables)
        if (v.name == name) return &v;
    return nullptr;
}

std::string CountTable::to_csv() const {
    std::string out = csv_line({"variable", "value", "count"});
    for (const auto& v : variables) {
        for (const auto& [value, count] : v.counts) out += csv_line({v.name, value, std::to_string(count)});
        if (v.unknown) out += csv_line({v.name, std::string(kUnknown), std::to_string(v.unknown)});
    }
    for (int level = 1; level <= kNumSeverityLevels; ++level)
        out += csv_line({"severity", std::to_string(level), std::to_string(severity[static_cast<std::size_t>(level - 1)])});
    out += csv_line({"total", "", std::to_string(total)});
    return out;
}

CountTable summarize(const std::vector<IncidentRecord>& records, const DatasetSchema& schema) {
    CountTable table;
    table.total = records.size();
    for (const auto& v : schema.variables) {
        if (!v.is_categorical()) continue;
        VariableCounts counts;
        counts.name = v.name;
        for (const auto& a : v.allowed_values) counts.counts.emplace_back(a.value, 0);
        for (const auto& rec : records) {
            const auto& value = rec.fields.at(v.name);
            if (auto idx = v.value_index(value)) ++counts.counts[*idx].second;
            else ++counts.unknown;
        }
        table.variables.push_back(std::move(counts));
    }
    for (const auto& rec : records) ++table.severity[static_cast<std::size_t>(rec.severity - 1)];
    return table;
}

DataSplit stratified_split(const std::vector<IncidentRecord>& records, SplitRatio ratio, std::uint64_t seed) {
    if (ratio.train < 1 || ratio.test < 1)
        throw Error(ErrorCode::InvalidArgument, "split ratio parts must be positive");

    std::array<std::vector<std::size_t>, kNumSeverityLevels> strata;
    for (std::size_t i = 0; i < records.size(); ++i) strata[static_cast<std::size_t>(records[i].severity - 1)].push_back(i);

    Rng rng(seed);
    std::vector<bool> in_test(records.size(), false);
    for (std::size_t level = 0; level < strata.size(); ++level) {
        auto& members = strata[level];
        if (members.empty()) continue;
        const auto n = members.size();
        if (n < 2) throw Error(ErrorCode::Unsplittable, "severity level " + std::to_string(level + 1) + " has 1 record");
        const double ideal = static_cast<double>(n) * ratio.test / static_cast<double>(ratio.train + ratio.test);
        auto n_test = static_cast<std::size_t>(std::llround(ideal));
        n_test = std::clamp<std::size_t>(n_test, 1, n - 1);
        rng.shuffle(members);
        for (std::size_t k = 0; k < n_test; ++k) in_test[members[k]] = true;
    }

    DataSplit split;
    split.seed = seed;
    split.ratio = ratio;
    for (std::size_t i = 0; i < records.size(); ++i) (in_test[i] ? split.test : split.train).push_back(records[i].id);
    return split;
}

std::vector<IncidentRecord> balance_subset(const std::vector<IncidentRecord>& records, std::size_t cap,
                                           std::uint64_t seed) {
    if (cap < 1) throw Error(ErrorCode::InvalidArgument, "cap must be at least 1");
    std::array<std::vector<std::size_t>, kNumSeverityLevels> strata;
    for (std::size_t i = 0; i < records.size(); ++i) strata[static_cast<std::size_t>(records[i].severity - 1)].push_back(i);

    Rng rng(seed);
    std::vector<bool> keep(records.size(), false);
    for (auto& members : strata) {
        if (members.size() > cap) {
            rng.shuffle(members);
            members.resize(cap);
        }
        for (auto idx : members) keep[idx] = true;
    }
    std::vector<IncidentRecord> out;
    for (std::size_t i = 0; i < records.size(); ++i)
        if (keep[i]) out.push_back(records[i]);
    return out;
}

std::vector<IncidentRecord> select_records(const std::vector<IncidentRecord>& records,
                                           const std::vector<std::string>& ids) {
    std::unordered_map<std::string, const IncidentRecord*> by_id;
    for (const auto& r : records) by_id.emplace(r.id, &r);
    std::vector<IncidentRecord> out;
    out.reserve(ids.size());
    for (const auto& id : ids) {
        auto it = by_id.find(id);
        if (it == by_id.end()) throw Error(ErrorCode::InvalidArgument, "unknown record id '" + id + "'");
        out.push_back(*it->second);
    }
    return out;
}

}  // namespace sevagent
