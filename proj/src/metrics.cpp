#include "sevagent/metrics.hpp"
#include "sevagent/error.hpp"
#include "sevagent/fusion.hpp"
#include "sevagent/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace sevagent {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

void check_pairs(std::span<const int> predictions, std::span<const int> labels) {
    if (predictions.size() != labels.size())
        throw Error(ErrorCode::LengthMismatch, std::to_string(predictions.size()) + " vs " + std::to_string(labels.size()));
    if (predictions.empty()) throw Error(ErrorCode::EmptyInput, "no predictions");
}

}  // namespace

ConfusionMatrix confusion_matrix(std::span<const int> predictions, std::span<const int> labels, int num_classes) {
    if (predictions.size() != labels.size())
        throw Error(ErrorCode::LengthMismatch, std::to_string(predictions.size()) + " vs " + std::to_string(labels.size()));
    const auto c = static_cast<std::size_t>(num_classes);
    ConfusionMatrix m(c, std::vector<std::size_t>(c, 0));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 1 || labels[i] > num_classes) throw Error(ErrorCode::OutOfRange, "label " + std::to_string(labels[i]));
        if (predictions[i] < 1 || predictions[i] > num_classes)
            throw Error(ErrorCode::OutOfRange, "prediction " + std::to_string(predictions[i]));
        ++m[static_cast<std::size_t>(labels[i] - 1)][static_cast<std::size_t>(predictions[i] - 1)];
    }
    return m;
}

double macro_f1(std::span<const int> predictions, std::span<const int> labels, int num_classes) {
    check_pairs(predictions, labels);
    const auto m = confusion_matrix(predictions, labels, num_classes);
    const auto c = static_cast<std::size_t>(num_classes);
    double sum = 0.0;
    std::size_t supported = 0;
    for (std::size_t k = 0; k < c; ++k) {
        std::size_t support = 0, predicted = 0;
        for (std::size_t j = 0; j < c; ++j) {
            support += m[k][j];
            predicted += m[j][k];
        }
        if (support == 0) continue;
        ++supported;
        const double tp = static_cast<double>(m[k][k]);
        const double fp = static_cast<double>(predicted) - tp;
        const double fn = static_cast<double>(support) - tp;
        sum += tp > 0.0 ? 2.0 * tp / (2.0 * tp + fp + fn) : 0.0;
    }
    return sum / static_cast<double>(supported);
}

std::vector<std::size_t> severity_distribution(std::span<const int> values, int num_classes) {
    std::vector<std::size_t> counts(static_cast<std::size_t>(num_classes), 0);
    for (int v : values) {
        if (v < 1 || v > num_classes) throw Error(ErrorCode::OutOfRange, "severity value " + std::to_string(v));
        ++counts[static_cast<std::size_t>(v - 1)];
    }
    return counts;
}

std::vector<double> average_ranks(std::span<const double> values) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(values.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
        const double rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
        i = j + 1;
    }
    return ranks;
}

double spearman_rho(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw Error(ErrorCode::LengthMismatch, std::to_string(x.size()) + " vs " + std::to_string(y.size()));
    if (x.size() < 3) throw Error(ErrorCode::EmptyInput, "spearman needs at least 3 pairs");
    const auto rx = average_ranks(x);
    const auto ry = average_ranks(y);
    const double n = static_cast<double>(rx.size());
    const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
    const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) throw Error(ErrorCode::ZeroVariance, "constant input to spearman");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double cramers_v_corrected(const std::vector<std::vector<double>>& raw) {
    // Drop empty rows and columns so r and k count observed levels only.
    std::vector<std::size_t> rows, cols;
    const std::size_t ncols = raw.empty() ? 0 : raw.front().size();
    for (std::size_t i = 0; i < raw.size(); ++i) {
        if (raw[i].size() != ncols) throw Error(ErrorCode::DegenerateTable, "ragged contingency table");
        if (std::accumulate(raw[i].begin(), raw[i].end(), 0.0) > 0.0) rows.push_back(i);
    }
    for (std::size_t j = 0; j < ncols; ++j) {
        double s = 0.0;
        for (const auto& r : raw) s += r[j];
        if (s > 0.0) cols.push_back(j);
    }
    const double r = static_cast<double>(rows.size());
    const double k = static_cast<double>(cols.size());
    if (rows.size() < 2 || cols.size() < 2) throw Error(ErrorCode::DegenerateTable, "fewer than two levels on a side");

    std::vector<double> row_sum(rows.size(), 0.0), col_sum(cols.size(), 0.0);
    double n = 0.0;
    for (std::size_t a = 0; a < rows.size(); ++a)
        for (std::size_t b = 0; b < cols.size(); ++b) {
            const double o = raw[rows[a]][cols[b]];
            row_sum[a] += o;
            col_sum[b] += o;
            n += o;
        }
    if (n < 2.0) throw Error(ErrorCode::DegenerateTable, "fewer than two observations");

    double chi2 = 0.0;
    for (std::size_t a = 0; a < rows.size(); ++a)
        for (std::size_t b = 0; b < cols.size(); ++b) {
            const double expected = row_sum[a] * col_sum[b] / n;
            const double diff = raw[rows[a]][cols[b]] - expected;
            chi2 += diff * diff / expected;
        }
    const double phi2 = chi2 / n;
    const double phi2_corr = std::max(0.0, phi2 - (r - 1.0) * (k - 1.0) / (n - 1.0));
    const double r_corr = r - (r - 1.0) * (r - 1.0) / (n - 1.0);
    const double k_corr = k - (k - 1.0) * (k - 1.0) / (n - 1.0);
    const double denom = std::min(r_corr - 1.0, k_corr - 1.0);
    if (!(denom > 0.0)) throw Error(ErrorCode::DegenerateTable, "corrected table dimension is not positive");
    return std::clamp(std::sqrt(phi2_corr / denom), 0.0, 1.0);
}

double cramers_v_corrected(std::span<const std::string> x, std::span<const std::string> y) {
    if (x.size() != y.size()) throw Error(ErrorCode::LengthMismatch, std::to_string(x.size()) + " vs " + std::to_string(y.size()));
    std::map<std::string, std::size_t> xi, yi;
    for (const auto& v : x) xi.emplace(v, 0);
    for (const auto& v : y) yi.emplace(v, 0);
    std::size_t idx = 0;
    for (auto& [v, i] : xi) i = idx++;
    idx = 0;
    for (auto& [v, i] : yi) i = idx++;
    std::vector<std::vector<double>> table(xi.size(), std::vector<double>(yi.size(), 0.0));
    for (std::size_t i = 0; i < x.size(); ++i) table[xi.at(x[i])][yi.at(y[i])] += 1.0;
    return cramers_v_corrected(table);
}

std::string_view to_string(AssociationKind kind) noexcept {
    return kind == AssociationKind::Spearman ? "spearman" : "cramers_v";
}

const AssociationCell& AssociationMatrix::at(std::string_view a, std::string_view b) const {
    const auto ia = std::find(variables.begin(), variables.end(), a);
    const auto ib = std::find(variables.begin(), variables.end(), b);
    if (ia == variables.end() || ib == variables.end())
        throw Error(ErrorCode::InvalidArgument, "variable not in association matrix");
    return entries[static_cast<std::size_t>(ia - variables.begin())][static_cast<std::size_t>(ib - variables.begin())];
}

std::string AssociationMatrix::to_csv() const {
    std::string out = csv_line({"variable_a", "variable_b", "kind", "value", "n"});
    for (std::size_t i = 0; i < variables.size(); ++i)
        for (std::size_t j = 0; j < variables.size(); ++j) {
            const auto& cell = entries[i][j];
            out += csv_line({variables[i], variables[j], std::string(to_string(cell.kind)),
                             cell.value ? format_fixed(*cell.value, 6) : std::string(), std::to_string(cell.n)});
        }
    return out;
}

AssociationMatrix association_matrix(const std::vector<IncidentRecord>& records, const DatasetSchema& schema,
                                     bool include_severity) {
    if (records.size() < 3) throw Error(ErrorCode::EmptyInput, "association matrix needs at least 3 records");

    struct Column {
        std::string name;
        bool ordinal;
        std::vector<std::optional<std::string>> labels;  // nominal view
        std::vector<double> ranks;                       // ordinal view
    };
    std::vector<Column> columns;
    for (const auto& spec : schema.variables) {
        if (!spec.is_categorical()) continue;
        Column col{spec.name, spec.kind == VariableKind::Ordinal, {}, {}};
        for (const auto& rec : records) {
            const auto& value = rec.fields.at(spec.name);
            const auto idx = spec.value_index(value);
            col.labels.push_back(idx ? std::optional<std::string>(value) : std::nullopt);
            col.ranks.push_back(idx ? static_cast<double>(*idx) : std::nan(""));
        }
        columns.push_back(std::move(col));
    }
    if (include_severity) {
        Column col{std::string(kSeverityVariable), true, {}, {}};
        for (const auto& rec : records) {
            col.labels.push_back(std::to_string(rec.severity));
            col.ranks.push_back(static_cast<double>(rec.severity));
        }
        columns.push_back(std::move(col));
    }

    AssociationMatrix matrix;
    for (const auto& c : columns) matrix.variables.push_back(c.name);
    const auto m = columns.size();
    matrix.entries.assign(m, std::vector<AssociationCell>(m));
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = i; j < m; ++j) {
            const auto& a = columns[i];
            const auto& b = columns[j];
            AssociationCell cell;
            cell.kind = a.ordinal && b.ordinal ? AssociationKind::Spearman : AssociationKind::CramersV;
            std::vector<double> xr, yr;
            std::vector<std::string> xl, yl;
            for (std::size_t r = 0; r < records.size(); ++r) {
                if (!a.labels[r] || !b.labels[r]) continue;
                xr.push_back(a.ranks[r]);
                yr.push_back(b.ranks[r]);
                xl.push_back(*a.labels[r]);
                yl.push_back(*b.labels[r]);
            }
            cell.n = xr.size();
            if (i == j) {
                cell.value = 1.0;
            } else {
                try {
                    cell.value = cell.kind == AssociationKind::Spearman ? spearman_rho(xr, yr) : cramers_v_corrected(xl, yl);
                } catch (const Error& e) {
                    cell.error = e.what();
                }
            }
            matrix.entries[i][j] = cell;
            matrix.entries[j][i] = cell;
        }
    }
    return matrix;
}

EvalReport EvalReport::from_predictions(std::string method, Dataset dataset, std::span<const int> predictions,
                                        std::span<const int> labels, int num_classes) {
    check_pairs(predictions, labels);
    EvalReport r;
    r.method = std::move(method);
    r.dataset = dataset;
    r.confusion = confusion_matrix(predictions, labels, num_classes);
    r.true_distribution = severity_distribution(labels, num_classes);
    r.predicted_distribution = severity_distribution(predictions, num_classes);
    r.n_samples = labels.size();
    std::size_t trace = 0;
    for (std::size_t k = 0; k < r.confusion.size(); ++k) trace += r.confusion[k][k];
    r.accuracy = static_cast<double>(trace) / static_cast<double>(r.n_samples);
    r.macro_f1 = sevagent::macro_f1(predictions, labels, num_classes);
    return r;
}

EvalReport EvalReport::unavailable(std::string method, Dataset dataset, std::string note) {
    EvalReport r;
    r.method = std::move(method);
    r.dataset = dataset;
    r.available = false;
    r.note = std::move(note);
    return r;
}

void EvalReport::validate() const {
    if (!available) return;
    std::size_t total = 0, trace = 0;
    for (std::size_t i = 0; i < confusion.size(); ++i) {
        if (confusion[i].size() != confusion.size()) throw Error(ErrorCode::DimensionMismatch, "confusion matrix not square");
        for (std::size_t j = 0; j < confusion[i].size(); ++j) total += confusion[i][j];
        trace += confusion[i][i];
    }
    const auto sum = [](const std::vector<std::size_t>& v) { return std::accumulate(v.begin(), v.end(), std::size_t{0}); };
    if (total != n_samples || sum(true_distribution) != n_samples || sum(predicted_distribution) != n_samples)
        throw Error(ErrorCode::LengthMismatch, "report counts do not sum to n_samples");
    if (n_samples && accuracy != static_cast<double>(trace) / static_cast<double>(n_samples))
        throw Error(ErrorCode::InvalidArgument, "accuracy differs from trace / n");
}

std::string EvalReport::to_json_text() const {
    ordered_json doc;
    doc["method"] = method;
    doc["dataset"] = std::string(to_string(dataset));
    doc["available"] = available;
    if (!note.empty()) doc["note"] = note;
    if (available) {
        doc["n_samples"] = n_samples;
        doc["accuracy"] = accuracy;
        doc["macro_f1"] = macro_f1;
        doc["confusion"] = confusion;
        doc["true_distribution"] = true_distribution;
        doc["predicted_distribution"] = predicted_distribution;
    }
    doc["macro_f1_convention"] = "mean over classes present in the labels; unpredicted supported classes count as 0";
    return doc.dump(2) + "\n";
}

EvalReport EvalReport::from_json_text(std::string_view text) {
    EvalReport r;
    try {
        const auto doc = json::parse(text);
        r.method = doc.at("method").get<std::string>();
        r.dataset = parse_dataset(doc.at("dataset").get<std::string>());
        r.available = doc.value("available", true);
        r.note = doc.value("note", std::string{});
        if (r.available) {
            r.n_samples = doc.at("n_samples").get<std::size_t>();
            r.accuracy = doc.at("accuracy").get<double>();
            r.macro_f1 = doc.at("macro_f1").get<double>();
            r.confusion = doc.at("confusion").get<ConfusionMatrix>();
            r.true_distribution = doc.at("true_distribution").get<std::vector<std::size_t>>();
            r.predicted_distribution = doc.at("predicted_distribution").get<std::vector<std::size_t>>();
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidConfig, std::string("eval report: ") + e.what());
    }
    r.validate();
    return r;
}

}  // namespace sevagent
