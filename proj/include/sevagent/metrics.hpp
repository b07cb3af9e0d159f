#pragma once

#include "sevagent/schema.hpp"

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sevagent {

using ConfusionMatrix = std::vector<std::vector<std::size_t>>;  // [true-1][predicted-1]

ConfusionMatrix confusion_matrix(std::span<const int> predictions, std::span<const int> labels, int num_classes);

/// Unweighted mean of per-class F1 = 2TP / (2TP + FP + FN) over classes that
/// occur in `labels`. A supported class never predicted correctly scores 0;
/// classes absent from `labels` are skipped.
double macro_f1(std::span<const int> predictions, std::span<const int> labels, int num_classes);

/// Count per level 1..C. Throws Error(OutOfRange) for values outside.
std::vector<std::size_t> severity_distribution(std::span<const int> values, int num_classes);

/// Pearson correlation of tie-averaged ranks. Needs >= 3 pairs; throws
/// Error(ZeroVariance) when either side is constant.
double spearman_rho(std::span<const double> x, std::span<const double> y);

/// Tie-averaged 1-based ranks.
std::vector<double> average_ranks(std::span<const double> values);

/// Bias-corrected Cramér's V (Bergsma 2013):
///   phi2~ = max(0, phi2 - (r-1)(k-1)/(n-1))
///   r~ = r - (r-1)^2/(n-1), k~ = k - (k-1)^2/(n-1)
///   V = sqrt(phi2~ / min(r~-1, k~-1)), clipped to [0, 1]
/// r and k count the levels that actually occur. Throws
/// Error(DegenerateTable) with fewer than 2 levels on a side or n < 2.
double cramers_v_corrected(std::span<const std::string> x, std::span<const std::string> y);

/// Same statistic from an r x k table of counts (empty rows/columns dropped).
double cramers_v_corrected(const std::vector<std::vector<double>>& table);

enum class AssociationKind { Spearman, CramersV };
std::string_view to_string(AssociationKind kind) noexcept;

struct AssociationCell {
    std::optional<double> value;  // empty when the statistic was undefined
    AssociationKind kind = AssociationKind::Spearman;
    std::size_t n = 0;            // pairs with both values known
    std::string error;
};

struct AssociationMatrix {
    std::vector<std::string> variables;
    std::vector<std::vector<AssociationCell>> entries;

    const AssociationCell& at(std::string_view a, std::string_view b) const;
    /// Long format: variable_a,variable_b,kind,value,n (value empty when missing).
    std::string to_csv() const;
};

/// Name used for the target when it is included in the matrix.
inline constexpr std::string_view kSeverityVariable = "Severity Level";

/// Ordinal and nominal variables (numeric and narrative are skipped), plus
/// the severity code as an ordinal when requested. Ordinal-ordinal pairs use
/// Spearman on the allowed-value order; any nominal member uses corrected
/// Cramér's V. Unknown values are dropped pairwise; the diagonal is 1.
AssociationMatrix association_matrix(const std::vector<IncidentRecord>& records, const DatasetSchema& schema,
                                     bool include_severity);

struct EvalReport {
    std::string method;
    Dataset dataset = Dataset::CPSRMS;
    bool available = true;  // false for methods that could not run (reported as n/a)
    std::string note;
    double accuracy = 0.0;
    double macro_f1 = 0.0;
    ConfusionMatrix confusion;
    std::vector<std::size_t> true_distribution;
    std::vector<std::size_t> predicted_distribution;
    std::size_t n_samples = 0;

    static EvalReport from_predictions(std::string method, Dataset dataset, std::span<const int> predictions,
                                       std::span<const int> labels, int num_classes);
    static EvalReport unavailable(std::string method, Dataset dataset, std::string note);

    /// Checks confusion/distribution sums and accuracy == trace / n.
    void validate() const;

    std::string to_json_text() const;
    static EvalReport from_json_text(std::string_view text);

    friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

}  // namespace sevagent
