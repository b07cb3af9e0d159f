#pragma once

#include "sevagent/fusion.hpp"
#include "sevagent/llm_gateway.hpp"
#include "sevagent/metrics.hpp"
#include "sevagent/prompts.hpp"
#include "sevagent/schema.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sevagent {

enum class BaselineKind { KShot, CoT, FeatureMlp, FeatureMlpSelected, Ologit, AutoGen };

/// kshot, cot, mlp, mlp_selected, ologit, autogen
std::string_view to_string(BaselineKind kind) noexcept;
BaselineKind parse_baseline_kind(std::string_view text);

/// Throws Error(UnsupportedBaseline) for kinds this library cannot run.
void require_supported(BaselineKind kind);

// --- prompt baselines -------------------------------------------------------

enum class PromptMode { KShot, CoT };

struct PromptBaselineConfig {
    PromptMode mode = PromptMode::KShot;
    std::size_t shots = 10;
    std::uint64_t exemplar_seed = 0;
    bool strict = false;
    std::size_t narrative_budget = 2000;
};

/// Direct severity prediction by one prompt per record. Exemplars come from
/// the training records handed to the constructor and are fixed afterwards.
class PromptBaseline {
public:
    PromptBaseline(Gateway& gateway, const PromptLibrary& prompts, TaskSpec task, DatasetSchema schema,
                   const std::vector<IncidentRecord>& train, PromptBaselineConfig config);

    const std::vector<std::string>& exemplar_ids() const { return exemplar_ids_; }

    /// Throws Error(LeakageGuard) for a record that is one of the exemplars.
    std::vector<ChatMessage> build_prompt(const IncidentRecord& record) const;

    /// Parses the last "SEVERITY:" line, re-asking once. Lenient mode falls
    /// back to the lower middle level; strict mode throws
    /// Error(UnparseableScore).
    int predict(const IncidentRecord& record);
    std::vector<int> predict_all(const std::vector<IncidentRecord>& records);

private:
    Gateway& gateway_;
    const PromptLibrary& prompts_;
    TaskSpec task_;
    DatasetSchema schema_;
    PromptBaselineConfig config_;
    std::vector<std::string> exemplar_ids_;
    std::string exemplar_text_;
};

// --- feature encoding ------------------------------------------------------

struct EncodedColumn {
    enum class Type { Ordinal, Indicator, Numeric };

    std::string name;      // "Age" or "Gender=2"
    std::string variable;
    Type type = Type::Ordinal;
    std::string level;     // indicator level
    double center = 0.0;   // numeric mean; ordinal fill value for unknowns
    double scale = 1.0;    // numeric standard deviation
};

/// Train-fitted design-matrix encoder. Nominal variables become indicators
/// for every level seen in training except the first (the reference);
/// ordinal variables their 1-based code, with unknowns filled by the training
/// mean; numeric variables are standardized with training mean and standard
/// deviation, unknowns mapping to 0. Columns constant on the training set
/// are dropped with a warning. Narratives are never encoded.
class FeatureEncoder {
public:
    static FeatureEncoder fit(const std::vector<IncidentRecord>& train, const DatasetSchema& schema,
                              const std::vector<std::string>* variables = nullptr);

    std::vector<double> transform(const IncidentRecord& record) const;
    std::vector<std::vector<double>> transform(const std::vector<IncidentRecord>& records) const;

    const std::vector<EncodedColumn>& columns() const { return columns_; }
    std::vector<std::string> column_names() const;
    /// Variables that contribute at least one column.
    std::vector<std::string> variables_used() const;

private:
    DatasetSchema schema_;
    std::vector<EncodedColumn> columns_;
};

struct EncodedData {
    std::vector<std::vector<double>> inputs;
    std::vector<int> labels;
    std::vector<std::string> columns;
};

EncodedData encode_features(const std::vector<IncidentRecord>& records, const FeatureEncoder& encoder);

/// Fusion trainer on encoded features; `variables` restricts the encoder to
/// a variable subset (the feature-selected variant).
EvalReport feature_mlp(const std::vector<IncidentRecord>& train, const std::vector<IncidentRecord>& test,
                       const DatasetSchema& schema, const std::vector<std::string>* variables,
                       const TrainConfig& config, std::string method);

// --- ordered logit ------------------------------------------------------------

/// P(y <= j | x) = logistic(thresholds[j-1] - x . beta), j = 1..C-1.
struct OlogitModel {
    std::vector<double> beta;
    std::vector<double> thresholds;

    int num_classes() const { return static_cast<int>(thresholds.size()) + 1; }
};

struct OlogitOptions {
    double tol = 1e-9;         // on the Euclidean norm of the mean log-likelihood gradient
    int max_iter = 20000;
    double separation_bound = 50.0;
};

struct OlogitFit {
    OlogitModel model;
    int iterations = 0;
    bool converged = false;
    bool separation = false;
    double log_likelihood = 0.0;               // summed over samples
    std::vector<double> log_likelihood_history;  // accepted iterates, starting point first
};

/// Free parameters: beta, then thresholds[0], then log(thresholds[m] - thresholds[m-1]).
std::vector<double> ologit_pack(const OlogitModel& model);
OlogitModel ologit_unpack(std::span<const double> parameters, std::size_t num_features, int num_classes);

double ologit_log_likelihood(const OlogitModel& model, std::span<const std::vector<double>> inputs,
                             std::span<const int> labels);
/// Gradient of the summed log-likelihood in ologit_pack() layout.
std::vector<double> ologit_gradient(const OlogitModel& model, std::span<const std::vector<double>> inputs,
                                    std::span<const int> labels);

/// Maximum likelihood by gradient ascent with a Barzilai-Borwein trial step
/// and Armijo backtracking. Parameters running past separation_bound stop the
/// fit with a warning and `separation` set. Throws Error(NotConverged) when
/// max_iter runs out, Error(InvalidArgument) with fewer than two classes.
OlogitFit ologit_fit(std::span<const std::vector<double>> inputs, std::span<const int> labels, int num_classes,
                     const OlogitOptions& options = {});

std::vector<double> ologit_probabilities(const OlogitModel& model, std::span<const double> x);
/// Most probable class; ties go to the lower class.
int ologit_predict(const OlogitModel& model, std::span<const double> x);

EvalReport ologit_baseline(const std::vector<IncidentRecord>& train, const std::vector<IncidentRecord>& test,
                           const DatasetSchema& schema, const OlogitOptions& options, std::string method);

}  // namespace sevagent
