#pragma once

#include "sevagent/llm_gateway.hpp"
#include "sevagent/preprocessing.hpp"
#include "sevagent/prompts.hpp"
#include "sevagent/schema.hpp"

#include <atomic>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sevagent {

/// What one category evaluator is allowed to see of a record.
struct CategoryView {
    std::string record_id;
    std::string category_name;
    std::vector<RenderedVariable> variables;
    std::optional<std::string> narrative_excerpt;  // set when the category includes the narrative

    std::string render() const;
};

struct CategoryEvaluation {
    std::string category_name;
    double score = 0.0;
    std::string rationale;
    std::string raw_response;
    bool fallback = false;  // no parseable score, midpoint used
    bool clamped = false;
};

struct ScoreVector {
    std::string record_id;
    std::vector<double> scores;
    std::vector<std::string> category_order;

    friend bool operator==(const ScoreVector&, const ScoreVector&) = default;
};

struct AssessmentOptions {
    bool strict = false;
    std::size_t narrative_budget = 2000;  // bytes of narrative per category view
    std::size_t few_shot = 0;             // exemplars per category prompt
    bool allow_decimal_scores = false;
    std::uint64_t exemplar_seed = 0;
};

/// One view per category in assignment order. Refuses records that carry the
/// severity column among their fields (Error(LeakageGuard)).
std::vector<CategoryView> build_views(const IncidentRecord& record, const DatasetSchema& schema,
                                      const CategoryAssignment& assignment, std::size_t narrative_budget = 2000);

/// Up to k records, round-robin over severity levels in ascending order with
/// each level shuffled by `seed`. Only the given pool is consulted.
std::vector<IncidentRecord> stratified_exemplars(const std::vector<IncidentRecord>& pool, std::size_t k,
                                                 std::uint64_t seed);

class SeverityAssessmentTeam {
public:
    SeverityAssessmentTeam(Gateway& gateway, const PromptLibrary& prompts, TaskSpec task, DatasetSchema schema,
                           CategoryAssignment assignment, AssessmentOptions options = {});

    /// Training records that per-category exemplars may be drawn from.
    void set_exemplar_pool(std::vector<IncidentRecord> pool);

    CategoryEvaluation evaluate_category(const CategoryView& view);

    ScoreVector assess_incident(const IncidentRecord& record, std::vector<CategoryEvaluation>* evaluations = nullptr);

    /// Every (record, category) pair runs through the gateway concurrently;
    /// results are assembled in record then category order.
    std::vector<ScoreVector> assess_batch(const std::vector<IncidentRecord>& records,
                                          std::vector<std::vector<CategoryEvaluation>>* evaluations = nullptr);

    const CategoryAssignment& assignment() const { return assignment_; }
    std::uint64_t evaluator_calls() const { return evaluator_calls_.load(); }

private:
    std::string exemplar_text(const CategoryView& view) const;

    Gateway& gateway_;
    const PromptLibrary& prompts_;
    TaskSpec task_;
    DatasetSchema schema_;
    CategoryAssignment assignment_;
    AssessmentOptions options_;
    std::vector<IncidentRecord> exemplar_pool_;
    std::atomic<std::uint64_t> evaluator_calls_{0};
};

/// Tabular form of a ScoreVector batch: record_id, one column per category,
/// severity. This is the fusion training input.
struct ScoreTable {
    std::vector<std::string> category_order;
    std::vector<std::string> record_ids;
    std::vector<std::vector<double>> scores;
    std::vector<int> severities;

    static ScoreTable from_vectors(const std::vector<ScoreVector>& vectors, const std::vector<IncidentRecord>& records);

    std::size_t size() const { return record_ids.size(); }
    /// Rows for the given ids, in the order of `ids`. Throws
    /// Error(InvalidArgument) for an id that is not in the table.
    ScoreTable subset(const std::vector<std::string>& ids) const;
    /// Same rows without one category column. Throws Error(UnknownCategory).
    ScoreTable drop_category(std::string_view name) const;
    std::vector<ScoreVector> vectors() const;

    std::string to_csv() const;
    static ScoreTable from_csv(std::string_view text);
    void save(const std::filesystem::path& path) const;
    static ScoreTable load(const std::filesystem::path& path);

    friend bool operator==(const ScoreTable&, const ScoreTable&) = default;
};

/// JSONL, one line per (record, category) evaluation.
std::string rationale_log(const std::vector<ScoreVector>& vectors,
                          const std::vector<std::vector<CategoryEvaluation>>& evaluations);

/// Every `<incident id="...">` block in the request whose text mentions the
/// ground-truth severity of that record (its label, the severity column name
/// or a "severity: <code>" answer). Returns one message per finding.
std::vector<std::string> scan_for_label_leaks(const ChatRequest& request,
                                              const std::map<std::string, const IncidentRecord*>& records,
                                              const DatasetSchema& schema);

}  // namespace sevagent
