#pragma once

#include "sevagent/llm_gateway.hpp"
#include "sevagent/prompts.hpp"
#include "sevagent/schema.hpp"

#include <atomic>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace sevagent {

/// Candidate conceptual categories used when a run does not configure its own.
const std::vector<std::string>& default_categories();

struct RejectedVariable {
    std::string name;
    std::string reason;

    friend bool operator==(const RejectedVariable&, const RejectedVariable&) = default;
};

struct FeatureSelectionResult {
    std::vector<std::string> selected;
    std::vector<RejectedVariable> rejected;
    std::vector<VariableSpec> source_annotations;

    /// Specs of the selected variables, in annotation order.
    std::vector<VariableSpec> selected_specs() const;

    std::string to_json_text() const;
    static FeatureSelectionResult from_json_text(std::string_view text);
};

struct Category {
    std::string name;
    std::vector<std::string> variables;
    bool include_narrative = false;

    friend bool operator==(const Category&, const Category&) = default;
};

/// Ordered categories; the order fixes the score-vector dimensions.
struct CategoryAssignment {
    std::vector<Category> categories;

    std::size_t size() const { return categories.size(); }
    std::vector<std::string> names() const;
    const Category* find(std::string_view name) const;

    /// Unique non-empty names, every category holds variables or the
    /// narrative. Throws Error(EmptyAssignment) / Error(InvalidConfig).
    void validate() const;
    /// validate() plus: every selected variable appears in some category.
    void validate_covers(const FeatureSelectionResult& selection, const DatasetSchema& schema) const;

    std::string to_json_text() const;
    static CategoryAssignment from_json_text(std::string_view text);

    friend bool operator==(const CategoryAssignment&, const CategoryAssignment&) = default;
};

/// Feature Selection Agent, Conceptual Category Organizer and the Severity
/// Prediction Task Linker. All decisions go through constrained answer lines
/// with one re-ask before failing.
class DataProcessingTeam {
public:
    DataProcessingTeam(Gateway& gateway, const PromptLibrary& prompts, TaskSpec task);

    /// One decision per annotated variable; runs once per dataset.
    FeatureSelectionResult select_features(const std::vector<VariableSpec>& annotations);

    /// Asks the organizer for each selected variable, keeps the proposals the
    /// task linker confirms and builds categories in candidate order. A
    /// narrative variable turns on include_narrative instead of being listed.
    CategoryAssignment organize_categories(const FeatureSelectionResult& selection,
                                           const std::vector<std::string>& candidates);

    bool link_task_relevance(const std::string& category, const VariableSpec& variable);

    /// Every selected variable (narrative included) in a single category.
    static CategoryAssignment single_category(const FeatureSelectionResult& selection, std::string name = "all evidence");

    /// Bypass used by the no-feature-selection ablation: everything selected.
    static FeatureSelectionResult select_all(const std::vector<VariableSpec>& annotations);

private:
    bool decide(const std::vector<ChatMessage>& messages, const std::string& subject, std::string* reason);
    std::vector<std::string> propose_categories(const VariableSpec& variable, const std::vector<std::string>& candidates);

    Gateway& gateway_;
    const PromptLibrary& prompts_;
    TaskSpec task_;
};

}  // namespace sevagent
