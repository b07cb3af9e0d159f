#pragma once

#include "sevagent/schema.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sevagent {

/// The severity-evaluation task every agent is given.
struct TaskSpec {
    std::string description;
    std::vector<SeverityLevel> scale;

    /// Throws Error(InvalidArgument) unless the scale has >= 2 levels with
    /// strictly increasing codes.
    void validate() const;
    int max_level() const { return scale.empty() ? 0 : scale.back().code; }
    int min_level() const { return scale.empty() ? 0 : scale.front().code; }
    /// "1 = label" lines.
    std::string scale_text() const;

    static TaskSpec default_for(Dataset dataset);
};

/// Text with {name} placeholders. Rendering fails on a placeholder that has
/// no value, so template typos surface immediately.
class PromptTemplate {
public:
    PromptTemplate() = default;
    explicit PromptTemplate(std::string text) : text_(std::move(text)) {}

    std::string render(const std::map<std::string, std::string>& values) const;
    std::vector<std::string> placeholders() const;
    const std::string& text() const { return text_; }

private:
    std::string text_;
};

/// Named templates. Built-in defaults can be overridden per name by files
/// `<name>.txt` in a template directory.
class PromptLibrary {
public:
    static const std::vector<std::string>& names();
    static PromptLibrary defaults();
    static PromptLibrary load(const std::filesystem::path& directory);

    const PromptTemplate& get(const std::string& name) const;
    void set(const std::string& name, std::string text);
    /// Writes every template to `<directory>/<name>.txt`.
    void save(const std::filesystem::path& directory) const;

private:
    std::map<std::string, PromptTemplate> templates_;
};

// Answer-format markers. Prompts ask for "<KEY>: <...>" lines; parsers take
// the last occurrence.
inline constexpr std::string_view kScoreKey = "SCORE";
inline constexpr std::string_view kSeverityKey = "SEVERITY";

/// Number after the last "<key>:" (case-sensitive key). With integer_only a
/// decimal such as "2.5" does not parse.
std::optional<double> parse_last_keyed_number(std::string_view text, std::string_view key, bool integer_only);

/// yes/no after the last "relevant:" (case-insensitive).
std::optional<bool> parse_relevance(std::string_view text);

/// Values of every "category:" line (case-insensitive key), in order.
std::vector<std::string> parse_category_lines(std::string_view text);

/// Model text with the last "<key>:" answer removed and whitespace trimmed.
std::string strip_answer(std::string_view text, std::string_view key);

/// Cuts to at most `budget` bytes on a UTF-8 boundary, marking the cut.
std::string truncate_utf8(std::string_view text, std::size_t budget);

struct RenderedVariable {
    std::string name;
    std::string annotation;
    std::string value;
    std::string value_description;
};

/// Record data as it appears in prompts, delimited by
/// `<incident id="...">` and `</incident>`. The block is the only prompt
/// text derived from the record itself.
std::string render_incident_block(std::string_view record_id, const std::vector<RenderedVariable>& variables,
                                  const std::optional<std::string>& narrative);

/// Every variable of the record plus its narrative.
std::vector<RenderedVariable> render_variables(const IncidentRecord& record, const DatasetSchema& schema,
                                               const std::vector<std::string>* only = nullptr);

}  // namespace sevagent
