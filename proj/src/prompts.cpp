#include "sevagent/prompts.hpp"
#include "sevagent/error.hpp"
#include "sevagent/io.hpp"

#include <cmath>
#include <algorithm>
#include <cctype>
#include <charconv>
#include <set>

namespace sevagent {

void TaskSpec::validate() const {
    if (scale.size() < 2) throw Error(ErrorCode::InvalidArgument, "severity scale needs at least two levels");
    for (std::size_t i = 1; i < scale.size(); ++i)
        if (scale[i].code <= scale[i - 1].code) throw Error(ErrorCode::InvalidArgument, "severity scale is not ordered");
}

std::string TaskSpec::scale_text() const {
    std::string out;
    for (const auto& level : scale) out += std::to_string(level.code) + " = " + level.label + "\n";
    if (!out.empty()) out.pop_back();
    return out;
}

TaskSpec TaskSpec::default_for(Dataset dataset) {
    TaskSpec task;
    task.description =
        "Estimate the severity level of a transportation crash incident (micromobility: e-bike, bicycle, scooter "
        "and similar small vehicles) from the information provided.";
    task.scale = severity_scale(dataset);
    return task;
}

// ---------------------------------------------------------------------------

namespace {

bool is_placeholder_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

// Calls on_text / on_placeholder for each piece of the template.
template <class Text, class Placeholder>
void scan_template(std::string_view text, Text on_text, Placeholder on_placeholder) {
    std::size_t i = 0;
    while (i < text.size()) {
        if (text[i] == '{') {
            std::size_t j = i + 1;
            while (j < text.size() && is_placeholder_char(text[j])) ++j;
            if (j < text.size() && text[j] == '}' && j > i + 1) {
                on_placeholder(text.substr(i + 1, j - i - 1));
                i = j + 1;
                continue;
            }
        }
        on_text(text[i]);
        ++i;
    }
}

}  // namespace

std::string PromptTemplate::render(const std::map<std::string, std::string>& values) const {
    std::string out;
    out.reserve(text_.size() + 256);
    scan_template(
        text_, [&](char c) { out.push_back(c); },
        [&](std::string_view name) {
            auto it = values.find(std::string(name));
            if (it == values.end())
                throw Error(ErrorCode::InvalidConfig, "prompt placeholder {" + std::string(name) + "} has no value");
            out += it->second;
        });
    return out;
}

std::vector<std::string> PromptTemplate::placeholders() const {
    std::vector<std::string> names;
    scan_template(text_, [](char) {}, [&](std::string_view name) {
        if (std::find(names.begin(), names.end(), name) == names.end()) names.emplace_back(name);
    });
    return names;
}

namespace {

const std::map<std::string, std::string>& default_texts() {
    static const std::map<std::string, std::string> texts = {
        {"feature_selection",
         R"(Task: {task}

You are the feature selection agent of a crash severity assessment team. Decide whether the variable below could help determine the severity level of an incident. Reject identifiers, bookkeeping fields and anything unrelated to the injury outcome, since irrelevant fields distract later agents.

Variable: {variable_name}
Description: {annotation}
Kind: {kind}
Values: {allowed_values}

Give a one-line reason, then a final line of the form "relevant: <yes|no>".
)"},
        {"organize_category",
         R"(Task: {task}

You are the conceptual category organizer. Assign the variable below to the conceptual category, or categories, whose evidence it belongs to.

Variable: {variable_name}
Description: {annotation}
Candidate categories: {candidate_categories}

Reply with one line per assigned category of the form "category: <name>", copying names from the candidate list exactly.
)"},
        {"link_task",
         R"(Task: {task}

You are the severity prediction task linker. Check whether the variable is pertinent to the conceptual category when judging incident severity.

Category: {category}
Variable: {variable_name}
Description: {annotation}

Reply with a final line of the form "relevant: <yes|no>".
)"},
        {"evaluate_system",
         R"(You are the severity evaluator for the conceptual category "{category}". You only receive information that belongs to this category and must judge the incident from that evidence alone.
)"},
        {"evaluate_user",
         R"(Task: {task}

Severity scale:
{scale}

Category: {category}
{exemplars}
{incident}

Assess how severe this incident is, judging only from the {category} evidence above. Explain briefly, then end with a final line of the form "SCORE: <integer {min_level}..{max_level}>".
)"},
        {"kshot",
         R"(Task: {task}

Severity scale:
{scale}

Solved examples:

{exemplars}

Now assess the next incident.

{incident}

Reply with a final line of the form "SEVERITY: <integer {min_level}..{max_level}>".
)"},
        {"cot",
         R"(Task: {task}

Severity scale:
{scale}

Solved examples:

{exemplars}

Now assess the next incident.

{incident}

Think step by step: list the evidence relevant to the injury outcome, reason about how serious the outcome is likely to be, and only then decide. End with a final line of the form "SEVERITY: <integer {min_level}..{max_level}>".
)"},
        {"exemplar",
         R"(<example>
{incident}
SEVERITY: {severity}
</example>
)"},
        {"reask_score",
         R"(Your previous reply did not end with a usable answer line. Reply again and finish with a line of the form "{key}: <integer {min_level}..{max_level}>".
)"},
        {"reask_relevance",
         R"(Your previous reply did not contain a usable answer line. Reply with a line of the form "relevant: <yes|no>".
)"},
        {"reask_category",
         R"(Your previous reply did not assign the variable "{variable_name}" to a usable category.
Candidate categories: {candidate_categories}
Reply with one line per assigned category of the form "category: <name>", copying names from the candidate list exactly.
)"},
    };
    return texts;
}

}  // namespace

const std::vector<std::string>& PromptLibrary::names() {
    static const std::vector<std::string> list = [] {
        std::vector<std::string> v;
        for (const auto& [name, text] : default_texts()) v.push_back(name);
        return v;
    }();
    return list;
}

PromptLibrary PromptLibrary::defaults() {
    PromptLibrary lib;
    for (const auto& [name, text] : default_texts()) lib.templates_.emplace(name, PromptTemplate(text));
    return lib;
}

PromptLibrary PromptLibrary::load(const std::filesystem::path& directory) {
    if (!std::filesystem::is_directory(directory))
        throw Error(ErrorCode::FileUnreadable, "template directory " + directory.string());
    auto lib = defaults();
    for (const auto& name : names()) {
        const auto path = directory / (name + ".txt");
        if (std::filesystem::exists(path)) lib.set(name, read_text_file(path));
    }
    return lib;
}

const PromptTemplate& PromptLibrary::get(const std::string& name) const {
    auto it = templates_.find(name);
    if (it == templates_.end()) throw Error(ErrorCode::InvalidConfig, "no prompt template '" + name + "'");
    return it->second;
}

void PromptLibrary::set(const std::string& name, std::string text) { templates_[name] = PromptTemplate(std::move(text)); }

void PromptLibrary::save(const std::filesystem::path& directory) const {
    for (const auto& [name, tmpl] : templates_) write_text_file(directory / (name + ".txt"), tmpl.text());
}

// ---------------------------------------------------------------------------

namespace {

std::size_t rfind_ci(std::string_view text, std::string_view needle, std::size_t before) {
    if (needle.size() > text.size()) return std::string_view::npos;
    std::size_t i = std::min(before, text.size() - needle.size() + 1);
    while (i-- > 0) {
        bool match = true;
        for (std::size_t k = 0; k < needle.size() && match; ++k)
            match = std::tolower(static_cast<unsigned char>(text[i + k])) == std::tolower(static_cast<unsigned char>(needle[k]));
        if (match) return i;
    }
    return std::string_view::npos;
}

std::string_view skip_blanks(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '*')) s.remove_prefix(1);
    return s;
}

}  // namespace

std::optional<double> parse_last_keyed_number(std::string_view text, std::string_view key, bool integer_only) {
    const std::string marker = std::string(key) + ":";
    std::size_t before = text.size() + 1;
    while (true) {
        const auto pos = text.rfind(marker, before == 0 ? 0 : before - 1);
        if (pos == std::string_view::npos || before == 0) return std::nullopt;
        auto rest = skip_blanks(text.substr(pos + marker.size()));
        double value = 0.0;
        auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), value);
        if (ec == std::errc{}) {
            const std::string_view number(rest.data(), static_cast<std::size_t>(ptr - rest.data()));
            const bool has_fraction = number.find_first_of(".eE") != std::string_view::npos;
            if (!(integer_only && has_fraction) && std::isfinite(value)) return value;
        }
        if (pos == 0) return std::nullopt;
        before = pos;
    }
}

std::optional<bool> parse_relevance(std::string_view text) {
    std::size_t before = text.size() + 1;
    while (true) {
        const auto pos = rfind_ci(text, "relevant:", before - 1);
        if (pos == std::string_view::npos) return std::nullopt;
        auto rest = to_lower(skip_blanks(text.substr(pos + 9)).substr(0, 4));
        if (rest.rfind("yes", 0) == 0) return true;
        if (rest.rfind("no", 0) == 0) return false;
        if (pos == 0) return std::nullopt;
        before = pos;
    }
}

std::vector<std::string> parse_category_lines(std::string_view text) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        auto line = skip_blanks(text.substr(start, end - start));
        if (line.size() >= 9 && to_lower(line.substr(0, 9)) == "category:") {
            auto value = trim(line.substr(9));
            while (!value.empty() && (value.back() == '.' || value.back() == '"' || value.back() == '*')) value.pop_back();
            while (!value.empty() && (value.front() == '"' || value.front() == '<')) value.erase(value.begin());
            if (!value.empty() && value.back() == '>') value.pop_back();
            value = trim(value);
            if (!value.empty()) out.push_back(value);
        }
        start = end + 1;
    }
    return out;
}

std::string strip_answer(std::string_view text, std::string_view key) {
    const std::string marker = std::string(key) + ":";
    const auto pos = text.rfind(marker);
    if (pos == std::string_view::npos) return trim(text);
    return trim(text.substr(0, pos));
}

std::string truncate_utf8(std::string_view text, std::size_t budget) {
    if (text.size() <= budget) return std::string(text);
    std::size_t cut = budget;
    while (cut > 0 && (static_cast<unsigned char>(text[cut]) & 0xC0) == 0x80) --cut;
    return trim(text.substr(0, cut)) + " [...]";
}

std::string render_incident_block(std::string_view record_id, const std::vector<RenderedVariable>& variables,
                                  const std::optional<std::string>& narrative) {
    std::string out = "<incident id=\"" + std::string(record_id) + "\">\n";
    for (const auto& v : variables) {
        out += "- " + v.name + ": " + v.value;
        if (!v.value_description.empty()) out += " (" + v.value_description + ")";
        out += "\n";
        if (!v.annotation.empty()) out += "  note: " + v.annotation + "\n";
    }
    if (narrative) out += "Narrative: " + (narrative->empty() ? std::string("(none)") : *narrative) + "\n";
    out += "</incident>";
    return out;
}

std::vector<RenderedVariable> render_variables(const IncidentRecord& record, const DatasetSchema& schema,
                                               const std::vector<std::string>* only) {
    std::vector<RenderedVariable> out;
    for (const auto& spec : schema.variables) {
        if (spec.kind == VariableKind::Narrative) continue;
        if (only && std::find(only->begin(), only->end(), spec.name) == only->end()) continue;
        const auto& value = record.fields.at(spec.name);
        out.push_back({spec.name, spec.annotation, value, std::string(spec.describe(value))});
    }
    return out;
}

}  // namespace sevagent
