#include "sevagent/preprocessing.hpp"
#include "sevagent/error.hpp"
#include "sevagent/io.hpp"
#include "sevagent/log.hpp"
#include "sevagent/parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <optional>
#include <set>

namespace sevagent {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

const std::vector<std::string>& default_categories() {
    static const std::vector<std::string> names = {
        "victim demographics", "transportation details", "incident description",
        "injury cause",        "environmental context",  "medical outcome",
    };
    return names;
}

std::vector<VariableSpec> FeatureSelectionResult::selected_specs() const {
    std::vector<VariableSpec> out;
    for (const auto& spec : source_annotations)
        if (std::find(selected.begin(), selected.end(), spec.name) != selected.end()) out.push_back(spec);
    return out;
}

std::string FeatureSelectionResult::to_json_text() const {
    ordered_json doc;
    doc["selected"] = selected;
    doc["rejected"] = ordered_json::array();
    for (const auto& r : rejected) doc["rejected"].push_back({{"name", r.name}, {"reason", r.reason}});
    doc["source_annotations"] = ordered_json::array();
    for (const auto& v : source_annotations) {
        ordered_json item{{"name", v.name}, {"kind", std::string(to_string(v.kind))}, {"annotation", v.annotation}};
        if (!v.allowed_values.empty()) {
            item["allowed_values"] = ordered_json::array();
            for (const auto& a : v.allowed_values)
                item["allowed_values"].push_back({{"value", a.value}, {"description", a.description}});
        }
        doc["source_annotations"].push_back(std::move(item));
    }
    return doc.dump(2) + "\n";
}

FeatureSelectionResult FeatureSelectionResult::from_json_text(std::string_view text) {
    FeatureSelectionResult result;
    try {
        const auto doc = json::parse(text);
        result.selected = doc.at("selected").get<std::vector<std::string>>();
        for (const auto& r : doc.at("rejected"))
            result.rejected.push_back({r.at("name").get<std::string>(), r.value("reason", std::string{})});
        for (const auto& item : doc.at("source_annotations")) {
            VariableSpec spec;
            spec.name = item.at("name").get<std::string>();
            spec.kind = parse_variable_kind(item.at("kind").get<std::string>());
            spec.annotation = item.value("annotation", std::string{});
            if (item.contains("allowed_values"))
                for (const auto& a : item.at("allowed_values"))
                    spec.allowed_values.push_back({a.at("value").get<std::string>(), a.value("description", std::string{})});
            result.source_annotations.push_back(std::move(spec));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidConfig, std::string("feature selection file: ") + e.what());
    }
    return result;
}

std::vector<std::string> CategoryAssignment::names() const {
    std::vector<std::string> out;
    for (const auto& c : categories) out.push_back(c.name);
    return out;
}

const Category* CategoryAssignment::find(std::string_view name) const {
    for (const auto& c : categories)
        if (c.name == name) return &c;
    return nullptr;
}

void CategoryAssignment::validate() const {
    if (categories.empty()) throw Error(ErrorCode::EmptyAssignment, "no categories");
    std::set<std::string> seen;
    for (const auto& c : categories) {
        if (c.name.empty()) throw Error(ErrorCode::InvalidConfig, "category with empty name");
        if (!seen.insert(c.name).second) throw Error(ErrorCode::InvalidConfig, "duplicate category '" + c.name + "'");
        if (c.variables.empty() && !c.include_narrative)
            throw Error(ErrorCode::EmptyAssignment, "category '" + c.name + "' is empty");
    }
}

void CategoryAssignment::validate_covers(const FeatureSelectionResult& selection, const DatasetSchema& schema) const {
    validate();
    for (const auto& name : selection.selected) {
        const auto* spec = schema.find(name);
        const bool narrative = spec && spec->kind == VariableKind::Narrative;
        const bool covered = std::any_of(categories.begin(), categories.end(), [&](const Category& c) {
            return narrative ? c.include_narrative : std::find(c.variables.begin(), c.variables.end(), name) != c.variables.end();
        });
        if (!covered) throw Error(ErrorCode::UnassignedVariable, name);
    }
    for (const auto& c : categories)
        for (const auto& v : c.variables) {
            const auto* spec = schema.find(v);
            if (!spec || spec->kind == VariableKind::Narrative)
                throw Error(ErrorCode::SchemaMismatch, "category '" + c.name + "' lists '" + v + "'");
        }
}

std::string CategoryAssignment::to_json_text() const {
    ordered_json doc;
    doc["categories"] = ordered_json::array();
    for (const auto& c : categories)
        doc["categories"].push_back({{"name", c.name}, {"variables", c.variables}, {"include_narrative", c.include_narrative}});
    return doc.dump(2) + "\n";
}

CategoryAssignment CategoryAssignment::from_json_text(std::string_view text) {
    CategoryAssignment a;
    try {
        const auto doc = json::parse(text);
        for (const auto& c : doc.at("categories"))
            a.categories.push_back({c.at("name").get<std::string>(), c.at("variables").get<std::vector<std::string>>(),
                                    c.value("include_narrative", false)});
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidConfig, std::string("category assignment file: ") + e.what());
    }
    a.validate();
    return a;
}

// ---------------------------------------------------------------------------

namespace {

std::string allowed_values_text(const VariableSpec& spec) {
    if (spec.allowed_values.empty()) return spec.kind == VariableKind::Narrative ? "free text" : "numeric";
    std::string out;
    for (const auto& a : spec.allowed_values) {
        if (!out.empty()) out += "; ";
        out += a.value;
        if (!a.description.empty()) out += " = " + a.description;
    }
    return out;
}

std::string join(const std::vector<std::string>& items, std::string_view sep) {
    std::string out;
    for (const auto& s : items) {
        if (!out.empty()) out += sep;
        out += s;
    }
    return out;
}

// First explanatory line of a reply, ignoring the answer line itself.
std::string reason_line(std::string_view reply) {
    std::size_t start = 0;
    while (start < reply.size()) {
        auto end = reply.find('\n', start);
        if (end == std::string_view::npos) end = reply.size();
        const auto line = trim(reply.substr(start, end - start));
        if (!line.empty() && to_lower(line).find("relevant:") == std::string::npos) return line;
        start = end + 1;
    }
    return {};
}

}  // namespace

DataProcessingTeam::DataProcessingTeam(Gateway& gateway, const PromptLibrary& prompts, TaskSpec task)
    : gateway_(gateway), prompts_(prompts), task_(std::move(task)) {
    task_.validate();
}

bool DataProcessingTeam::decide(const std::vector<ChatMessage>& messages, const std::string& subject, std::string* reason) {
    auto conversation = messages;
    for (int pass = 0; pass < 2; ++pass) {
        const auto reply = gateway_.complete(gateway_.make_request(conversation)).content;
        if (auto decision = parse_relevance(reply)) {
            if (reason) *reason = reason_line(reply);
            return *decision;
        }
        conversation.push_back({Role::Assistant, reply});
        conversation.push_back({Role::User, prompts_.get("reask_relevance").render({})});
    }
    throw Error(ErrorCode::UnparseableDecision, subject);
}

FeatureSelectionResult DataProcessingTeam::select_features(const std::vector<VariableSpec>& annotations) {
    if (annotations.empty()) throw Error(ErrorCode::EmptyInput, "no annotated variables");
    std::vector<char> keep(annotations.size(), 0);
    std::vector<std::string> reasons(annotations.size());

    parallel_for(annotations.size(), gateway_.config().max_in_flight, [&](std::size_t i) {
        const auto& spec = annotations[i];
        const auto prompt = prompts_.get("feature_selection").render({
            {"task", task_.description},
            {"variable_name", spec.name},
            {"annotation", spec.annotation},
            {"kind", std::string(to_string(spec.kind))},
            {"allowed_values", allowed_values_text(spec)},
        });
        keep[i] = decide({{Role::User, prompt}}, spec.name, &reasons[i]) ? 1 : 0;
    });

    FeatureSelectionResult result;
    result.source_annotations = annotations;
    for (std::size_t i = 0; i < annotations.size(); ++i) {
        if (keep[i]) result.selected.push_back(annotations[i].name);
        else result.rejected.push_back({annotations[i].name, reasons[i].empty() ? "judged irrelevant" : reasons[i]});
    }
    return result;
}

bool DataProcessingTeam::link_task_relevance(const std::string& category, const VariableSpec& variable) {
    const auto prompt = prompts_.get("link_task").render({
        {"task", task_.description},
        {"category", category},
        {"variable_name", variable.name},
        {"annotation", variable.annotation},
    });
    return decide({{Role::User, prompt}}, variable.name + " -> " + category, nullptr);
}

std::vector<std::string> DataProcessingTeam::propose_categories(const VariableSpec& variable,
                                                                const std::vector<std::string>& candidates) {
    const auto candidate_text = join(candidates, "; ");
    const auto canonical = [&](const std::string& proposed) -> std::optional<std::string> {
        const auto p = to_lower(trim(proposed));
        for (const auto& c : candidates)
            if (to_lower(c) == p) return c;
        return std::nullopt;
    };

    std::vector<ChatMessage> conversation{{Role::User, prompts_.get("organize_category").render({
                                                          {"task", task_.description},
                                                          {"variable_name", variable.name},
                                                          {"annotation", variable.annotation},
                                                          {"candidate_categories", candidate_text},
                                                      })}};
    for (int pass = 0; pass < 2; ++pass) {
        const auto reply = gateway_.complete(gateway_.make_request(conversation)).content;
        std::vector<std::string> accepted;
        for (const auto& proposed : parse_category_lines(reply)) {
            auto name = canonical(proposed);
            if (!name) {
                log_warn("organizer proposed unknown category '" + proposed + "' for '" + variable.name + "'");
                continue;
            }
            if (std::find(accepted.begin(), accepted.end(), *name) != accepted.end()) continue;
            if (link_task_relevance(*name, variable)) accepted.push_back(*name);
        }
        if (!accepted.empty()) return accepted;
        conversation.push_back({Role::Assistant, reply});
        conversation.push_back({Role::User, prompts_.get("reask_category").render({
                                                {"variable_name", variable.name},
                                                {"candidate_categories", candidate_text},
                                            })});
    }
    throw Error(ErrorCode::UnassignedVariable, variable.name);
}

CategoryAssignment DataProcessingTeam::organize_categories(const FeatureSelectionResult& selection,
                                                           const std::vector<std::string>& candidates) {
    if (selection.selected.empty()) throw Error(ErrorCode::EmptyAssignment, "no selected variables to organize");
    if (candidates.empty()) throw Error(ErrorCode::InvalidConfig, "no candidate categories");
    std::set<std::string> unique(candidates.begin(), candidates.end());
    if (unique.size() != candidates.size()) throw Error(ErrorCode::InvalidConfig, "duplicate candidate categories");

    const auto specs = selection.selected_specs();
    if (specs.size() != selection.selected.size())
        throw Error(ErrorCode::SchemaMismatch, "selected variable without annotation");

    std::vector<std::vector<std::string>> placed(specs.size());
    parallel_for(specs.size(), gateway_.config().max_in_flight, [&](std::size_t i) {
        placed[i] = candidates.size() == 1 ? candidates : propose_categories(specs[i], candidates);
    });

    CategoryAssignment assignment;
    for (const auto& name : candidates) {
        Category category{name, {}, false};
        for (std::size_t i = 0; i < specs.size(); ++i) {
            if (std::find(placed[i].begin(), placed[i].end(), name) == placed[i].end()) continue;
            if (specs[i].kind == VariableKind::Narrative) category.include_narrative = true;
            else category.variables.push_back(specs[i].name);
        }
        if (!category.variables.empty() || category.include_narrative) assignment.categories.push_back(std::move(category));
    }
    if (assignment.categories.empty()) throw Error(ErrorCode::EmptyAssignment, "organizer produced no categories");
    assignment.validate();
    return assignment;
}

CategoryAssignment DataProcessingTeam::single_category(const FeatureSelectionResult& selection, std::string name) {
    Category category{std::move(name), {}, false};
    for (const auto& spec : selection.selected_specs()) {
        if (spec.kind == VariableKind::Narrative) category.include_narrative = true;
        else category.variables.push_back(spec.name);
    }
    CategoryAssignment assignment{{std::move(category)}};
    assignment.validate();
    return assignment;
}

FeatureSelectionResult DataProcessingTeam::select_all(const std::vector<VariableSpec>& annotations) {
    FeatureSelectionResult result;
    result.source_annotations = annotations;
    for (const auto& spec : annotations) result.selected.push_back(spec.name);
    return result;
}

}  // namespace sevagent
