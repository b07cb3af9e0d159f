#include "sevagent/assessment.hpp"
#include "sevagent/error.hpp"
#include "sevagent/io.hpp"
#include "sevagent/log.hpp"
#include "sevagent/parallel.hpp"
#include "sevagent/random.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>

namespace sevagent {

std::string CategoryView::render() const { return render_incident_block(record_id, variables, narrative_excerpt); }

std::vector<CategoryView> build_views(const IncidentRecord& record, const DatasetSchema& schema,
                                      const CategoryAssignment& assignment, std::size_t narrative_budget) {
    validate_record(schema, record);
    std::vector<CategoryView> views;
    views.reserve(assignment.size());
    for (const auto& category : assignment.categories) {
        CategoryView view;
        view.record_id = record.id;
        view.category_name = category.name;
        view.variables = render_variables(record, schema, &category.variables);
        if (category.include_narrative) view.narrative_excerpt = truncate_utf8(record.narrative, narrative_budget);
        views.push_back(std::move(view));
    }
    return views;
}

std::vector<IncidentRecord> stratified_exemplars(const std::vector<IncidentRecord>& pool, std::size_t k,
                                                 std::uint64_t seed) {
    std::map<int, std::vector<const IncidentRecord*>> by_level;
    for (const auto& r : pool) by_level[r.severity].push_back(&r);
    Rng rng(seed);
    for (auto& [level, members] : by_level) rng.shuffle(members);

    std::vector<IncidentRecord> out;
    for (std::size_t round = 0; out.size() < k; ++round) {
        bool any = false;
        for (auto& [level, members] : by_level) {
            if (round >= members.size() || out.size() >= k) continue;
            out.push_back(*members[round]);
            any = true;
        }
        if (!any) break;
    }
    return out;
}

SeverityAssessmentTeam::SeverityAssessmentTeam(Gateway& gateway, const PromptLibrary& prompts, TaskSpec task,
                                               DatasetSchema schema, CategoryAssignment assignment,
                                               AssessmentOptions options)
    : gateway_(gateway),
      prompts_(prompts),
      task_(std::move(task)),
      schema_(std::move(schema)),
      assignment_(std::move(assignment)),
      options_(options) {
    task_.validate();
    assignment_.validate();
    for (const auto& c : assignment_.categories)
        for (const auto& v : c.variables)
            if (!schema_.find(v)) throw Error(ErrorCode::SchemaMismatch, "category '" + c.name + "' lists unknown variable '" + v + "'");
}

void SeverityAssessmentTeam::set_exemplar_pool(std::vector<IncidentRecord> pool) { exemplar_pool_ = std::move(pool); }

std::string SeverityAssessmentTeam::exemplar_text(const CategoryView& view) const {
    if (options_.few_shot == 0 || exemplar_pool_.empty()) return {};
    const auto* category = assignment_.find(view.category_name);
    // One spare so the record under evaluation can be skipped.
    auto picks = stratified_exemplars(exemplar_pool_, options_.few_shot + 1, options_.exemplar_seed);
    std::string out = "\nSolved examples for this category:\n\n";
    std::size_t used = 0;
    for (const auto& ex : picks) {
        if (ex.id == view.record_id || used == options_.few_shot) continue;
        const auto vars = render_variables(ex, schema_, &category->variables);
        std::optional<std::string> narrative;
        if (category->include_narrative) narrative = truncate_utf8(ex.narrative, options_.narrative_budget);
        out += prompts_.get("exemplar").render({{"incident", render_incident_block(ex.id, vars, narrative)},
                                                {"severity", std::to_string(ex.severity)}});
        out += "\n";
        ++used;
    }
    return out;
}

CategoryEvaluation SeverityAssessmentTeam::evaluate_category(const CategoryView& view) {
    evaluator_calls_.fetch_add(1);
    const auto lo = task_.min_level();
    const auto hi = task_.max_level();
    std::vector<ChatMessage> conversation{
        {Role::System, prompts_.get("evaluate_system").render({{"category", view.category_name}})},
        {Role::User, prompts_.get("evaluate_user").render({
                         {"task", task_.description},
                         {"scale", task_.scale_text()},
                         {"category", view.category_name},
                         {"exemplars", exemplar_text(view)},
                         {"incident", view.render()},
                         {"min_level", std::to_string(lo)},
                         {"max_level", std::to_string(hi)},
                     })},
    };

    CategoryEvaluation result;
    result.category_name = view.category_name;
    for (int pass = 0; pass < 2; ++pass) {
        const auto reply = gateway_.complete(gateway_.make_request(conversation)).content;
        result.raw_response = reply;
        if (auto score = parse_last_keyed_number(reply, kScoreKey, !options_.allow_decimal_scores)) {
            result.score = std::clamp(*score, static_cast<double>(lo), static_cast<double>(hi));
            if (result.score != *score) {
                result.clamped = true;
                log_warn("score " + format_double(*score) + " for " + view.record_id + "/" + view.category_name +
                         " clamped to " + format_double(result.score));
            }
            result.rationale = strip_answer(reply, kScoreKey);
            if (result.rationale.empty()) result.rationale = trim(reply);
            return result;
        }
        conversation.push_back({Role::Assistant, reply});
        conversation.push_back({Role::User, prompts_.get("reask_score").render({{"key", std::string(kScoreKey)},
                                                                                {"min_level", std::to_string(lo)},
                                                                                {"max_level", std::to_string(hi)}})});
    }
    if (options_.strict)
        throw Error(ErrorCode::UnparseableScore, view.record_id + "/" + view.category_name);
    result.score = (lo + hi) / 2.0;
    result.fallback = true;
    log_warn("no score for " + view.record_id + "/" + view.category_name + "; using scale midpoint");
    return result;
}

ScoreVector SeverityAssessmentTeam::assess_incident(const IncidentRecord& record,
                                                    std::vector<CategoryEvaluation>* evaluations) {
    std::vector<std::vector<CategoryEvaluation>> evals;
    auto vectors = assess_batch({record}, evaluations ? &evals : nullptr);
    if (evaluations) *evaluations = std::move(evals.front());
    return std::move(vectors.front());
}

std::vector<ScoreVector> SeverityAssessmentTeam::assess_batch(const std::vector<IncidentRecord>& records,
                                                              std::vector<std::vector<CategoryEvaluation>>* evaluations) {
    const auto d = assignment_.size();
    std::vector<std::vector<CategoryView>> views;
    views.reserve(records.size());
    for (const auto& r : records) views.push_back(build_views(r, schema_, assignment_, options_.narrative_budget));

    std::vector<CategoryEvaluation> flat(records.size() * d);
    parallel_for(flat.size(), gateway_.config().max_in_flight,
                 [&](std::size_t i) { flat[i] = evaluate_category(views[i / d][i % d]); });

    const auto order = assignment_.names();
    std::vector<ScoreVector> out;
    out.reserve(records.size());
    if (evaluations) evaluations->assign(records.size(), {});
    for (std::size_t r = 0; r < records.size(); ++r) {
        ScoreVector sv{records[r].id, {}, order};
        for (std::size_t k = 0; k < d; ++k) sv.scores.push_back(flat[r * d + k].score);
        if (evaluations)
            (*evaluations)[r].assign(std::make_move_iterator(flat.begin() + r * d),
                                     std::make_move_iterator(flat.begin() + (r + 1) * d));
        out.push_back(std::move(sv));
    }
    return out;
}

// ---------------------------------------------------------------------------

ScoreTable ScoreTable::from_vectors(const std::vector<ScoreVector>& vectors, const std::vector<IncidentRecord>& records) {
    if (vectors.size() != records.size()) throw Error(ErrorCode::LengthMismatch, "score vectors vs records");
    ScoreTable t;
    if (!vectors.empty()) t.category_order = vectors.front().category_order;
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        const auto& sv = vectors[i];
        if (sv.record_id != records[i].id) throw Error(ErrorCode::InvalidArgument, "score vector order differs from records");
        if (sv.category_order != t.category_order || sv.scores.size() != t.category_order.size())
            throw Error(ErrorCode::DimensionMismatch, "score vector for " + sv.record_id);
        t.record_ids.push_back(sv.record_id);
        t.scores.push_back(sv.scores);
        t.severities.push_back(records[i].severity);
    }
    return t;
}

ScoreTable ScoreTable::subset(const std::vector<std::string>& ids) const {
    std::map<std::string_view, std::size_t> index;
    for (std::size_t i = 0; i < record_ids.size(); ++i) index.emplace(record_ids[i], i);
    ScoreTable t;
    t.category_order = category_order;
    for (const auto& id : ids) {
        auto it = index.find(id);
        if (it == index.end()) throw Error(ErrorCode::InvalidArgument, "record '" + id + "' has no scores");
        t.record_ids.push_back(id);
        t.scores.push_back(scores[it->second]);
        t.severities.push_back(severities[it->second]);
    }
    return t;
}

ScoreTable ScoreTable::drop_category(std::string_view name) const {
    auto it = std::find(category_order.begin(), category_order.end(), name);
    if (it == category_order.end()) throw Error(ErrorCode::UnknownCategory, std::string(name));
    const auto col = static_cast<std::size_t>(it - category_order.begin());
    ScoreTable t = *this;
    t.category_order.erase(t.category_order.begin() + col);
    for (auto& row : t.scores) row.erase(row.begin() + col);
    return t;
}

std::vector<ScoreVector> ScoreTable::vectors() const {
    std::vector<ScoreVector> out;
    for (std::size_t i = 0; i < record_ids.size(); ++i) out.push_back({record_ids[i], scores[i], category_order});
    return out;
}

std::string ScoreTable::to_csv() const {
    CsvRow header{"record_id"};
    header.insert(header.end(), category_order.begin(), category_order.end());
    header.push_back("severity");
    std::string out = csv_line(header);
    for (std::size_t i = 0; i < record_ids.size(); ++i) {
        CsvRow row{record_ids[i]};
        for (double s : scores[i]) row.push_back(format_double(s));
        row.push_back(std::to_string(severities[i]));
        out += csv_line(row);
    }
    return out;
}

namespace {

double parse_real(const std::string& text, std::size_t line) {
    double value = 0.0;
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc{} || ptr != end || !std::isfinite(value))
        throw Error(ErrorCode::SchemaMismatch, "score table line " + std::to_string(line) + ": bad number '" + text + "'");
    return value;
}

}  // namespace

ScoreTable ScoreTable::from_csv(std::string_view text) {
    const auto rows = parse_csv(text);
    if (rows.empty()) throw Error(ErrorCode::SchemaMismatch, "empty score table");
    const auto& header = rows.front();
    if (header.size() < 2 || header.front() != "record_id" || header.back() != "severity")
        throw Error(ErrorCode::SchemaMismatch, "score table header must be record_id,<categories...>,severity");
    ScoreTable t;
    t.category_order.assign(header.begin() + 1, header.end() - 1);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& row = rows[i];
        if (row.size() != header.size())
            throw Error(ErrorCode::SchemaMismatch, "score table line " + std::to_string(i + 1) + ": wrong field count");
        t.record_ids.push_back(row.front());
        std::vector<double> s;
        for (std::size_t k = 1; k + 1 < row.size(); ++k) s.push_back(parse_real(row[k], i + 1));
        t.scores.push_back(std::move(s));
        const double sev = parse_real(row.back(), i + 1);
        if (sev != std::floor(sev) || sev < 1 || sev > kNumSeverityLevels)
            throw Error(ErrorCode::ValueOutOfDomain, "severity '" + row.back() + "'");
        t.severities.push_back(static_cast<int>(sev));
    }
    return t;
}

void ScoreTable::save(const std::filesystem::path& path) const { write_text_file(path, to_csv()); }

ScoreTable ScoreTable::load(const std::filesystem::path& path) { return from_csv(read_text_file(path)); }

std::string rationale_log(const std::vector<ScoreVector>& vectors,
                          const std::vector<std::vector<CategoryEvaluation>>& evaluations) {
    if (vectors.size() != evaluations.size()) throw Error(ErrorCode::LengthMismatch, "rationale log");
    std::string out;
    for (std::size_t i = 0; i < vectors.size(); ++i)
        for (const auto& e : evaluations[i]) {
            nlohmann::ordered_json line{{"record_id", vectors[i].record_id},
                                        {"category", e.category_name},
                                        {"score", e.score},
                                        {"fallback", e.fallback},
                                        {"clamped", e.clamped},
                                        {"rationale", e.rationale}};
            out += line.dump() + "\n";
        }
    return out;
}

std::vector<std::string> scan_for_label_leaks(const ChatRequest& request,
                                              const std::map<std::string, const IncidentRecord*>& records,
                                              const DatasetSchema& schema) {
    std::vector<std::string> findings;
    const std::string open = "<incident id=\"";
    const std::string close = "</incident>";
    for (const auto& message : request.messages) {
        const auto& text = message.content;
        std::size_t pos = 0;
        while ((pos = text.find(open, pos)) != std::string::npos) {
            const auto id_start = pos + open.size();
            const auto id_end = text.find('"', id_start);
            const auto block_end = text.find(close, id_start);
            if (id_end == std::string::npos || block_end == std::string::npos) {
                findings.push_back("unterminated incident block");
                break;
            }
            const auto id = text.substr(id_start, id_end - id_start);
            const auto block = to_lower(std::string_view(text).substr(id_end + 1, block_end - id_end - 1));
            pos = block_end + close.size();

            auto it = records.find(id);
            if (it == records.end()) {
                findings.push_back("incident block for unknown record '" + id + "'");
                continue;
            }
            const auto& record = *it->second;
            const auto label = to_lower(severity_level(record.dataset, record.severity).label);
            if (block.find(label) != std::string::npos)
                findings.push_back("record '" + id + "': severity label '" + label + "' in prompt");
            if (!schema.severity_column.empty() && block.find(to_lower(schema.severity_column)) != std::string::npos)
                findings.push_back("record '" + id + "': severity column name in prompt");
            if (block.find("severity: " + std::to_string(record.severity)) != std::string::npos)
                findings.push_back("record '" + id + "': severity code in prompt");
        }
    }
    return findings;
}

}  // namespace sevagent
