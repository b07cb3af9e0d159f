#include "sevagent/baselines.hpp"
#include "sevagent/assessment.hpp"
#include "sevagent/error.hpp"
#include "sevagent/io.hpp"
#include "sevagent/log.hpp"
#include "sevagent/parallel.hpp"

#include <algorithm>
#include <charconv>
#include <limits>
#include <cmath>
#include <numeric>
#include <set>

namespace sevagent {

namespace {

constexpr std::pair<BaselineKind, std::string_view> kBaselineNames[] = {
    {BaselineKind::KShot, "kshot"},      {BaselineKind::CoT, "cot"},
    {BaselineKind::FeatureMlp, "mlp"},   {BaselineKind::FeatureMlpSelected, "mlp_selected"},
    {BaselineKind::Ologit, "ologit"},    {BaselineKind::AutoGen, "autogen"},
};

}  // namespace

std::string_view to_string(BaselineKind kind) noexcept {
    for (const auto& [k, name] : kBaselineNames)
        if (k == kind) return name;
    return "?";
}

BaselineKind parse_baseline_kind(std::string_view text) {
    const auto lowered = to_lower(trim(text));
    for (const auto& [k, name] : kBaselineNames)
        if (lowered == name) return k;
    throw Error(ErrorCode::InvalidConfig, "unknown baseline '" + std::string(text) + "'");
}

void require_supported(BaselineKind kind) {
    if (kind == BaselineKind::AutoGen) throw Error(ErrorCode::UnsupportedBaseline, "unsupported: third-party framework");
}

// --- prompt baselines -------------------------------------------------------

PromptBaseline::PromptBaseline(Gateway& gateway, const PromptLibrary& prompts, TaskSpec task, DatasetSchema schema,
                               const std::vector<IncidentRecord>& train, PromptBaselineConfig config)
    : gateway_(gateway), prompts_(prompts), task_(std::move(task)), schema_(std::move(schema)), config_(config) {
    task_.validate();
    const auto exemplars = stratified_exemplars(train, config_.shots, config_.exemplar_seed);
    if (exemplars.size() < config_.shots)
        log_warn("only " + std::to_string(exemplars.size()) + " exemplars available for " +
                 std::to_string(config_.shots) + " shots");
    for (const auto& ex : exemplars) {
        exemplar_ids_.push_back(ex.id);
        std::optional<std::string> narrative;
        if (schema_.narrative()) narrative = truncate_utf8(ex.narrative, config_.narrative_budget);
        const auto block = render_incident_block(ex.id, render_variables(ex, schema_), narrative);
        if (!exemplar_text_.empty()) exemplar_text_ += "\n";
        exemplar_text_ += prompts_.get("exemplar").render({{"incident", block}, {"severity", std::to_string(ex.severity)}});
    }
}

std::vector<ChatMessage> PromptBaseline::build_prompt(const IncidentRecord& record) const {
    if (std::find(exemplar_ids_.begin(), exemplar_ids_.end(), record.id) != exemplar_ids_.end())
        throw Error(ErrorCode::LeakageGuard, "record '" + record.id + "' is a prompt exemplar");
    validate_record(schema_, record);
    std::optional<std::string> narrative;
    if (schema_.narrative()) narrative = truncate_utf8(record.narrative, config_.narrative_budget);
    const auto& tmpl = prompts_.get(config_.mode == PromptMode::KShot ? "kshot" : "cot");
    return {{Role::User, tmpl.render({
                             {"task", task_.description},
                             {"scale", task_.scale_text()},
                             {"exemplars", exemplar_text_.empty() ? "(none)\n" : exemplar_text_},
                             {"incident", render_incident_block(record.id, render_variables(record, schema_), narrative)},
                             {"min_level", std::to_string(task_.min_level())},
                             {"max_level", std::to_string(task_.max_level())},
                         })}};
}

int PromptBaseline::predict(const IncidentRecord& record) {
    auto conversation = build_prompt(record);
    const auto lo = task_.min_level();
    const auto hi = task_.max_level();
    for (int pass = 0; pass < 2; ++pass) {
        const auto reply = gateway_.complete(gateway_.make_request(conversation)).content;
        if (auto value = parse_last_keyed_number(reply, kSeverityKey, true)) {
            const int level = static_cast<int>(*value);
            if (level >= lo && level <= hi) return level;
            log_warn("severity " + std::to_string(level) + " for " + record.id + " outside the scale; clamped");
            return std::clamp(level, lo, hi);
        }
        conversation.push_back({Role::Assistant, reply});
        conversation.push_back({Role::User, prompts_.get("reask_score").render({{"key", std::string(kSeverityKey)},
                                                                                {"min_level", std::to_string(lo)},
                                                                                {"max_level", std::to_string(hi)}})});
    }
    if (config_.strict) throw Error(ErrorCode::UnparseableScore, record.id);
    log_warn("no severity for " + record.id + "; using the middle level");
    return (lo + hi) / 2;
}

std::vector<int> PromptBaseline::predict_all(const std::vector<IncidentRecord>& records) {
    std::vector<int> out(records.size(), 0);
    parallel_for(records.size(), gateway_.config().max_in_flight, [&](std::size_t i) { out[i] = predict(records[i]); });
    return out;
}

// --- feature encoding ------------------------------------------------------

namespace {

std::optional<double> numeric_value(const std::string& text) {
    if (text == kUnknown) return std::nullopt;
    double v = 0.0;
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc{} || ptr != end || !std::isfinite(v))
        throw Error(ErrorCode::ValueOutOfDomain, "not a number: '" + text + "'");
    return v;
}

double encode_one(const EncodedColumn& col, const VariableSpec& spec, const std::string& value) {
    switch (col.type) {
        case EncodedColumn::Type::Indicator:
            return value == col.level ? 1.0 : 0.0;
        case EncodedColumn::Type::Ordinal: {
            auto idx = spec.value_index(value);
            return idx ? static_cast<double>(*idx + 1) : col.center;
        }
        case EncodedColumn::Type::Numeric: {
            auto v = numeric_value(value);
            return v ? (*v - col.center) / col.scale : 0.0;
        }
    }
    return 0.0;
}

}  // namespace

FeatureEncoder FeatureEncoder::fit(const std::vector<IncidentRecord>& train, const DatasetSchema& schema,
                                   const std::vector<std::string>* variables) {
    if (train.empty()) throw Error(ErrorCode::EmptyInput, "no training records to fit the encoder");
    FeatureEncoder enc;
    enc.schema_ = schema;
    for (const auto& spec : schema.variables) {
        if (spec.kind == VariableKind::Narrative) continue;
        if (variables && std::find(variables->begin(), variables->end(), spec.name) == variables->end()) continue;

        std::vector<EncodedColumn> candidates;
        if (spec.kind == VariableKind::Nominal) {
            std::set<std::string> seen;
            for (const auto& r : train) seen.insert(r.fields.at(spec.name));
            std::vector<std::string> levels;
            for (const auto& a : spec.allowed_values)
                if (seen.count(a.value)) levels.push_back(a.value);
            if (seen.count(std::string(kUnknown))) levels.push_back(std::string(kUnknown));
            for (std::size_t i = 1; i < levels.size(); ++i)
                candidates.push_back({spec.name + "=" + levels[i], spec.name, EncodedColumn::Type::Indicator, levels[i]});
        } else if (spec.kind == VariableKind::Ordinal) {
            double sum = 0.0;
            std::size_t n = 0;
            for (const auto& r : train)
                if (auto idx = spec.value_index(r.fields.at(spec.name))) {
                    sum += static_cast<double>(*idx + 1);
                    ++n;
                }
            candidates.push_back({spec.name, spec.name, EncodedColumn::Type::Ordinal, {}, n ? sum / n : 0.0});
        } else {
            double sum = 0.0, sq = 0.0;
            std::size_t n = 0;
            for (const auto& r : train)
                if (auto v = numeric_value(r.fields.at(spec.name))) {
                    sum += *v;
                    ++n;
                }
            const double mean = n ? sum / n : 0.0;
            for (const auto& r : train)
                if (auto v = numeric_value(r.fields.at(spec.name))) sq += (*v - mean) * (*v - mean);
            const double sd = n ? std::sqrt(sq / n) : 0.0;
            candidates.push_back({spec.name, spec.name, EncodedColumn::Type::Numeric, {}, mean, sd > 0 ? sd : 1.0});
        }

        if (candidates.empty()) log_warn("column '" + spec.name + "' has a single level in training; dropped");
        for (auto& col : candidates) {
            const double first = encode_one(col, spec, train.front().fields.at(spec.name));
            const bool constant = std::all_of(train.begin(), train.end(), [&](const IncidentRecord& r) {
                return encode_one(col, spec, r.fields.at(spec.name)) == first;
            });
            if (constant) {
                log_warn("column '" + col.name + "' is constant in training; dropped");
                continue;
            }
            enc.columns_.push_back(std::move(col));
        }
    }
    return enc;
}

std::vector<double> FeatureEncoder::transform(const IncidentRecord& record) const {
    std::vector<double> row;
    row.reserve(columns_.size());
    for (const auto& col : columns_) {
        const auto* spec = schema_.find(col.variable);
        auto it = record.fields.find(col.variable);
        if (it == record.fields.end()) throw Error(ErrorCode::SchemaMismatch, "record '" + record.id + "' lacks '" + col.variable + "'");
        row.push_back(encode_one(col, *spec, it->second));
    }
    return row;
}

std::vector<std::vector<double>> FeatureEncoder::transform(const std::vector<IncidentRecord>& records) const {
    std::vector<std::vector<double>> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(transform(r));
    return out;
}

std::vector<std::string> FeatureEncoder::column_names() const {
    std::vector<std::string> out;
    for (const auto& c : columns_) out.push_back(c.name);
    return out;
}

std::vector<std::string> FeatureEncoder::variables_used() const {
    std::vector<std::string> out;
    for (const auto& c : columns_)
        if (out.empty() || out.back() != c.variable) out.push_back(c.variable);
    return out;
}

EncodedData encode_features(const std::vector<IncidentRecord>& records, const FeatureEncoder& encoder) {
    EncodedData data;
    data.inputs = encoder.transform(records);
    for (const auto& r : records) data.labels.push_back(r.severity);
    data.columns = encoder.column_names();
    return data;
}

EvalReport feature_mlp(const std::vector<IncidentRecord>& train, const std::vector<IncidentRecord>& test,
                       const DatasetSchema& schema, const std::vector<std::string>* variables,
                       const TrainConfig& config, std::string method) {
    if (train.empty() || test.empty()) throw Error(ErrorCode::EmptyInput, "feature MLP needs train and test records");
    const auto encoder = FeatureEncoder::fit(train, schema, variables);
    if (encoder.columns().empty()) throw Error(ErrorCode::EmptyInput, "no usable feature columns");
    const auto tr = encode_features(train, encoder);
    const auto te = encode_features(test, encoder);
    auto [model, report] = sevagent::train(tr.inputs, tr.labels, kNumSeverityLevels, config);
    const auto predictions = predict_all(model, te.inputs);
    return EvalReport::from_predictions(std::move(method), schema.dataset, predictions, te.labels, kNumSeverityLevels);
}

// --- ordered logit ------------------------------------------------------------

namespace {

double log_sigmoid(double z) { return z >= 0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z)); }
double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

void check_inputs(std::span<const std::vector<double>> inputs, std::span<const int> labels, std::size_t p, int C) {
    if (inputs.size() != labels.size()) throw Error(ErrorCode::LengthMismatch, "ologit inputs vs labels");
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        if (inputs[i].size() != p) throw Error(ErrorCode::DimensionMismatch, "ologit input row " + std::to_string(i));
        if (labels[i] < 1 || labels[i] > C) throw Error(ErrorCode::OutOfRange, "ologit label " + std::to_string(labels[i]));
    }
}

// Per-sample log-likelihood and its derivatives with respect to the upper
// (a = kappa_y - eta) and lower (b = kappa_{y-1} - eta) cut points.
struct SampleTerm {
    double ll = 0.0;
    double d_upper = 0.0;
    double d_lower = 0.0;
};

SampleTerm sample_term(const OlogitModel& m, std::span<const double> x, int y) {
    const int C = m.num_classes();
    const double eta = dot(m.beta, x);
    SampleTerm t;
    if (y == 1) {
        const double a = m.thresholds[0] - eta;
        t.ll = log_sigmoid(a);
        t.d_upper = sigmoid(-a);
    } else if (y == C) {
        const double b = m.thresholds[C - 2] - eta;
        t.ll = log_sigmoid(-b);
        t.d_lower = -sigmoid(b);
    } else {
        const double a = m.thresholds[y - 1] - eta;
        const double b = m.thresholds[y - 2] - eta;
        const double gap = std::expm1(a - b);
        t.ll = log_sigmoid(a) + log_sigmoid(-b) + std::log(-std::expm1(b - a));
        t.d_upper = sigmoid(-a) + 1.0 / gap;
        t.d_lower = -sigmoid(b) - 1.0 / gap;
    }
    return t;
}

double norm2(const std::vector<double>& v) { return std::sqrt(dot(v, v)); }

// Solves a x = b by Gaussian elimination with partial pivoting. Returns an
// empty vector for a numerically singular system.
std::vector<double> solve_dense(std::vector<std::vector<double>> a, std::vector<double> b) {
    const std::size_t n = b.size();
    for (std::size_t c = 0; c < n; ++c) {
        std::size_t piv = c;
        for (std::size_t r = c + 1; r < n; ++r)
            if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
        if (!(std::abs(a[piv][c]) > 1e-300)) return {};
        std::swap(a[c], a[piv]);
        std::swap(b[c], b[piv]);
        for (std::size_t r = c + 1; r < n; ++r) {
            const double f = a[r][c] / a[c][c];
            for (std::size_t k = c; k < n; ++k) a[r][k] -= f * a[c][k];
            b[r] -= f * b[c];
        }
    }
    std::vector<double> x(n);
    for (std::size_t c = n; c-- > 0;) {
        double s = b[c];
        for (std::size_t k = c + 1; k < n; ++k) s -= a[c][k] * x[k];
        x[c] = s / a[c][c];
    }
    return x;
}

}  // namespace

std::vector<double> ologit_pack(const OlogitModel& model) {
    std::vector<double> p = model.beta;
    if (model.thresholds.empty()) return p;
    p.push_back(model.thresholds[0]);
    for (std::size_t m = 1; m < model.thresholds.size(); ++m) {
        const double gap = model.thresholds[m] - model.thresholds[m - 1];
        if (!(gap > 0)) throw Error(ErrorCode::InvalidArgument, "ologit thresholds must increase strictly");
        p.push_back(std::log(gap));
    }
    return p;
}

OlogitModel ologit_unpack(std::span<const double> parameters, std::size_t num_features, int num_classes) {
    if (num_classes < 2 || parameters.size() != num_features + static_cast<std::size_t>(num_classes - 1))
        throw Error(ErrorCode::DimensionMismatch, "ologit parameter vector");
    OlogitModel m;
    m.beta.assign(parameters.begin(), parameters.begin() + static_cast<std::ptrdiff_t>(num_features));
    double kappa = parameters[num_features];
    m.thresholds.push_back(kappa);
    for (int j = 1; j < num_classes - 1; ++j) {
        kappa += std::exp(parameters[num_features + static_cast<std::size_t>(j)]);
        m.thresholds.push_back(kappa);
    }
    return m;
}

double ologit_log_likelihood(const OlogitModel& model, std::span<const std::vector<double>> inputs,
                             std::span<const int> labels) {
    check_inputs(inputs, labels, model.beta.size(), model.num_classes());
    double ll = 0.0;
    for (std::size_t i = 0; i < inputs.size(); ++i) ll += sample_term(model, inputs[i], labels[i]).ll;
    return ll;
}

std::vector<double> ologit_gradient(const OlogitModel& model, std::span<const std::vector<double>> inputs,
                                    std::span<const int> labels) {
    const std::size_t p = model.beta.size();
    const int C = model.num_classes();
    check_inputs(inputs, labels, p, C);

    std::vector<double> g_beta(p, 0.0);
    std::vector<double> g_kappa(static_cast<std::size_t>(C - 1), 0.0);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const int y = labels[i];
        const auto t = sample_term(model, inputs[i], y);
        if (y < C) g_kappa[static_cast<std::size_t>(y - 1)] += t.d_upper;
        if (y > 1) g_kappa[static_cast<std::size_t>(y - 2)] += t.d_lower;
        const double d_eta = -(t.d_upper + t.d_lower);
        for (std::size_t k = 0; k < p; ++k) g_beta[k] += d_eta * inputs[i][k];
    }

    // Chain rule through kappa_1 = t_1, kappa_m = kappa_{m-1} + exp(t_m).
    std::vector<double> grad = g_beta;
    std::vector<double> tail(g_kappa.size(), 0.0);
    double running = 0.0;
    for (std::size_t m = g_kappa.size(); m-- > 0;) {
        running += g_kappa[m];
        tail[m] = running;
    }
    grad.push_back(tail.empty() ? 0.0 : tail[0]);
    for (std::size_t m = 1; m < tail.size(); ++m)
        grad.push_back(tail[m] * (model.thresholds[m] - model.thresholds[m - 1]));
    return grad;
}

OlogitFit ologit_fit(std::span<const std::vector<double>> inputs, std::span<const int> labels, int num_classes,
                     const OlogitOptions& options) {
    constexpr double kNewtonSwitch = 1e-4;
    if (num_classes < 2) throw Error(ErrorCode::InvalidArgument, "ordered logit needs at least two classes");
    if (inputs.empty()) throw Error(ErrorCode::EmptyInput, "ordered logit needs data");
    const std::size_t p = inputs.front().size();
    check_inputs(inputs, labels, p, num_classes);
    std::set<int> present(labels.begin(), labels.end());
    if (present.size() < 2) throw Error(ErrorCode::InvalidArgument, "ordered logit needs at least two observed classes");

    const double n = static_cast<double>(inputs.size());
    OlogitModel start;
    start.beta.assign(p, 0.0);
    for (int j = 0; j < num_classes - 1; ++j)
        start.thresholds.push_back(num_classes == 2 ? 0.0 : -1.0 + 2.0 * j / (num_classes - 2));

    auto theta = ologit_pack(start);
    auto mean_ll = [&](const std::vector<double>& t) {
        return ologit_log_likelihood(ologit_unpack(t, p, num_classes), inputs, labels) / n;
    };
    auto mean_grad = [&](const std::vector<double>& t) {
        auto g = ologit_gradient(ologit_unpack(t, p, num_classes), inputs, labels);
        for (auto& v : g) v /= n;
        return g;
    };

    OlogitFit fit;
    double f = mean_ll(theta);
    auto g = mean_grad(theta);
    fit.log_likelihood_history.push_back(f * n);
    double step = 1.0;
    std::vector<double> prev_theta, prev_g;

    for (int iter = 0; iter < options.max_iter; ++iter) {
        const double gnorm = norm2(g);
        if (gnorm < options.tol) {
            fit.converged = true;
            break;
        }
        // Near the optimum the likelihood no longer resolves ascent steps, so
        // Newton steps on the gradient finish the job. The Hessian comes from
        // central differences of the analytic gradient.
        if (gnorm < kNewtonSwitch) {
            const std::size_t m = theta.size();
            std::vector<std::vector<double>> hess(m, std::vector<double>(m));
            auto probe = theta;
            for (std::size_t k = 0; k < m; ++k) {
                const double h = 1e-5 * std::max(1.0, std::abs(theta[k]));
                probe[k] = theta[k] + h;
                const auto up = mean_grad(probe);
                probe[k] = theta[k] - h;
                const auto down = mean_grad(probe);
                probe[k] = theta[k];
                for (std::size_t r = 0; r < m; ++r) hess[r][k] = (up[r] - down[r]) / (2 * h);
            }
            std::vector<double> neg_g(m);
            for (std::size_t k = 0; k < m; ++k) neg_g[k] = -g[k];
            const auto delta = solve_dense(hess, neg_g);
            if (!delta.empty()) {
                std::vector<double> candidate(m);
                for (std::size_t k = 0; k < m; ++k) candidate[k] = theta[k] + delta[k];
                const double f_new = mean_ll(candidate);
                auto g_new = mean_grad(candidate);
                // The likelihood gain here is below its rounding error, so only
                // a loss beyond a few ulps rules the step out.
                const double rounding = 8 * std::numeric_limits<double>::epsilon() * std::abs(f);
                if (std::isfinite(f_new) && f_new >= f - rounding && norm2(g_new) < gnorm) {
                    prev_theta.clear();
                    theta = std::move(candidate);
                    f = f_new;
                    g = std::move(g_new);
                    fit.log_likelihood_history.push_back(f * n);
                    fit.iterations = iter + 1;
                    continue;
                }
            }
            // Newton cannot reduce the gradient any further.
            if (gnorm < 1e3 * options.tol) {
                fit.converged = true;
                break;
            }
            step = 1.0;
        }
        if (!prev_theta.empty()) {
            double sy = 0.0, yy = 0.0;
            for (std::size_t k = 0; k < theta.size(); ++k) {
                const double s = theta[k] - prev_theta[k];
                const double y = g[k] - prev_g[k];
                sy += s * y;
                yy += y * y;
            }
            step = yy > 0 ? std::clamp(std::abs(sy) / yy, 1e-10, 1e10) : 1.0;
        }

        bool accepted = false;
        std::vector<double> candidate(theta.size());
        double f_new = f;
        for (int halvings = 0; halvings < 80; ++halvings) {
            for (std::size_t k = 0; k < theta.size(); ++k) candidate[k] = theta[k] + step * g[k];
            f_new = mean_ll(candidate);
            if (std::isfinite(f_new) && f_new >= f + 1e-4 * step * gnorm * gnorm) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            // No ascent left at machine precision.
            fit.converged = gnorm < 1e3 * options.tol;
            if (!fit.converged) {
                fit.model = ologit_unpack(theta, p, num_classes);
                fit.iterations = iter;
                throw Error(ErrorCode::NotConverged, "line search stalled with gradient norm " + format_double(gnorm));
            }
            break;
        }

        prev_theta = std::move(theta);
        prev_g = std::move(g);
        theta = candidate;
        f = f_new;
        g = mean_grad(theta);
        fit.log_likelihood_history.push_back(f * n);
        fit.iterations = iter + 1;

        const auto model = ologit_unpack(theta, p, num_classes);
        double largest = 0.0;
        for (double b : model.beta) largest = std::max(largest, std::abs(b));
        for (double k : model.thresholds) largest = std::max(largest, std::abs(k));
        if (largest > options.separation_bound) {
            fit.separation = true;
            log_warn("ordered logit parameters diverge (|theta| > " + format_double(options.separation_bound) +
                     "); data look separable, stopping");
            break;
        }
    }

    if (!fit.converged && !fit.separation) {
        if (norm2(g) < options.tol) fit.converged = true;
        else throw Error(ErrorCode::NotConverged, "ordered logit did not converge after " + std::to_string(options.max_iter) + " iterations");
    }
    fit.model = ologit_unpack(theta, p, num_classes);
    fit.log_likelihood = f * n;
    return fit;
}

std::vector<double> ologit_probabilities(const OlogitModel& model, std::span<const double> x) {
    if (x.size() != model.beta.size()) throw Error(ErrorCode::DimensionMismatch, "ologit input");
    const double eta = dot(model.beta, x);
    std::vector<double> probs;
    double below = 0.0;
    for (double kappa : model.thresholds) {
        const double cum = sigmoid(kappa - eta);
        probs.push_back(cum - below);
        below = cum;
    }
    probs.push_back(1.0 - below);
    return probs;
}

int ologit_predict(const OlogitModel& model, std::span<const double> x) {
    return argmax_label(ologit_probabilities(model, x));
}

EvalReport ologit_baseline(const std::vector<IncidentRecord>& train, const std::vector<IncidentRecord>& test,
                           const DatasetSchema& schema, const OlogitOptions& options, std::string method) {
    if (train.empty() || test.empty()) throw Error(ErrorCode::EmptyInput, "ordered logit needs train and test records");
    const auto encoder = FeatureEncoder::fit(train, schema);
    const auto tr = encode_features(train, encoder);
    const auto te = encode_features(test, encoder);
    const auto fit = ologit_fit(tr.inputs, tr.labels, kNumSeverityLevels, options);
    std::vector<int> predictions;
    for (const auto& x : te.inputs) predictions.push_back(ologit_predict(fit.model, x));
    auto report = EvalReport::from_predictions(std::move(method), schema.dataset, predictions, te.labels, kNumSeverityLevels);
    if (fit.separation) report.note = "separation detected; fit stopped early";
    return report;
}

}  // namespace sevagent
