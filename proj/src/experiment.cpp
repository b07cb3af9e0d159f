#include "sevagent/experiment.hpp"
#include "sevagent/error.hpp"
#include "sevagent/io.hpp"
#include "sevagent/log.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <set>

namespace sevagent {

namespace fs = std::filesystem;
using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// configuration

namespace {

const std::set<std::string> kTopLevelKeys = {
    "datasets", "backend", "cache", "templates", "task", "categories", "train", "split", "seed",
    "baselines", "shots", "ablations", "robustness", "assessment", "ologit", "strict", "out",
};

fs::path resolve(const fs::path& base, const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() ? path : (base / path).lexically_normal();
}

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
    for (const auto& [key, value] : obj.items())
        if (!allowed.count(key)) throw Error(ErrorCode::InvalidConfig, "unknown key '" + key + "' in " + where);
}

bool valid_ablation(const std::string& v) {
    return v == "full" || v == "no_feature_selection" || v == "no_category_organizer" ||
           (v.rfind("drop_category:", 0) == 0 && v.size() > 14);
}

std::string slug(std::string_view text) {
    std::string out;
    for (char c : text) out += std::isalnum(static_cast<unsigned char>(c)) ? static_cast<char>(std::tolower(c)) : '_';
    return out;
}

}  // namespace

RunConfig RunConfig::from_json_text(std::string_view text, const fs::path& base_dir, const Overrides& overrides) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidConfig, std::string("config is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw Error(ErrorCode::InvalidConfig, "config must be a JSON object");
    check_keys(doc, kTopLevelKeys, "config");

    if (overrides.backend) doc["backend"]["kind"] = std::string(to_string(*overrides.backend));
    if (overrides.seed) doc["seed"] = *overrides.seed;
    if (overrides.out) doc["out"] = overrides.out->string();
    if (overrides.strict) doc["strict"] = *overrides.strict;

    RunConfig c;
    c.digest = sha256_hex(doc.dump());
    try {
        for (const auto& d : doc.at("datasets")) {
            check_keys(d, {"name", "data", "schema", "balance_cap"}, "datasets");
            DatasetConfig ds;
            ds.name = d.at("name").get<std::string>();
            ds.data = resolve(base_dir, d.at("data").get<std::string>());
            ds.schema = resolve(base_dir, d.at("schema").get<std::string>());
            if (d.contains("balance_cap") && !d.at("balance_cap").is_null())
                ds.balance_cap = d.at("balance_cap").get<std::size_t>();
            c.datasets.push_back(std::move(ds));
        }

        if (doc.contains("backend")) {
            const auto& b = doc.at("backend");
            check_keys(b, {"kind", "rules", "base_url", "model", "timeout_s", "max_in_flight", "max_attempts", "max_tokens"},
                       "backend");
            c.backend.kind = parse_backend_kind(b.value("kind", std::string("mock")));
            if (b.contains("rules")) c.backend.rules = resolve(base_dir, b.at("rules").get<std::string>());
            c.backend.base_url = b.value("base_url", std::string{});
            c.backend.model = b.value("model", c.backend.kind == BackendKind::Mock ? std::string("mock") : std::string{});
            c.backend.timeout_s = b.value("timeout_s", 120);
            c.backend.max_in_flight = b.value("max_in_flight", std::size_t{4});
            c.backend.max_attempts = b.value("max_attempts", 4);
            c.backend.max_tokens = b.value("max_tokens", 512);
        }
        if (doc.contains("cache") && !doc.at("cache").is_null()) c.cache_path = resolve(base_dir, doc.at("cache").get<std::string>());
        if (doc.contains("templates") && !doc.at("templates").is_null())
            c.template_dir = resolve(base_dir, doc.at("templates").get<std::string>());
        if (doc.contains("task") && !doc.at("task").is_null()) c.task = doc.at("task").get<std::string>();
        c.categories = doc.value("categories", default_categories());
        c.seed = doc.value("seed", std::uint64_t{0});

        if (doc.contains("train")) {
            const auto& t = doc.at("train");
            check_keys(t, {"learning_rate", "epochs", "hidden"}, "train");
            c.train.learning_rate = t.value("learning_rate", c.train.learning_rate);
            c.train.epochs = t.value("epochs", c.train.epochs);
            c.train.hidden_sizes = t.value("hidden", c.train.hidden_sizes);
        }
        c.train.seed = c.seed;

        if (doc.contains("split")) {
            const auto& s = doc.at("split");
            check_keys(s, {"train", "test"}, "split");
            c.split.train = s.value("train", c.split.train);
            c.split.test = s.value("test", c.split.test);
        }
        for (const auto& b : doc.value("baselines", std::vector<std::string>{})) c.baselines.push_back(parse_baseline_kind(b));
        c.shots = doc.value("shots", c.shots);
        c.ablations = doc.value("ablations", std::vector<std::string>{});

        if (doc.contains("robustness")) {
            const auto& r = doc.at("robustness");
            check_keys(r, {"splits", "train", "test"}, "robustness");
            c.robustness.splits = r.value("splits", c.robustness.splits);
            c.robustness.ratio.train = r.value("train", c.robustness.ratio.train);
            c.robustness.ratio.test = r.value("test", c.robustness.ratio.test);
        }
        if (doc.contains("assessment")) {
            const auto& a = doc.at("assessment");
            check_keys(a, {"few_shot", "narrative_budget", "allow_decimal_scores"}, "assessment");
            c.assessment.few_shot = a.value("few_shot", c.assessment.few_shot);
            c.assessment.narrative_budget = a.value("narrative_budget", c.assessment.narrative_budget);
            c.assessment.allow_decimal_scores = a.value("allow_decimal_scores", c.assessment.allow_decimal_scores);
        }
        c.assessment.strict = doc.value("strict", false);
        c.assessment.exemplar_seed = c.seed;
        if (doc.contains("ologit")) {
            const auto& o = doc.at("ologit");
            check_keys(o, {"tol", "max_iter"}, "ologit");
            c.ologit.tol = o.value("tol", c.ologit.tol);
            c.ologit.max_iter = o.value("max_iter", c.ologit.max_iter);
        }
        c.out = resolve(base_dir, doc.value("out", std::string("out")));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidConfig, e.what());
    }
    c.validate();
    return c;
}

RunConfig RunConfig::load(const fs::path& path, const Overrides& overrides) {
    return from_json_text(read_text_file(path), fs::absolute(path).parent_path(), overrides);
}

void RunConfig::validate() const {
    auto fail = [](const std::string& m) { throw Error(ErrorCode::InvalidConfig, m); };
    if (datasets.empty()) fail("no datasets configured");
    std::set<std::string> names;
    for (const auto& d : datasets) {
        if (d.name.empty() || slug(d.name) != d.name) fail("dataset name '" + d.name + "' must be lowercase [a-z0-9_]");
        if (!names.insert(d.name).second) fail("duplicate dataset '" + d.name + "'");
        if (!fs::is_regular_file(d.data)) fail("data file not found: " + d.data.string());
        if (!fs::is_regular_file(d.schema)) fail("schema file not found: " + d.schema.string());
        if (d.balance_cap && *d.balance_cap < 2) fail("balance_cap must be at least 2");
    }
    if (backend.kind == BackendKind::Mock && !backend.rules.empty() && !fs::is_regular_file(backend.rules))
        fail("mock rules file not found: " + backend.rules.string());
    if (backend.kind == BackendKind::Remote && backend.base_url.empty()) fail("remote backend needs base_url");
    if (backend.model.empty()) fail("backend model is empty");
    if (backend.max_in_flight < 1 || backend.max_attempts < 1 || backend.timeout_s < 1) fail("backend limits must be positive");
    if (template_dir && !fs::is_directory(*template_dir)) fail("template directory not found: " + template_dir->string());
    if (categories.empty()) fail("no candidate categories");
    if (std::set<std::string>(categories.begin(), categories.end()).size() != categories.size()) fail("duplicate categories");
    if (split.train < 1 || split.test < 1) fail("split ratio parts must be positive");
    if (robustness.splits < 2) fail("robustness needs at least 2 splits");
    if (robustness.ratio.train < 1 || robustness.ratio.test < 1) fail("robustness ratio parts must be positive");
    for (const auto& a : ablations)
        if (!valid_ablation(a)) fail("unknown ablation '" + a + "'");
    if (out.empty()) fail("no output directory");
    try {
        train.validate();
    } catch (const Error& e) {
        fail(e.what());
    }
}

// ---------------------------------------------------------------------------
// robustness and reports

double sample_mean(const std::vector<double>& values) {
    if (values.empty()) throw Error(ErrorCode::EmptyInput, "mean of nothing");
    return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double sample_std(const std::vector<double>& values) {
    if (values.size() < 2) throw Error(ErrorCode::EmptyInput, "sample standard deviation needs two values");
    const double m = sample_mean(values);
    double ss = 0.0;
    for (double v : values) ss += (v - m) * (v - m);
    return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

RobustnessReport RobustnessReport::from_accuracies(std::string method, std::vector<std::uint64_t> seeds,
                                                   std::vector<double> accuracies) {
    RobustnessReport r;
    r.method = std::move(method);
    r.seeds = std::move(seeds);
    r.accuracies = std::move(accuracies);
    r.mean = sample_mean(r.accuracies);
    r.std = sample_std(r.accuracies);
    return r;
}

std::string RobustnessReport::to_json_text() const {
    ordered_json doc;
    doc["method"] = method;
    doc["available"] = available;
    if (!note.empty()) doc["note"] = note;
    doc["k"] = seeds.size();
    doc["seeds"] = seeds;
    if (available) {
        doc["accuracies"] = accuracies;
        doc["macro_f1"] = macro_f1s;
        doc["mean"] = mean;
        doc["std"] = std;
    }
    if (!score_digests.empty()) doc["score_digests"] = score_digests;
    doc["std_estimator"] = "sample (n - 1)";
    return doc.dump(2) + "\n";
}

void emit_report(const std::vector<EvalReport>& reports, const fs::path& directory, const std::string& manifest_json) {
    if (reports.empty()) throw Error(ErrorCode::EmptyInput, "no reports to emit");
    std::string table = csv_line({"dataset", "method", "available", "accuracy", "macro_f1", "n_samples", "note"});
    for (const auto& r : reports) {
        const std::string ds(to_string(r.dataset));
        table += csv_line({ds, r.method, r.available ? "yes" : "no", r.available ? format_double(r.accuracy) : "n/a",
                           r.available ? format_double(r.macro_f1) : "n/a", r.available ? std::to_string(r.n_samples) : "n/a",
                           r.note});
        if (!r.available) continue;
        std::string dist = csv_line({"level", "label", "true", "predicted"});
        for (std::size_t j = 0; j < r.true_distribution.size(); ++j) {
            const int level = static_cast<int>(j) + 1;
            dist += csv_line({std::to_string(level), severity_level(r.dataset, level).label,
                              std::to_string(r.true_distribution[j]), std::to_string(r.predicted_distribution[j])});
        }
        write_text_file(directory / "distributions" / (slug(ds) + "_" + slug(r.method) + ".csv"), dist);
    }
    write_text_file(directory / "comparison.csv", table);
    write_text_file(directory / "manifest.json", manifest_json);
}

// ---------------------------------------------------------------------------
// experiment

struct Experiment::DatasetState {
    DatasetConfig cfg;
    DatasetSchema schema;
    TaskSpec task;
    std::optional<std::vector<IncidentRecord>> records;
    std::optional<DataSplit> split;
    std::optional<FeatureSelectionResult> selection;
    std::optional<CategoryAssignment> assignment;
    std::optional<ScoreTable> scores;
    std::optional<FusionModel> model;
    std::map<std::string, EvalReport> evals;
};

namespace {

std::string split_to_json(const DataSplit& s) {
    ordered_json doc;
    doc["seed"] = s.seed;
    doc["ratio"] = {{"train", s.ratio.train}, {"test", s.ratio.test}};
    doc["train"] = s.train;
    doc["test"] = s.test;
    return doc.dump(2) + "\n";
}

DataSplit split_from_json(std::string_view text) {
    const auto doc = json::parse(text);
    DataSplit s;
    s.seed = doc.at("seed").get<std::uint64_t>();
    s.ratio.train = doc.at("ratio").at("train").get<int>();
    s.ratio.test = doc.at("ratio").at("test").get<int>();
    s.train = doc.at("train").get<std::vector<std::string>>();
    s.test = doc.at("test").get<std::vector<std::string>>();
    return s;
}

std::pair<FusionModel, TrainReport> fit_fusion(const ScoreTable& table, const TrainConfig& config) {
    if (table.size() == 0) throw Error(ErrorCode::EmptyInput, "no training rows");
    return train(table.scores, table.severities, kNumSeverityLevels, config);
}

EvalReport evaluate_fusion(const FusionModel& model, const ScoreTable& test, std::string method, Dataset dataset) {
    const auto predictions = predict_all(model, test.scores);
    return EvalReport::from_predictions(std::move(method), dataset, predictions, test.severities, kNumSeverityLevels);
}

std::string strip_code(const Error& e) {
    std::string what = e.what();
    const auto prefix = std::string(to_string(e.code())) + ": ";
    return what.rfind(prefix, 0) == 0 ? what.substr(prefix.size()) : what;
}

}  // namespace

Experiment::Experiment(RunConfig config) : config_(std::move(config)) {
    config_.validate();
    prompts_ = config_.template_dir ? PromptLibrary::load(*config_.template_dir) : PromptLibrary::defaults();

    if (config_.backend.kind == BackendKind::Mock) {
        backend_ = std::make_shared<MockBackend>(config_.backend.rules.empty() ? MockRules{} : MockRules::load(config_.backend.rules));
    } else {
        const char* key = std::getenv(kApiKeyEnv);
        backend_ = std::make_shared<RemoteBackend>(config_.backend.base_url, key ? key : "",
                                                   make_http_transport(std::chrono::seconds(config_.backend.timeout_s)));
    }
    auto cache = config_.cache_path.empty() ? std::make_shared<ResponseCache>()
                                            : std::make_shared<ResponseCache>(config_.cache_path);
    GatewayConfig gc;
    gc.model = config_.backend.model;
    gc.max_tokens = config_.backend.max_tokens;
    gc.max_in_flight = config_.backend.max_in_flight;
    gc.retry.max_attempts = config_.backend.max_attempts;
    gateway_ = std::make_unique<Gateway>(backend_, cache, gc);

    for (const auto& d : config_.datasets) {
        auto st = std::make_unique<DatasetState>();
        st->cfg = d;
        states_.push_back(std::move(st));
    }
    artifacts_current_ = artifacts_current();
}

Experiment::~Experiment() = default;

const std::vector<std::string>& Experiment::stage_names() {
    static const std::vector<std::string> names = {"ingest",   "select",     "organize", "assess", "train",
                                                   "evaluate", "robustness", "ablate",   "stats",  "report"};
    return names;
}

fs::path Experiment::artifact_dir(std::size_t dataset) const {
    return config_.out / "artifacts" / config_.datasets.at(dataset).name;
}

fs::path Experiment::report_dir(std::size_t dataset) const {
    return config_.out / "reports" / config_.datasets.at(dataset).name;
}

bool Experiment::artifacts_current() const {
    const auto stamp = config_.out / "artifacts" / "config_digest.txt";
    if (!fs::is_regular_file(stamp)) return false;
    try {
        return trim(read_text_file(stamp)) == config_.digest;
    } catch (const Error&) {
        return false;
    }
}

void Experiment::stamp_artifacts() const {
    write_text_file(config_.out / "artifacts" / "config_digest.txt", config_.digest + "\n");
}

Experiment::DatasetState& Experiment::state(std::size_t dataset) {
    auto& st = *states_.at(dataset);
    if (st.schema.variables.empty()) {
        st.schema = DatasetSchema::load(st.cfg.schema);
        st.task = TaskSpec::default_for(st.schema.dataset);
        if (config_.task) st.task.description = *config_.task;
    }
    return st;
}

void Experiment::run_stage(std::string_view stage) {
    const auto& names = stage_names();
    if (std::find(names.begin(), names.end(), stage) == names.end())
        throw Error(ErrorCode::InvalidArgument, "unknown stage '" + std::string(stage) + "'");
    try {
        if (!artifacts_current_) {
            // Artifacts from another configuration must not be resumed from.
            std::error_code ec;
            fs::remove_all(config_.out / "artifacts", ec);
            fs::remove_all(config_.out / "reports", ec);
            stamp_artifacts();
            artifacts_current_ = true;
        }
        if (stage == "report") {
            report();
            return;
        }
        for (std::size_t d = 0; d < states_.size(); ++d) {
            if (stage == "ingest") ingest(d);
            else if (stage == "select") select(d);
            else if (stage == "organize") organize(d);
            else if (stage == "assess") assess(d);
            else if (stage == "train") train_fusion(d);
            else if (stage == "evaluate") evaluate(d);
            else if (stage == "robustness") robustness(d);
            else if (stage == "ablate") ablate(d);
            else if (stage == "stats") stats(d);
        }
    } catch (const Error& e) {
        throw Error(e.code(), "stage " + std::string(stage) + ": " + strip_code(e));
    }
}

void Experiment::run_all() {
    for (const auto* stage : {"ingest", "select", "organize", "assess", "train", "evaluate"}) run_stage(stage);
    run_stage("robustness");
    if (!config_.ablations.empty()) run_stage("ablate");
    run_stage("stats");
    run_stage("report");
}

// --- state accessors --------------------------------------------------------

const DatasetSchema& Experiment::schema(std::size_t dataset) { return state(dataset).schema; }

const std::vector<IncidentRecord>& Experiment::records(std::size_t dataset) {
    auto& st = state(dataset);
    if (!st.records) {
        const auto dir = artifact_dir(dataset);
        if (artifacts_current_ && fs::is_regular_file(dir / "records.jsonl") && fs::is_regular_file(dir / "split.json")) {
            st.records = parse_snapshot(read_text_file(dir / "records.jsonl"), st.schema);
            st.split = split_from_json(read_text_file(dir / "split.json"));
        } else {
            ingest(dataset);
        }
    }
    return *st.records;
}

const DataSplit& Experiment::split(std::size_t dataset) {
    records(dataset);
    return *state(dataset).split;
}

const FeatureSelectionResult& Experiment::selection(std::size_t dataset) {
    auto& st = state(dataset);
    if (!st.selection) {
        const auto path = artifact_dir(dataset) / "features.json";
        if (artifacts_current_ && fs::is_regular_file(path)) st.selection = FeatureSelectionResult::from_json_text(read_text_file(path));
        else select(dataset);
    }
    return *st.selection;
}

const CategoryAssignment& Experiment::assignment(std::size_t dataset) {
    auto& st = state(dataset);
    if (!st.assignment) {
        const auto path = artifact_dir(dataset) / "categories.json";
        if (artifacts_current_ && fs::is_regular_file(path)) st.assignment = CategoryAssignment::from_json_text(read_text_file(path));
        else organize(dataset);
    }
    return *st.assignment;
}

const ScoreTable& Experiment::scores(std::size_t dataset) {
    auto& st = state(dataset);
    if (!st.scores) {
        const auto path = artifact_dir(dataset) / "scores.csv";
        if (artifacts_current_ && fs::is_regular_file(path)) st.scores = ScoreTable::load(path);
        else assess(dataset);
    }
    return *st.scores;
}

const FusionModel& Experiment::fusion_model(std::size_t dataset) {
    auto& st = state(dataset);
    if (!st.model) {
        const auto path = artifact_dir(dataset) / "fusion_model.json";
        if (artifacts_current_ && fs::is_regular_file(path)) st.model = FusionModel::load(path);
        else train_fusion(dataset);
    }
    return *st.model;
}

std::vector<std::string> Experiment::method_order() const {
    std::vector<std::string> out{std::string(kPipelineMethod)};
    for (auto b : config_.baselines) out.emplace_back(to_string(b));
    return out;
}

std::vector<EvalReport> Experiment::evaluations(std::size_t dataset) {
    auto& st = state(dataset);
    std::vector<EvalReport> out;
    bool evaluated = false;
    for (const auto& method : method_order()) {
        if (!st.evals.count(method)) {
            const auto path = report_dir(dataset) / ("eval_" + method + ".json");
            if (artifacts_current_ && fs::is_regular_file(path)) {
                st.evals[method] = EvalReport::from_json_text(read_text_file(path));
            } else if (!evaluated) {
                evaluate(dataset);
                evaluated = true;
            }
        }
        out.push_back(st.evals.at(method));
    }
    return out;
}

// --- stages -----------------------------------------------------------------

void Experiment::ingest(std::size_t dataset) {
    auto& st = state(dataset);
    auto records = load_dataset(st.cfg.data, st.schema);
    if (st.cfg.balance_cap) records = balance_subset(records, *st.cfg.balance_cap, config_.seed);
    auto split = stratified_split(records, config_.split, config_.seed);

    const auto dir = artifact_dir(dataset);
    write_text_file(dir / "records.jsonl", serialize_snapshot(records, st.schema));
    write_text_file(dir / "split.json", split_to_json(split));
    write_text_file(dir / "counts.csv", summarize(records, st.schema).to_csv());
    log_info(st.cfg.name + ": " + std::to_string(records.size()) + " records, " + std::to_string(split.train.size()) +
             " train / " + std::to_string(split.test.size()) + " test");
    st.records = std::move(records);
    st.split = std::move(split);
}

void Experiment::select(std::size_t dataset) {
    auto& st = state(dataset);
    DataProcessingTeam team(*gateway_, prompts_, st.task);
    auto result = team.select_features(st.schema.variables);
    write_text_file(artifact_dir(dataset) / "features.json", result.to_json_text());
    st.selection = std::move(result);
}

void Experiment::organize(std::size_t dataset) {
    auto& st = state(dataset);
    const auto& sel = selection(dataset);
    DataProcessingTeam team(*gateway_, prompts_, st.task);
    auto result = team.organize_categories(sel, config_.categories);
    result.validate_covers(sel, st.schema);
    write_text_file(artifact_dir(dataset) / "categories.json", result.to_json_text());
    st.assignment = std::move(result);
}

void Experiment::assess(std::size_t dataset) {
    auto& st = state(dataset);
    const auto& recs = records(dataset);
    const auto& assign = assignment(dataset);
    SeverityAssessmentTeam team(*gateway_, prompts_, st.task, st.schema, assign, config_.assessment);
    team.set_exemplar_pool(select_records(recs, split(dataset).train));
    std::vector<std::vector<CategoryEvaluation>> evaluations;
    const auto vectors = team.assess_batch(recs, &evaluations);
    auto table = ScoreTable::from_vectors(vectors, recs);
    table.save(artifact_dir(dataset) / "scores.csv");
    write_text_file(artifact_dir(dataset) / "rationales.jsonl", rationale_log(vectors, evaluations));
    st.scores = std::move(table);
}

void Experiment::train_fusion(std::size_t dataset) {
    auto& st = state(dataset);
    const auto train_rows = scores(dataset).subset(split(dataset).train);
    auto [model, report] = fit_fusion(train_rows, config_.train);
    std::string curve = csv_line({"epoch", "loss"});
    for (std::size_t e = 0; e < report.loss_per_epoch.size(); ++e)
        curve += csv_line({std::to_string(e), format_double(report.loss_per_epoch[e])});
    model.save(artifact_dir(dataset) / "fusion_model.json");
    write_text_file(artifact_dir(dataset) / "loss_curve.csv", curve);
    st.model = std::move(model);
}

EvalReport Experiment::run_pipeline(std::size_t dataset) {
    auto& st = state(dataset);
    const auto test_rows = scores(dataset).subset(split(dataset).test);
    return evaluate_fusion(fusion_model(dataset), test_rows, std::string(kPipelineMethod), st.schema.dataset);
}

namespace {

struct BaselineContext {
    Gateway& gateway;
    const PromptLibrary& prompts;
    const TaskSpec& task;
    const DatasetSchema& schema;
    const RunConfig& config;
    const FeatureSelectionResult* selection;
};

EvalReport run_baseline(BaselineKind kind, const BaselineContext& ctx, const std::vector<IncidentRecord>& train,
                        const std::vector<IncidentRecord>& test, std::uint64_t exemplar_seed) {
    const std::string method(to_string(kind));
    const auto dataset = ctx.schema.dataset;
    try {
        require_supported(kind);
        switch (kind) {
            case BaselineKind::KShot:
            case BaselineKind::CoT: {
                PromptBaselineConfig pc;
                pc.mode = kind == BaselineKind::KShot ? PromptMode::KShot : PromptMode::CoT;
                pc.shots = ctx.config.shots;
                pc.exemplar_seed = exemplar_seed;
                pc.strict = ctx.config.assessment.strict;
                pc.narrative_budget = ctx.config.assessment.narrative_budget;
                PromptBaseline baseline(ctx.gateway, ctx.prompts, ctx.task, ctx.schema, train, pc);
                std::vector<int> labels;
                for (const auto& r : test) labels.push_back(r.severity);
                const auto predictions = baseline.predict_all(test);
                return EvalReport::from_predictions(method, dataset, predictions, labels, kNumSeverityLevels);
            }
            case BaselineKind::FeatureMlp:
                return feature_mlp(train, test, ctx.schema, nullptr, ctx.config.train, method);
            case BaselineKind::FeatureMlpSelected:
                return feature_mlp(train, test, ctx.schema, &ctx.selection->selected, ctx.config.train, method);
            case BaselineKind::Ologit:
                return ologit_baseline(train, test, ctx.schema, ctx.config.ologit, method);
            case BaselineKind::AutoGen:
                break;
        }
    } catch (const Error& e) {
        if (e.code() != ErrorCode::UnsupportedBaseline && e.code() != ErrorCode::NotConverged) throw;
        log_warn(method + " reported as n/a: " + strip_code(e));
        return EvalReport::unavailable(method, dataset, strip_code(e));
    }
    throw Error(ErrorCode::UnsupportedBaseline, method);
}

}  // namespace

void Experiment::evaluate(std::size_t dataset) {
    auto& st = state(dataset);
    const auto train_records = select_records(records(dataset), split(dataset).train);
    const auto test_records = select_records(records(dataset), split(dataset).test);
    const auto* sel = std::find(config_.baselines.begin(), config_.baselines.end(), BaselineKind::FeatureMlpSelected) !=
                              config_.baselines.end()
                          ? &selection(dataset)
                          : nullptr;
    BaselineContext ctx{*gateway_, prompts_, st.task, st.schema, config_, sel};

    std::vector<EvalReport> reports{run_pipeline(dataset)};
    for (auto kind : config_.baselines) reports.push_back(run_baseline(kind, ctx, train_records, test_records, config_.seed));
    for (auto& r : reports) {
        r.validate();
        write_text_file(report_dir(dataset) / ("eval_" + r.method + ".json"), r.to_json_text());
        st.evals[r.method] = std::move(r);
    }
}

std::vector<RobustnessReport> Experiment::run_robustness(std::size_t dataset, int k) {
    if (k < 2) throw Error(ErrorCode::InvalidArgument, "robustness needs at least 2 splits");
    auto& st = state(dataset);
    const auto& recs = records(dataset);
    const auto& table = scores(dataset);
    const auto* sel = std::find(config_.baselines.begin(), config_.baselines.end(), BaselineKind::FeatureMlpSelected) !=
                              config_.baselines.end()
                          ? &selection(dataset)
                          : nullptr;
    BaselineContext ctx{*gateway_, prompts_, st.task, st.schema, config_, sel};

    const auto methods = method_order();
    std::map<std::string, RobustnessReport> partial;
    for (const auto& m : methods) partial[m].method = m;

    for (int i = 0; i < k; ++i) {
        const auto seed = config_.seed + static_cast<std::uint64_t>(i);
        const auto s = stratified_split(recs, config_.robustness.ratio, seed);
        const auto train_records = select_records(recs, s.train);
        const auto test_records = select_records(recs, s.test);
        // Agents are fixed across splits; the digest records that the same score table was used.
        const auto digest = sha256_hex(table.to_csv());

        auto add = [&](const EvalReport& r) {
            auto& rep = partial[r.method];
            rep.seeds.push_back(seed);
            rep.score_digests.push_back(digest);
            if (!r.available) {
                rep.available = false;
                if (rep.note.empty()) rep.note = "split seed " + std::to_string(seed) + ": " + r.note;
                return;
            }
            rep.accuracies.push_back(r.accuracy);
            rep.macro_f1s.push_back(r.macro_f1);
        };

        const auto [model, report] = fit_fusion(table.subset(s.train), config_.train);
        add(evaluate_fusion(model, table.subset(s.test), std::string(kPipelineMethod), st.schema.dataset));
        for (auto kind : config_.baselines) add(run_baseline(kind, ctx, train_records, test_records, seed));
    }

    std::vector<RobustnessReport> out;
    for (const auto& m : methods) {
        auto rep = std::move(partial[m]);
        if (rep.available) {
            rep.mean = sample_mean(rep.accuracies);
            rep.std = sample_std(rep.accuracies);
        } else {
            rep.accuracies.clear();
            rep.macro_f1s.clear();
        }
        out.push_back(std::move(rep));
    }
    return out;
}

void Experiment::robustness(std::size_t dataset) {
    const auto reports = run_robustness(dataset, config_.robustness.splits);
    std::string summary = csv_line({"method", "k", "mean_accuracy", "std_accuracy", "note"});
    std::string per_split = csv_line({"method", "split", "seed", "accuracy", "macro_f1", "score_digest"});
    std::string js = "[\n";
    for (std::size_t i = 0; i < reports.size(); ++i) {
        const auto& r = reports[i];
        summary += csv_line({r.method, std::to_string(r.seeds.size()), r.available ? format_double(r.mean) : "n/a",
                             r.available ? format_double(r.std) : "n/a", r.note});
        for (std::size_t s = 0; s < r.accuracies.size(); ++s)
            per_split += csv_line({r.method, std::to_string(s), std::to_string(r.seeds[s]), format_double(r.accuracies[s]),
                                   format_double(r.macro_f1s[s]), r.score_digests[s]});
        js += r.to_json_text();
        if (i + 1 < reports.size()) js += ",\n";
    }
    js += "]\n";
    const auto dir = report_dir(dataset);
    write_text_file(dir / "robustness.csv", summary);
    write_text_file(dir / "robustness_splits.csv", per_split);
    write_text_file(dir / "robustness.json", js);
}

std::vector<AblationResult> Experiment::run_ablation(std::size_t dataset, const std::vector<std::string>& variants) {
    auto& st = state(dataset);
    const auto& recs = records(dataset);
    const auto& s = split(dataset);

    auto finish = [&](const std::string& variant, const ScoreTable& table, std::uint64_t calls, std::size_t assessed) {
        const auto [model, report] = fit_fusion(table.subset(s.train), config_.train);
        AblationResult r;
        r.variant = variant;
        r.report = evaluate_fusion(model, table.subset(s.test), variant, st.schema.dataset);
        r.input_dim = model.input_dim;
        r.category_order = table.category_order;
        r.evaluator_calls = calls;
        r.records_assessed = assessed;
        return r;
    };
    auto reassess = [&](const std::string& variant, const CategoryAssignment& assign) {
        SeverityAssessmentTeam team(*gateway_, prompts_, st.task, st.schema, assign, config_.assessment);
        team.set_exemplar_pool(select_records(recs, s.train));
        const auto table = ScoreTable::from_vectors(team.assess_batch(recs), recs);
        const auto dir = artifact_dir(dataset) / "ablation" / slug(variant);
        write_text_file(dir / "categories.json", assign.to_json_text());
        table.save(dir / "scores.csv");
        return finish(variant, table, team.evaluator_calls(), recs.size());
    };

    std::vector<AblationResult> out;
    for (const auto& variant : variants) {
        if (!valid_ablation(variant)) throw Error(ErrorCode::InvalidArgument, "unknown ablation '" + variant + "'");
        if (variant == "full") {
            out.push_back(finish(variant, scores(dataset), 0, 0));
        } else if (variant == "no_feature_selection") {
            DataProcessingTeam team(*gateway_, prompts_, st.task);
            const auto all = DataProcessingTeam::select_all(st.schema.variables);
            out.push_back(reassess(variant, team.organize_categories(all, config_.categories)));
        } else if (variant == "no_category_organizer") {
            out.push_back(reassess(variant, DataProcessingTeam::single_category(selection(dataset))));
        } else {
            const auto name = variant.substr(std::string("drop_category:").size());
            out.push_back(finish(variant, scores(dataset).drop_category(name), 0, 0));
        }
    }
    return out;
}

void Experiment::ablate(std::size_t dataset) {
    const auto results = run_ablation(dataset, config_.ablations);
    std::string table = csv_line({"variant", "input_dim", "categories", "accuracy", "macro_f1", "evaluator_calls", "records_assessed"});
    for (const auto& r : results) {
        std::string cats;
        for (const auto& c : r.category_order) cats += (cats.empty() ? "" : ";") + c;
        table += csv_line({r.variant, std::to_string(r.input_dim), cats, format_double(r.report.accuracy),
                           format_double(r.report.macro_f1), std::to_string(r.evaluator_calls),
                           std::to_string(r.records_assessed)});
        write_text_file(report_dir(dataset) / "ablation" / (slug(r.variant) + ".json"), r.report.to_json_text());
    }
    write_text_file(report_dir(dataset) / "ablation.csv", table);
}

void Experiment::stats(std::size_t dataset) {
    auto& st = state(dataset);
    const auto& recs = records(dataset);
    write_text_file(report_dir(dataset) / "counts.csv", summarize(recs, st.schema).to_csv());
    write_text_file(report_dir(dataset) / "association.csv", association_matrix(recs, st.schema, true).to_csv());
}

std::string Experiment::manifest_json() const {
    ordered_json doc;
    doc["config_digest"] = config_.digest;
    doc["backend"] = backend_->identity();
    doc["model"] = config_.backend.model;
    doc["seed"] = config_.seed;
    doc["split"] = {{"train", config_.split.train}, {"test", config_.split.test}, {"seed", config_.seed}};
    doc["train"] = {{"learning_rate", config_.train.learning_rate},
                    {"epochs", config_.train.epochs},
                    {"hidden", config_.train.hidden_sizes},
                    {"seed", config_.train.seed}};
    doc["exemplar_seed"] = config_.seed;
    std::vector<std::uint64_t> seeds;
    for (int i = 0; i < config_.robustness.splits; ++i) seeds.push_back(config_.seed + static_cast<std::uint64_t>(i));
    doc["robustness"] = {{"splits", config_.robustness.splits},
                         {"train", config_.robustness.ratio.train},
                         {"test", config_.robustness.ratio.test},
                         {"seeds", seeds},
                         {"std_estimator", "sample (n - 1)"}};
    doc["datasets"] = ordered_json::array();
    for (const auto& d : config_.datasets) doc["datasets"].push_back(d.name);
    doc["methods"] = method_order();
    doc["macro_f1_convention"] = "mean over classes present in the labels; unpredicted supported classes count as 0";
    return doc.dump(2) + "\n";
}

void Experiment::report() {
    std::vector<EvalReport> all;
    for (std::size_t d = 0; d < states_.size(); ++d)
        for (auto& r : evaluations(d)) all.push_back(std::move(r));
    emit_report(all, config_.out / "reports", manifest_json());
}

}  // namespace sevagent
