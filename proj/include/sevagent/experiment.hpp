#pragma once

#include "sevagent/assessment.hpp"
#include "sevagent/baselines.hpp"
#include "sevagent/fusion.hpp"
#include "sevagent/llm_gateway.hpp"
#include "sevagent/metrics.hpp"
#include "sevagent/preprocessing.hpp"
#include "sevagent/schema.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sevagent {

struct DatasetConfig {
    std::string name;
    std::filesystem::path data;
    std::filesystem::path schema;
    std::optional<std::size_t> balance_cap;  // records kept per severity level
};

struct BackendConfig {
    BackendKind kind = BackendKind::Mock;
    std::filesystem::path rules;  // mock rules file
    std::string base_url;         // remote endpoint
    std::string model = "mock";
    int timeout_s = 120;
    std::size_t max_in_flight = 4;
    int max_attempts = 4;
    int max_tokens = 512;
};

struct RobustnessConfig {
    int splits = 10;
    SplitRatio ratio{4, 1};
};

/// Everything a run needs. Relative paths resolve against the config file's
/// directory. All randomness derives from `seed`.
struct RunConfig {
    std::vector<DatasetConfig> datasets;
    BackendConfig backend;
    std::filesystem::path cache_path;  // empty: in-memory cache only
    std::optional<std::filesystem::path> template_dir;
    std::optional<std::string> task;
    std::vector<std::string> categories;
    TrainConfig train;
    SplitRatio split;
    std::uint64_t seed = 0;
    std::vector<BaselineKind> baselines;
    std::size_t shots = 10;
    std::vector<std::string> ablations;
    RobustnessConfig robustness;
    AssessmentOptions assessment;
    OlogitOptions ologit;
    std::filesystem::path out;

    /// SHA-256 of the canonical effective configuration.
    std::string digest;

    struct Overrides {
        std::optional<BackendKind> backend;
        std::optional<std::uint64_t> seed;
        std::optional<std::filesystem::path> out;
        std::optional<bool> strict;
    };

    static RunConfig from_json_text(std::string_view text, const std::filesystem::path& base_dir,
                                    const Overrides& overrides = {});
    static RunConfig load(const std::filesystem::path& path, const Overrides& overrides = {});

    /// Throws Error(InvalidConfig) for missing files or inconsistent values.
    void validate() const;
};

struct RobustnessReport {
    std::string method;
    std::vector<std::uint64_t> seeds;
    std::vector<double> accuracies;
    std::vector<double> macro_f1s;
    std::vector<std::string> score_digests;  // ScoreVector table digest per split
    double mean = 0.0;
    double std = 0.0;  // sample (n - 1) standard deviation
    bool available = true;
    std::string note;

    static RobustnessReport from_accuracies(std::string method, std::vector<std::uint64_t> seeds,
                                            std::vector<double> accuracies);
    std::string to_json_text() const;
};

double sample_mean(const std::vector<double>& values);
double sample_std(const std::vector<double>& values);

struct AblationResult {
    std::string variant;
    EvalReport report;
    std::size_t input_dim = 0;
    std::vector<std::string> category_order;
    std::uint64_t evaluator_calls = 0;  // new evaluator invocations for this variant
    std::size_t records_assessed = 0;
};

/// Method slugs used in file names and tables.
inline constexpr std::string_view kPipelineMethod = "transportagent";

/// Writes comparison.csv, distributions/<dataset>_<method>.csv and
/// manifest.json under `directory`. Throws Error(UnwritableOutput).
void emit_report(const std::vector<EvalReport>& reports, const std::filesystem::path& directory,
                 const std::string& manifest_json);

/// Stage runner. Every stage persists its artifacts under out/artifacts and
/// out/reports; a stage reloads the artifacts of earlier stages when they
/// were produced under the same configuration digest and recomputes them
/// otherwise.
class Experiment {
public:
    explicit Experiment(RunConfig config);
    ~Experiment();

    static const std::vector<std::string>& stage_names();

    /// Runs one stage for every dataset. Errors are rethrown with the stage
    /// name in the message; artifacts written so far stay in place.
    void run_stage(std::string_view stage);
    /// ingest through evaluate, then robustness / ablate when configured,
    /// then stats and report.
    void run_all();

    // Per-dataset entry points (index into config().datasets).
    EvalReport run_pipeline(std::size_t dataset);
    std::vector<RobustnessReport> run_robustness(std::size_t dataset, int k);
    std::vector<AblationResult> run_ablation(std::size_t dataset, const std::vector<std::string>& variants);

    const RunConfig& config() const { return config_; }
    Gateway& gateway() { return *gateway_; }
    std::filesystem::path artifact_dir(std::size_t dataset) const;
    std::filesystem::path report_dir(std::size_t dataset) const;

    // Loaded or computed state, for inspection.
    const std::vector<IncidentRecord>& records(std::size_t dataset);
    const DataSplit& split(std::size_t dataset);
    const FeatureSelectionResult& selection(std::size_t dataset);
    const CategoryAssignment& assignment(std::size_t dataset);
    const ScoreTable& scores(std::size_t dataset);
    const DatasetSchema& schema(std::size_t dataset);
    std::vector<EvalReport> evaluations(std::size_t dataset);
    std::string manifest_json() const;

private:
    struct DatasetState;

    DatasetState& state(std::size_t dataset);
    void ingest(std::size_t dataset);
    void select(std::size_t dataset);
    void organize(std::size_t dataset);
    void assess(std::size_t dataset);
    void train_fusion(std::size_t dataset);
    void evaluate(std::size_t dataset);
    void stats(std::size_t dataset);
    void robustness(std::size_t dataset);
    void ablate(std::size_t dataset);
    void report();

    const FusionModel& fusion_model(std::size_t dataset);
    bool artifacts_current() const;
    void stamp_artifacts() const;
    std::vector<std::string> method_order() const;

    RunConfig config_;
    PromptLibrary prompts_;
    std::shared_ptr<ChatBackend> backend_;
    std::unique_ptr<Gateway> gateway_;
    std::vector<std::unique_ptr<DatasetState>> states_;
    bool artifacts_current_ = false;
};

}  // namespace sevagent
