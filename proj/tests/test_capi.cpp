#include <doctest.h>

#include "sevagent/sevagent.h"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& tag) {
    auto p = fs::temp_directory_path() / ("sevagent_capi_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const fs::path kGoldenConfig = fs::path(SEVAGENT_FIXTURES) / "golden" / "config.json";

}  // namespace

TEST_CASE("version and status names") {
    CHECK(std::string(sa_version()) == "0.1.0");
    CHECK(std::string(sa_status_name(SA_OK)) == "Ok");
    CHECK(std::string(sa_status_name(SA_ERR_NOT_CONVERGED)) == "NotConverged");
    CHECK(sa_stage_count() == 10);
    CHECK(std::string(sa_stage_name(0)) == "ingest");
    CHECK(sa_stage_name(99) == nullptr);
}

TEST_CASE("fusion through the C interface") {
    // Class determined by which coordinate is largest.
    std::vector<double> x;
    std::vector<int> y;
    for (int i = 0; i < 80; ++i) {
        const int cls = i % 4;
        for (int j = 0; j < 4; ++j) x.push_back(j == cls ? 4.0 : 1.0 + 0.01 * (i % 7));
        y.push_back(cls + 1);
    }
    sa_train_config cfg;
    sa_train_config_init(&cfg);
    CHECK(cfg.epochs == 500);
    const size_t hidden[] = {8};
    cfg.hidden_sizes = hidden;
    cfg.hidden_count = 1;
    cfg.learning_rate = 0.1;
    cfg.seed = 3;

    sa_fusion_model* model = nullptr;
    REQUIRE(sa_fusion_train(x.data(), y.data(), y.size(), 4, 4, &cfg, &model) == SA_OK);
    CHECK(sa_fusion_input_dim(model) == 4);
    int correct = 0;
    for (size_t i = 0; i < y.size(); ++i) {
        int label = 0;
        REQUIRE(sa_fusion_predict(model, &x[i * 4], 4, &label) == SA_OK);
        correct += label == y[i];
    }
    CHECK(correct == static_cast<int>(y.size()));

    int label = 0;
    CHECK(sa_fusion_predict(model, x.data(), 3, &label) == SA_ERR_DIMENSION_MISMATCH);
    CHECK(std::string(sa_last_error()).size() > 0);

    const auto dir = scratch("fusion");
    const auto path = (dir / "model.json").string();
    REQUIRE(sa_fusion_save(model, path.c_str()) == SA_OK);
    sa_fusion_model* loaded = nullptr;
    REQUIRE(sa_fusion_load(path.c_str(), &loaded) == SA_OK);
    int a = 0, b = 0;
    sa_fusion_predict(model, &x[8], 4, &a);
    sa_fusion_predict(loaded, &x[8], 4, &b);
    CHECK(a == b);
    CHECK(sa_fusion_load((dir / "missing.json").string().c_str(), &loaded) == SA_ERR_FILE_UNREADABLE);
    sa_fusion_free(loaded);
    sa_fusion_free(model);
    sa_fusion_free(nullptr);
    fs::remove_all(dir);
}

TEST_CASE("metrics through the C interface") {
    const int pred[] = {1, 2, 2, 2};
    const int truth[] = {1, 1, 2, 2};
    double f1 = 0;
    REQUIRE(sa_macro_f1(pred, truth, 4, 4, &f1) == SA_OK);
    CHECK(std::fabs(f1 - 11.0 / 15.0) < 1e-12);
    CHECK(sa_macro_f1(pred, truth, 0, 4, &f1) == SA_ERR_EMPTY_INPUT);

    const double xs[] = {1, 2, 3, 4};
    const double ys[] = {8, 6, 4, 2};
    double rho = 0;
    REQUIRE(sa_spearman(xs, ys, 4, &rho) == SA_OK);
    CHECK(rho == doctest::Approx(-1.0));

    const char* u[] = {"a", "a", "b", "b"};
    const char* v[] = {"x", "x", "x", "x"};
    double cv = 0;
    CHECK(sa_cramers_v(u, v, 4, &cv) == SA_ERR_DEGENERATE_TABLE);
    CHECK(sa_spearman(nullptr, ys, 4, &rho) == SA_ERR_INVALID_ARGUMENT);
}

TEST_CASE("experiment handle") {
    const auto dir = scratch("experiment");
    sa_overrides o;
    sa_overrides_init(&o);
    CHECK(o.strict == -1);
    const auto out = (dir / "out").string();
    o.out_dir = out.c_str();

    sa_experiment* e = nullptr;
    REQUIRE(sa_experiment_open(kGoldenConfig.string().c_str(), &o, &e) == SA_OK);
    CHECK(std::string(sa_experiment_output_dir(e)) == out);
    CHECK(std::string(sa_experiment_config_digest(e)).size() == 64);
    for (const char* stage : {"ingest", "select", "organize", "assess", "train", "evaluate"})
        REQUIRE(sa_experiment_run_stage(e, stage) == SA_OK);
    CHECK(slurp(dir / "out" / "reports" / "golden" / "eval_transportagent.json") ==
          slurp(fs::path(SEVAGENT_FIXTURES) / "golden" / "expected_eval.json"));

    sa_gateway_stats stats{};
    REQUIRE(sa_experiment_gateway_stats(e, &stats) == SA_OK);
    CHECK(stats.backend_calls > 0);
    CHECK(stats.requests == stats.cache_hits + stats.backend_calls);

    CHECK(sa_experiment_run_stage(e, "bake") == SA_ERR_INVALID_ARGUMENT);
    sa_experiment_close(e);

    sa_experiment* bad = nullptr;
    CHECK(sa_experiment_open((dir / "nope.json").string().c_str(), nullptr, &bad) != SA_OK);
    CHECK(bad == nullptr);
    CHECK(std::string(sa_last_error()).find("nope.json") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("command-line tool") {
    const auto dir = scratch("cli");
    const std::string cmd = std::string("\"") + SEVAGENT_CLI + "\" --config \"" + kGoldenConfig.string() + "\" --out \"" +
                            (dir / "out").string() + "\" run > \"" + (dir / "log.txt").string() + "\" 2>&1";
    CHECK(std::system(cmd.c_str()) == 0);
    CHECK(fs::is_regular_file(dir / "out" / "reports" / "comparison.csv"));
    CHECK(slurp(dir / "out" / "reports" / "golden" / "eval_transportagent.json") ==
          slurp(fs::path(SEVAGENT_FIXTURES) / "golden" / "expected_eval.json"));

    const std::string bad = std::string("\"") + SEVAGENT_CLI + "\" --config \"" + kGoldenConfig.string() +
                            "\" --out \"" + (dir / "out").string() + "\" --stage bake > /dev/null 2>&1";
    CHECK(std::system(bad.c_str()) != 0);
    fs::remove_all(dir);
}
