// Command-line front end. Talks to the library only through sevagent.h.

#include "sevagent/sevagent.h"

#include <CLI11.hpp>

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

namespace {

struct Options {
    std::string config;
    std::string stage;
    std::string backend;
    std::optional<std::uint64_t> seed;
    std::string out;
    int strict = -1;
};

int fail(sa_status status) {
    std::fprintf(stderr, "error [%s]: %s\n", sa_status_name(status), sa_last_error());
    return status == SA_ERR_INVALID_CONFIG || status == SA_ERR_INVALID_ARGUMENT ? 2 : 1;
}

int execute(const Options& opt, const std::vector<std::string>& stages) {
    sa_overrides ov;
    sa_overrides_init(&ov);
    if (!opt.backend.empty()) ov.backend = opt.backend.c_str();
    if (opt.seed) {
        ov.has_seed = 1;
        ov.seed = *opt.seed;
    }
    if (!opt.out.empty()) ov.out_dir = opt.out.c_str();
    ov.strict = opt.strict;

    sa_experiment* exp = nullptr;
    if (auto st = sa_experiment_open(opt.config.c_str(), &ov, &exp); st != SA_OK) return fail(st);

    int code = 0;
    for (const auto& stage : stages) {
        const auto st = stage == "run" ? sa_experiment_run_all(exp) : sa_experiment_run_stage(exp, stage.c_str());
        if (st != SA_OK) {
            code = fail(st);
            break;
        }
        std::fprintf(stderr, "stage %s done\n", stage.c_str());
    }

    sa_gateway_stats stats{};
    if (sa_experiment_gateway_stats(exp, &stats) == SA_OK)
        std::fprintf(stderr, "gateway: %llu requests, %llu cache hits, %llu backend calls, %llu retries\n",
                     static_cast<unsigned long long>(stats.requests), static_cast<unsigned long long>(stats.cache_hits),
                     static_cast<unsigned long long>(stats.backend_calls),
                     static_cast<unsigned long long>(stats.retries));
    if (code == 0) std::printf("%s\n", sa_experiment_output_dir(exp));
    sa_experiment_close(exp);
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Crash-severity assessment with category agents and an MLP fusion model"};
    app.set_version_flag("--version", std::string(sa_version()));
    app.require_subcommand(0, 1);

    Options opt;
    std::vector<std::string> stage_names;
    for (size_t i = 0; i < sa_stage_count(); ++i) stage_names.emplace_back(sa_stage_name(i));
    auto with_run = stage_names;
    with_run.emplace_back("run");

    app.add_option("--config", opt.config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
    app.add_option("--stage", opt.stage, "Stage to run (same as the subcommand)")->check(CLI::IsMember(with_run));
    app.add_option("--backend", opt.backend, "Override the backend")->check(CLI::IsMember({"mock", "remote"}));
    app.add_option("--seed", opt.seed, "Override the base seed");
    app.add_option("--out", opt.out, "Override the output directory");
    app.add_flag_callback("--strict", [&] { opt.strict = 1; }, "Fail on unparseable agent answers");
    app.add_flag_callback("--lenient", [&] { opt.strict = 0; }, "Fall back to neutral scores on unparseable answers");

    std::vector<CLI::App*> commands;
    for (const auto& name : with_run) {
        auto* sub = app.add_subcommand(name, name == "run" ? "Run every stage" : "Run the " + name + " stage");
        sub->fallthrough();
        commands.push_back(sub);
    }

    CLI11_PARSE(app, argc, argv);

    std::string chosen = opt.stage;
    for (auto* sub : commands)
        if (sub->parsed()) {
            if (!chosen.empty() && chosen != sub->get_name()) {
                std::fprintf(stderr, "error: --stage %s conflicts with subcommand %s\n", chosen.c_str(),
                             sub->get_name().c_str());
                return 2;
            }
            chosen = sub->get_name();
        }
    if (chosen.empty()) chosen = "run";
    return execute(opt, {chosen});
}
