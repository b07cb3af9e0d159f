#include "sevagent/sevagent.h"

#include "sevagent/error.hpp"
#include "sevagent/experiment.hpp"
#include "sevagent/fusion.hpp"
#include "sevagent/metrics.hpp"

#include <memory>
#include <new>
#include <string>
#include <vector>

struct sa_experiment {
    std::unique_ptr<sevagent::Experiment> impl;
    std::string out_dir;
};

struct sa_fusion_model {
    sevagent::FusionModel model;
};

namespace {

thread_local std::string g_last_error;

static_assert(SA_ERR_INVALID_ARGUMENT == static_cast<int>(sevagent::ErrorCode::InvalidArgument) + 1,
              "sa_status must mirror ErrorCode");

sa_status to_status(sevagent::ErrorCode code) { return static_cast<sa_status>(static_cast<int>(code) + 1); }

template <class Fn>
sa_status guarded(Fn&& fn) {
    try {
        fn();
        g_last_error.clear();
        return SA_OK;
    } catch (const sevagent::Error& e) {
        g_last_error = e.what();
        return to_status(e.code());
    } catch (const std::bad_alloc&) {
        g_last_error = "out of memory";
        return SA_ERR_INTERNAL;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return SA_ERR_INTERNAL;
    }
}

void require(bool condition, const char* what) {
    if (!condition) throw sevagent::Error(sevagent::ErrorCode::InvalidArgument, what);
}

}  // namespace

extern "C" {

const char* sa_version(void) { return "0.1.0"; }

const char* sa_last_error(void) { return g_last_error.c_str(); }

const char* sa_status_name(sa_status status) {
    if (status == SA_OK) return "Ok";
    if (status == SA_ERR_INTERNAL) return "Internal";
    const int index = static_cast<int>(status) - 1;
    if (index < 0 || index > static_cast<int>(sevagent::ErrorCode::InvalidArgument)) return "Unknown";
    return sevagent::to_string(static_cast<sevagent::ErrorCode>(index)).data();
}

void sa_overrides_init(sa_overrides* overrides) {
    if (!overrides) return;
    overrides->backend = nullptr;
    overrides->has_seed = 0;
    overrides->seed = 0;
    overrides->out_dir = nullptr;
    overrides->strict = -1;
}

size_t sa_stage_count(void) { return sevagent::Experiment::stage_names().size(); }

const char* sa_stage_name(size_t index) {
    const auto& names = sevagent::Experiment::stage_names();
    return index < names.size() ? names[index].c_str() : nullptr;
}

sa_status sa_experiment_open(const char* config_path, const sa_overrides* overrides, sa_experiment** out) {
    return guarded([&] {
        require(config_path && out, "config path and output handle are required");
        *out = nullptr;
        sevagent::RunConfig::Overrides ov;
        if (overrides) {
            if (overrides->backend) ov.backend = sevagent::parse_backend_kind(overrides->backend);
            if (overrides->has_seed) ov.seed = overrides->seed;
            if (overrides->out_dir) ov.out = std::filesystem::path(overrides->out_dir);
            if (overrides->strict >= 0) ov.strict = overrides->strict != 0;
        }
        auto handle = std::make_unique<sa_experiment>();
        handle->impl = std::make_unique<sevagent::Experiment>(sevagent::RunConfig::load(config_path, ov));
        handle->out_dir = handle->impl->config().out.string();
        *out = handle.release();
    });
}

void sa_experiment_close(sa_experiment* experiment) { delete experiment; }

sa_status sa_experiment_run_stage(sa_experiment* experiment, const char* stage) {
    return guarded([&] {
        require(experiment && stage, "experiment and stage are required");
        experiment->impl->run_stage(stage);
    });
}

sa_status sa_experiment_run_all(sa_experiment* experiment) {
    return guarded([&] {
        require(experiment, "experiment is required");
        experiment->impl->run_all();
    });
}

const char* sa_experiment_output_dir(const sa_experiment* experiment) {
    return experiment ? experiment->out_dir.c_str() : "";
}

const char* sa_experiment_config_digest(const sa_experiment* experiment) {
    return experiment ? experiment->impl->config().digest.c_str() : "";
}

sa_status sa_experiment_gateway_stats(const sa_experiment* experiment, sa_gateway_stats* out) {
    return guarded([&] {
        require(experiment && out, "experiment and output are required");
        const auto s = experiment->impl->gateway().stats();
        out->requests = s.requests;
        out->cache_hits = s.cache_hits;
        out->backend_calls = s.backend_calls;
        out->retries = s.retries;
    });
}

void sa_train_config_init(sa_train_config* config) {
    if (!config) return;
    static const size_t default_hidden[] = {32};
    config->learning_rate = 0.05;
    config->epochs = 500;
    config->seed = 0;
    config->hidden_sizes = default_hidden;
    config->hidden_count = 1;
}

sa_status sa_fusion_train(const double* inputs, const int* labels, size_t n, size_t d, size_t num_classes,
                          const sa_train_config* config, sa_fusion_model** out) {
    return guarded([&] {
        require(inputs && labels && out && n > 0 && d > 0, "training data and output handle are required");
        *out = nullptr;
        sevagent::TrainConfig tc;
        if (config) {
            require(config->hidden_count == 0 || config->hidden_sizes, "hidden_sizes is null");
            tc.learning_rate = config->learning_rate;
            tc.epochs = config->epochs;
            tc.seed = config->seed;
            tc.hidden_sizes.assign(config->hidden_sizes, config->hidden_sizes + config->hidden_count);
        }
        std::vector<std::vector<double>> rows(n);
        for (size_t i = 0; i < n; ++i) rows[i].assign(inputs + i * d, inputs + (i + 1) * d);
        auto result = sevagent::train(rows, std::span<const int>(labels, n), num_classes, tc);
        *out = new sa_fusion_model{std::move(result.first)};
    });
}

sa_status sa_fusion_predict(const sa_fusion_model* model, const double* input, size_t d, int* label) {
    return guarded([&] {
        require(model && input && label, "model, input and label are required");
        if (d != model->model.input_dim)
            throw sevagent::Error(sevagent::ErrorCode::DimensionMismatch,
                                  "input has " + std::to_string(d) + " values, model expects " +
                                      std::to_string(model->model.input_dim));
        *label = sevagent::predict(model->model, std::span<const double>(input, d));
    });
}

size_t sa_fusion_input_dim(const sa_fusion_model* model) { return model ? model->model.input_dim : 0; }

sa_status sa_fusion_save(const sa_fusion_model* model, const char* path) {
    return guarded([&] {
        require(model && path, "model and path are required");
        model->model.save(path);
    });
}

sa_status sa_fusion_load(const char* path, sa_fusion_model** out) {
    return guarded([&] {
        require(path && out, "path and output handle are required");
        *out = nullptr;
        *out = new sa_fusion_model{sevagent::FusionModel::load(path)};
    });
}

void sa_fusion_free(sa_fusion_model* model) { delete model; }

sa_status sa_macro_f1(const int* predictions, const int* labels, size_t n, int num_classes, double* out) {
    return guarded([&] {
        require(out && (n == 0 || (predictions && labels)), "null argument");
        *out = sevagent::macro_f1(std::span<const int>(predictions, n), std::span<const int>(labels, n), num_classes);
    });
}

sa_status sa_spearman(const double* x, const double* y, size_t n, double* out) {
    return guarded([&] {
        require(out && (n == 0 || (x && y)), "null argument");
        *out = sevagent::spearman_rho(std::span<const double>(x, n), std::span<const double>(y, n));
    });
}

sa_status sa_cramers_v(const char* const* x, const char* const* y, size_t n, double* out) {
    return guarded([&] {
        require(out && (n == 0 || (x && y)), "null argument");
        std::vector<std::string> a, b;
        for (size_t i = 0; i < n; ++i) {
            require(x[i] && y[i], "null string");
            a.emplace_back(x[i]);
            b.emplace_back(y[i]);
        }
        *out = sevagent::cramers_v_corrected(a, b);
    });
}

}  // extern "C"
