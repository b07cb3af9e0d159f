#ifndef SEVAGENT_H
#define SEVAGENT_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define SA_API __declspec(dllexport)
#else
#define SA_API __attribute__((visibility("default")))
#endif

typedef enum sa_status {
    SA_OK = 0,
    SA_ERR_FILE_UNREADABLE,
    SA_ERR_SCHEMA_MISMATCH,
    SA_ERR_VALUE_OUT_OF_DOMAIN,
    SA_ERR_MISSING_SEVERITY,
    SA_ERR_UNSPLITTABLE,
    SA_ERR_INVALID_SCHEMA,
    SA_ERR_LEAKAGE_GUARD,
    SA_ERR_TRANSPORT,
    SA_ERR_RATE_LIMITED,
    SA_ERR_MALFORMED,
    SA_ERR_CREDENTIAL_MISSING,
    SA_ERR_NO_FIXTURE,
    SA_ERR_UNPARSEABLE_DECISION,
    SA_ERR_UNASSIGNED_VARIABLE,
    SA_ERR_EMPTY_ASSIGNMENT,
    SA_ERR_UNPARSEABLE_SCORE,
    SA_ERR_DIMENSION_MISMATCH,
    SA_ERR_NON_FINITE_GRADIENT,
    SA_ERR_LENGTH_MISMATCH,
    SA_ERR_EMPTY_INPUT,
    SA_ERR_NOT_CONVERGED,
    SA_ERR_OUT_OF_RANGE,
    SA_ERR_ZERO_VARIANCE,
    SA_ERR_DEGENERATE_TABLE,
    SA_ERR_UNKNOWN_CATEGORY,
    SA_ERR_UNWRITABLE_OUTPUT,
    SA_ERR_UNSUPPORTED_BASELINE,
    SA_ERR_INVALID_CONFIG,
    SA_ERR_INVALID_ARGUMENT,
    SA_ERR_INTERNAL = 100
} sa_status;

typedef struct sa_experiment sa_experiment;
typedef struct sa_fusion_model sa_fusion_model;

/* Library version, e.g. "0.1.0". */
SA_API const char* sa_version(void);

/* Message of the last failed call on this thread ("" if none). */
SA_API const char* sa_last_error(void);

/* Symbolic name of a status code, e.g. "NotConverged". */
SA_API const char* sa_status_name(sa_status status);

/* ---- experiments ------------------------------------------------------ */

typedef struct sa_overrides {
    const char* backend; /* "mock", "remote" or NULL */
    int has_seed;
    uint64_t seed;
    const char* out_dir; /* NULL keeps the config value */
    int strict;          /* -1 keep, 0 lenient, 1 strict */
} sa_overrides;

SA_API void sa_overrides_init(sa_overrides* overrides);

SA_API size_t sa_stage_count(void);
SA_API const char* sa_stage_name(size_t index);

/* overrides may be NULL. On success *out owns a handle to release with
   sa_experiment_close. */
SA_API sa_status sa_experiment_open(const char* config_path, const sa_overrides* overrides, sa_experiment** out);
SA_API void sa_experiment_close(sa_experiment* experiment);

SA_API sa_status sa_experiment_run_stage(sa_experiment* experiment, const char* stage);
SA_API sa_status sa_experiment_run_all(sa_experiment* experiment);

/* Valid until the handle is closed. */
SA_API const char* sa_experiment_output_dir(const sa_experiment* experiment);
SA_API const char* sa_experiment_config_digest(const sa_experiment* experiment);

typedef struct sa_gateway_stats {
    uint64_t requests;
    uint64_t cache_hits;
    uint64_t backend_calls;
    uint64_t retries;
} sa_gateway_stats;

SA_API sa_status sa_experiment_gateway_stats(const sa_experiment* experiment, sa_gateway_stats* out);

/* ---- fusion model ----------------------------------------------------- */

typedef struct sa_train_config {
    double learning_rate;
    int epochs;
    uint64_t seed;
    const size_t* hidden_sizes;
    size_t hidden_count;
} sa_train_config;

/* Defaults: learning_rate 0.05, 500 epochs, seed 0, one hidden layer of 32. */
SA_API void sa_train_config_init(sa_train_config* config);

/* inputs: n rows of d values, row-major; labels 1..num_classes. */
SA_API sa_status sa_fusion_train(const double* inputs, const int* labels, size_t n, size_t d, size_t num_classes,
                                 const sa_train_config* config, sa_fusion_model** out);
SA_API sa_status sa_fusion_predict(const sa_fusion_model* model, const double* input, size_t d, int* label);
SA_API size_t sa_fusion_input_dim(const sa_fusion_model* model);
SA_API sa_status sa_fusion_save(const sa_fusion_model* model, const char* path);
SA_API sa_status sa_fusion_load(const char* path, sa_fusion_model** out);
SA_API void sa_fusion_free(sa_fusion_model* model);

/* ---- metrics ---------------------------------------------------------- */

SA_API sa_status sa_macro_f1(const int* predictions, const int* labels, size_t n, int num_classes, double* out);
SA_API sa_status sa_spearman(const double* x, const double* y, size_t n, double* out);
SA_API sa_status sa_cramers_v(const char* const* x, const char* const* y, size_t n, double* out);

#ifdef __cplusplus
}
#endif

#endif
