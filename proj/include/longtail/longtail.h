/* longtail: adaptive logit adjustment losses for long-tailed classification.
 *
 * C API over the C++ core. All functions return lt_status; LT_OK means
 * success, anything else leaves a thread-local message readable via
 * lt_last_error(). Returned char* buffers are owned by the caller and must
 * be released with lt_string_free(). Handles are opaque and freed with
 * their matching *_free function.
 *
 * Structured inputs (dataset recipes, loss specs, train and experiment
 * configs) are JSON strings; the schemas are documented in the project
 * README.
 */

#ifndef LONGTAIL_LONGTAIL_H
#define LONGTAIL_LONGTAIL_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define LONGTAIL_API __declspec(dllexport)
#else
#define LONGTAIL_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum lt_status {
    LT_OK = 0,
    LT_ERR_INVALID_ARG = 1,
    LT_ERR_INVALID_SPEC = 2,
    LT_ERR_NUMERIC = 3,
    LT_ERR_DEGENERATE_NORM = 4,
    LT_ERR_DIVERGENCE = 5,
    LT_ERR_IO = 6,
    LT_ERR_MISSING_ARTIFACT = 7,
    LT_ERR_INTERNAL = 8
} lt_status;

LONGTAIL_API const char* lt_version(void);

/* Message for the most recent failure on this thread; never NULL. */
LONGTAIL_API const char* lt_last_error(void);

LONGTAIL_API void lt_string_free(char* s);

typedef struct lt_dataset lt_dataset;
typedef struct lt_model lt_model;

/* ---- datasets -------------------------------------------------------- */

/* Generates the (train, test) pair from a dataset recipe JSON. Thresholds
 * define the many/medium/few partition; pass 0,0 for the defaults (100, 20).
 * Same recipe (including its seed) always reproduces identical data. */
LONGTAIL_API lt_status lt_dataset_generate(const char* spec_json, int64_t many_threshold,
                                           int64_t few_threshold, lt_dataset** train_out,
                                           lt_dataset** test_out);

LONGTAIL_API lt_status lt_dataset_load(const char* csv_path, const char* sidecar_path,
                                       lt_dataset** out);

/* CSV: one row per sample, feature columns then label. The sidecar JSON
 * carries recipe, counts, prototypes and partition. */
LONGTAIL_API lt_status lt_dataset_save(const lt_dataset* ds, const char* csv_path,
                                       const char* sidecar_path);

LONGTAIL_API lt_status lt_dataset_num_samples(const lt_dataset* ds, size_t* out);
LONGTAIL_API lt_status lt_dataset_num_classes(const lt_dataset* ds, size_t* out);
LONGTAIL_API lt_status lt_dataset_feature_dim(const lt_dataset* ds, size_t* out);

/* counts_out must hold num_classes entries. */
LONGTAIL_API lt_status lt_dataset_counts(const lt_dataset* ds, int64_t* counts_out);

/* Summary JSON: counts, partition, sizes, dataset hash. */
LONGTAIL_API lt_status lt_dataset_info(const lt_dataset* ds, char** json_out);

LONGTAIL_API void lt_dataset_free(lt_dataset* ds);

/* ---- loss kernels ----------------------------------------------------- */

/* qf_out[j] = 1 / log(counts[j] / min(counts) + 1), natural log. */
LONGTAIL_API lt_status lt_quantity_factor(const int64_t* counts, size_t num_classes,
                                          double* qf_out);

/* (1 - cos_target) / 2; cos_target must be within 1e-9 of [-1, 1]. */
LONGTAIL_API lt_status lt_difficulty_factor(double cos_target, double* df_out);

LONGTAIL_API lt_status lt_ala_adjust(double cos_target, double qf_target, double* out);

/* a_out[j] = K / counts[j]^(1/4), K chosen so the largest entry equals
 * max_margin. */
LONGTAIL_API lt_status lt_ldam_adjust(const int64_t* counts, size_t num_classes,
                                      double max_margin, double* a_out);

/* Evaluates loss_json (e.g. {"kind":"ala","scale":30.0}) on one sample.
 * counts may be NULL for kinds that do not use class counts. grad_out
 * (num_classes entries) and adjusting_out may be NULL. */
LONGTAIL_API lt_status lt_loss_eval(const char* loss_json, const double* logits,
                                    size_t num_classes, size_t target, const int64_t* counts,
                                    double* loss_out, double* grad_out, double* adjusting_out);

/* ---- model ------------------------------------------------------------ */

/* Cosine classifier; hidden_dim 0 selects the identity embedding. */
LONGTAIL_API lt_status lt_model_init(size_t feature_dim, size_t num_classes, size_t hidden_dim,
                                     uint64_t seed, lt_model** out);

/* logits_out must hold num_classes entries; every logit is a cosine. */
LONGTAIL_API lt_status lt_model_forward(const lt_model* model, const double* x, size_t dim,
                                        double* logits_out);

/* Gradients of sum_j upstream[j] * logit[j]. grad_class_out holds
 * num_classes * embed_dim entries (row-major); grad_embed_out holds
 * hidden_dim * feature_dim entries and may be NULL when hidden_dim is 0. */
LONGTAIL_API lt_status lt_model_backward(const lt_model* model, const double* x, size_t dim,
                                         const double* upstream, size_t num_classes,
                                         double* grad_class_out, double* grad_embed_out);

LONGTAIL_API lt_status lt_model_save(const lt_model* model, const char* path);
LONGTAIL_API lt_status lt_model_load(const char* path, lt_model** out);
LONGTAIL_API void lt_model_free(lt_model* model);

/* ---- training and evaluation ------------------------------------------ */

/* Mini-batch SGD per train_config_json; deterministic for a fixed config.
 * On success the model is trained in place and *trace_csv_out (optional)
 * receives the per-epoch trace as CSV. */
LONGTAIL_API lt_status lt_train(lt_model* model, const lt_dataset* train_set,
                                const char* train_config_json, char** trace_csv_out);

/* Argmax cosine inference plus the paper-protocol report (per-class and
 * many/medium/few/all accuracy, hard/easy counts, probability curves) as
 * JSON. */
LONGTAIL_API lt_status lt_evaluate(const lt_model* model, const lt_dataset* test_set,
                                   const char* loss_json, char** metrics_json_out);

/* ---- experiment commands (the CLI surface) ----------------------------- */

/* config_json is an experiment config; out_dir, when non-NULL, overrides its
 * output_dir. Each command returns a summary (JSON, or markdown for
 * compare). */
LONGTAIL_API lt_status lt_cmd_gen_data(const char* config_json, const char* out_dir,
                                       char** summary_json_out);
LONGTAIL_API lt_status lt_cmd_train(const char* config_json, const char* out_dir,
                                    char** summary_json_out);
LONGTAIL_API lt_status lt_cmd_eval(const char* checkpoint_path, const char* data_dir,
                                   const char* loss_json, const char* out_dir,
                                   char** metrics_json_out);
LONGTAIL_API lt_status lt_cmd_compare(const char* config_json, const char* out_dir,
                                      int table_only, char** table_markdown_out);
LONGTAIL_API lt_status lt_cmd_trace(const char* run_dir, const char* out_dir,
                                    char** summary_json_out);

#ifdef __cplusplus
}
#endif

#endif /* LONGTAIL_LONGTAIL_H */
