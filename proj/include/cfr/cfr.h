#ifndef CFR_H
#define CFR_H

/*
 * C interface to the coarse-to-fine reasoning VQA engine.
 *
 * Objects are opaque handles created by *_load / cfr_train and released with
 * the matching *_free. Every fallible call returns a cfr_status; on failure
 * cfr_last_error() describes the problem (per thread, valid until the next
 * call on that thread). Strings returned through char** are owned by the
 * caller and released with cfr_free_string.
 *
 * Option arguments are JSON objects; NULL or "" means all defaults. Unknown
 * keys are rejected.
 */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define CFR_API __declspec(dllexport)
#else
#define CFR_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum cfr_status {
  CFR_OK = 0,
  CFR_ERR_ARGUMENT = 1,  /* bad option, out-of-range index, unknown id */
  CFR_ERR_FORMAT = 2,    /* malformed file contents */
  CFR_ERR_IO = 3,        /* cannot open / read / write */
  CFR_ERR_SHAPE = 4,     /* dimension mismatch between data and model */
  CFR_ERR_INTEGRITY = 5, /* checkpoint does not match its config */
  CFR_ERR_NUMERIC = 6,   /* non-finite values */
  CFR_ERR_MEMORY = 7,
  CFR_ERR_INTERNAL = 8
} cfr_status;

typedef struct cfr_dataset cfr_dataset;
typedef struct cfr_embeddings cfr_embeddings;
typedef struct cfr_model cfr_model;

CFR_API const char* cfr_version(void);
CFR_API const char* cfr_status_name(cfr_status status);
CFR_API const char* cfr_last_error(void);
CFR_API void cfr_free_string(char* s);

/* ---- data ------------------------------------------------------------- */

/* Writes train.jsonl, val.jsonl, embeddings.txt, answers.txt and
 * stopwords.txt into out_dir. Options: objects, attrs, min_rois, max_rois,
 * noise, dropout, distractor_rate, train_n, val_n, embed_dim, seed. */
CFR_API cfr_status cfr_synth_generate(const char* options_json, const char* out_dir);

CFR_API cfr_status cfr_dataset_load(const char* path, cfr_dataset** out);
CFR_API void cfr_dataset_free(cfr_dataset* set);
CFR_API size_t cfr_dataset_size(const cfr_dataset* set);
CFR_API cfr_status cfr_dataset_find(const cfr_dataset* set, const char* id, size_t* index_out);
CFR_API cfr_status cfr_dataset_sample_id(const cfr_dataset* set, size_t index, char** id_out);

CFR_API cfr_status cfr_embeddings_load(const char* path, cfr_embeddings** out);
CFR_API void cfr_embeddings_free(cfr_embeddings* words);
CFR_API size_t cfr_embeddings_dim(const cfr_embeddings* words);
CFR_API size_t cfr_embeddings_size(const cfr_embeddings* words);
CFR_API size_t cfr_embeddings_warning_count(const cfr_embeddings* words);
/* NULL when i is out of range. Owned by the handle. */
CFR_API const char* cfr_embeddings_warning(const cfr_embeddings* words, size_t i);

/* ---- model ------------------------------------------------------------ */

CFR_API cfr_status cfr_model_load(const char* path, cfr_model** out);
CFR_API cfr_status cfr_model_save(const cfr_model* model, const char* path);
CFR_API void cfr_model_free(cfr_model* model);
CFR_API cfr_status cfr_model_config(const cfr_model* model, char** json_out);
CFR_API size_t cfr_model_num_answers(const cfr_model* model);
/* "full" | "coarse_only" | "fine_only" */
CFR_API cfr_status cfr_model_set_head_mode(cfr_model* model, const char* mode);

/* Answer distribution for one sample; rho must hold cfr_model_num_answers
 * values. */
CFR_API cfr_status cfr_model_forward(const cfr_model* model, const cfr_dataset* set, size_t index,
                                     const cfr_embeddings* words, double* rho, size_t capacity);

/* ---- workflows -------------------------------------------------------- */

typedef void (*cfr_epoch_fn)(size_t epoch, double loss, double val_acc, void* user);

/*
 * Trains a model and returns the best-on-validation parameters.
 * Options: epochs, batch_size, lr, beta1, beta2, adam_eps, seed, d (sets
 * d_q, d_psi, d_cg, d_fg), d_q, d_psi, d_cg, d_fg, softmax_axis
 * ("flat" | "rows"), learnable_channel_scale, projection_bias, head_mode,
 * min_freq, answers (array) or answers_file, stop_words (array) or
 * stop_words_file. val may be NULL. history_csv_out may be NULL.
 */
CFR_API cfr_status cfr_train(const cfr_dataset* train, const cfr_dataset* val,
                             const cfr_embeddings* words, const char* options_json,
                             cfr_epoch_fn on_epoch, void* user, cfr_model** model_out,
                             char** history_csv_out);

/* JSON report: samples, acc (free-form), acc_mc (multiple choice),
 * acc_soft (when human answers exist), overall, predictions. */
CFR_API cfr_status cfr_evaluate(const cfr_model* model, const cfr_dataset* set,
                                const cfr_embeddings* words, char** report_json_out);

/* csv_out may be NULL. */
CFR_API cfr_status cfr_explain(const cfr_model* model, const cfr_dataset* set, size_t index,
                               const cfr_embeddings* words, size_t top_k, char** json_out,
                               char** csv_out);

/* Same options as cfr_train plus strategy ("retrain" | "forced") and seeds
 * (array). */
CFR_API cfr_status cfr_ablate(const cfr_dataset* train, const cfr_dataset* val,
                              const cfr_embeddings* words, const char* options_json,
                              char** report_json_out);

/* Options: seeds (array), eps, tol, batch, softmax_axis,
 * learnable_channel_scale. *passed is 1 when every tensor of every seed is
 * within tolerance. */
CFR_API cfr_status cfr_gradcheck(const char* options_json, int* passed, char** report_json_out);

#ifdef __cplusplus
}
#endif

#endif
