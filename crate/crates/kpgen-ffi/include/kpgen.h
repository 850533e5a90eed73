#ifndef KPGEN_H
#define KPGEN_H

/* Generated with cbindgen:0.27.0 */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by fallible calls.
 */
typedef enum {
  KPG_STATUS_OK = 0,
  KPG_STATUS_INVALID_ARGUMENT = 1,
  KPG_STATUS_IO_ERROR = 2,
  KPG_STATUS_PARSE_ERROR = 3,
  KPG_STATUS_MISMATCH = 4,
  KPG_STATUS_INTERNAL_ERROR = 5,
} KpgStatus;

/**
 * Opaque model handle: a loaded checkpoint (parameters + vocabulary).
 */
typedef struct KpgModel KpgModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static string; do not free.
 */
const char *kpg_version(void);

/**
 * Message of the most recent error on this thread, or NULL. The caller owns
 * the returned string (release with `kpg_string_free`).
 */
char *kpg_last_error(void);

/**
 * Release a string returned by this library.
 *
 * # Safety
 * `s` must be NULL or a pointer previously returned by a kpg_* call, not yet
 * freed.
 */
void kpg_string_free(char *s);

/**
 * Load a checkpoint file into an opaque model handle.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string; `out_model` must point to
 * writable storage for one pointer.
 */
KpgStatus kpg_model_load(const char *path, KpgModel **out_model);

/**
 * Release a model handle.
 *
 * # Safety
 * `model` must be NULL or a pointer returned by `kpg_model_load`, not yet
 * freed.
 */
void kpg_model_free(KpgModel *model);

/**
 * Number of learned parameters.
 *
 * # Safety
 * `model` must be a live handle from `kpg_model_load`.
 */
size_t kpg_model_param_count(const KpgModel *model);

/**
 * Vocabulary size (including reserved tokens).
 *
 * # Safety
 * `model` must be a live handle from `kpg_model_load`.
 */
size_t kpg_model_vocab_size(const KpgModel *model);

/**
 * Decode keyphrases for one source text. `strategy` is "greedy",
 * "top-beam" or "exhaustive". Returns a JSON object
 * `{"phrases": [...], "scores": [...], "strategy": "..."}`
 * or NULL on error.
 *
 * # Safety
 * `model` must be a live handle; `text` and `strategy` must be valid
 * NUL-terminated strings.
 */
char *kpg_model_predict_json(const KpgModel *model,
                             const char *text,
                             const char *strategy,
                             size_t beam,
                             size_t max_len);

/**
 * Score a prediction JSONL file against a gold dataset JSONL file. Returns
 * the metric report as JSON, or NULL on error.
 *
 * # Safety
 * Both paths must be valid NUL-terminated strings.
 */
char *kpg_evaluate_files_json(const char *pred_path, const char *gold_path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KPGEN_H */
