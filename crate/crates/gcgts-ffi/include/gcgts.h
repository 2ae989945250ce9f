#ifndef GCGTS_H
#define GCGTS_H

/* Generated by cbindgen from the gcgts-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call. Anything but `Ok` leaves a message in
 * [`gcgts_last_error`].
 */
typedef enum GcgtsStatus {
  GCGTS_STATUS_OK = 0,
  GCGTS_STATUS_NULL_ARGUMENT = 1,
  GCGTS_STATUS_INVALID_UTF8 = 2,
  GCGTS_STATUS_INVALID_ARGUMENT = 3,
  GCGTS_STATUS_INDEX_OUT_OF_RANGE = 4,
  GCGTS_STATUS_IO = 5,
  GCGTS_STATUS_CORPUS = 6,
  GCGTS_STATUS_CHECKPOINT = 7,
  GCGTS_STATUS_TRAINING = 8,
  GCGTS_STATUS_UNSUPPORTED = 9,
  GCGTS_STATUS_PANIC = 10,
} GcgtsStatus;

/**
 * An in-memory annotated corpus (opaque).
 */
typedef struct GcgtsCorpus GcgtsCorpus;

/**
 * A trained or loaded model (opaque).
 */
typedef struct GcgtsModel GcgtsModel;

/**
 * One precision/recall/F1 triple.
 */
typedef struct GcgtsPrf {
  double p;
  double r;
  double f1;
} GcgtsPrf;

/**
 * Exact-match extraction metrics, micro-averaged over a corpus.
 */
typedef struct GcgtsMetrics {
  struct GcgtsPrf pair;
  struct GcgtsPrf aspect;
  struct GcgtsPrf opinion;
  size_t n_sentences;
} GcgtsMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * The library version as a static NUL-terminated string.
 */
const char *gcgts_version(void);

/**
 * Message of the calling thread's most recent failure (empty string when
 * nothing failed yet). Valid until that thread's next failing call.
 */
const char *gcgts_last_error(void);

/**
 * Generates a synthetic annotated corpus.
 *
 * # Safety
 * `out` must be a valid pointer to a `GcgtsCorpus*`.
 */
enum GcgtsStatus gcgts_corpus_generate(uint64_t seed,
                                       size_t count,
                                       bool simple_profile,
                                       struct GcgtsCorpus **out);

/**
 * Reads a JSON-lines corpus file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be a valid pointer to
 * a `GcgtsCorpus*`.
 */
enum GcgtsStatus gcgts_corpus_read(const char *path, struct GcgtsCorpus **out);

/**
 * Writes a corpus back to a JSON-lines file.
 *
 * # Safety
 * `corpus` must be a live handle; `path` must be a NUL-terminated string.
 */
enum GcgtsStatus gcgts_corpus_write(const struct GcgtsCorpus *corpus, const char *path);

/**
 * Number of sentences; 0 for NULL.
 *
 * # Safety
 * `corpus` must be a live handle or NULL.
 */
size_t gcgts_corpus_len(const struct GcgtsCorpus *corpus);

/**
 * Character count of one sentence.
 *
 * # Safety
 * `corpus` must be a live handle; `out` must be a valid pointer.
 */
enum GcgtsStatus gcgts_corpus_sentence_len(const struct GcgtsCorpus *corpus,
                                           size_t index,
                                           size_t *out);

/**
 * Frees a corpus handle (NULL is a no-op).
 *
 * # Safety
 * `corpus` must be NULL or a handle returned by this library, not yet freed.
 */
void gcgts_corpus_free(struct GcgtsCorpus *corpus);

/**
 * Trains a fresh model on a corpus with library-default hyperparameters and
 * the given ablation preset (NULL means "gcgts", the full model).
 *
 * # Safety
 * `train` must be a live handle; `preset` must be NULL or NUL-terminated;
 * `out` must be a valid pointer to a `GcgtsModel*`.
 */
enum GcgtsStatus gcgts_model_train(const struct GcgtsCorpus *train,
                                   size_t epochs,
                                   uint64_t seed,
                                   const char *preset,
                                   struct GcgtsModel **out);

/**
 * Loads a checkpoint file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be a valid pointer to
 * a `GcgtsModel*`.
 */
enum GcgtsStatus gcgts_model_load(const char *path, struct GcgtsModel **out);

/**
 * Saves a model as a checkpoint file.
 *
 * # Safety
 * `model` must be a live handle; `path` must be a NUL-terminated string.
 */
enum GcgtsStatus gcgts_model_save(const struct GcgtsModel *model, const char *path);

/**
 * Scores a model against an annotated corpus.
 *
 * # Safety
 * `model` and `corpus` must be live handles; `out` must be a valid pointer.
 */
enum GcgtsStatus gcgts_model_evaluate(const struct GcgtsModel *model,
                                      const struct GcgtsCorpus *corpus,
                                      struct GcgtsMetrics *out);

/**
 * Runs extraction on one sentence and returns it as a JSON object (spans
 * plus surface strings). The string is owned by the caller: release it with
 * [`gcgts_string_free`].
 *
 * # Safety
 * `model` and `corpus` must be live handles; `out_json` must be a valid
 * pointer to a `char*`.
 */
enum GcgtsStatus gcgts_model_predict_json(const struct GcgtsModel *model,
                                          const struct GcgtsCorpus *corpus,
                                          size_t index,
                                          char **out_json);

/**
 * Fills `out` (length `out_len`, which must equal n*n for the sentence's
 * character count n) with the row-major pair-probability grid.
 *
 * # Safety
 * `model` and `corpus` must be live handles; `out` must point to at least
 * `out_len` writable doubles.
 */
enum GcgtsStatus gcgts_model_pair_grid(const struct GcgtsModel *model,
                                       const struct GcgtsCorpus *corpus,
                                       size_t index,
                                       double *out,
                                       size_t out_len);

/**
 * Frees a model handle (NULL is a no-op).
 *
 * # Safety
 * `model` must be NULL or a handle returned by this library, not yet freed.
 */
void gcgts_model_free(struct GcgtsModel *model);

/**
 * Frees a string returned by this library (NULL is a no-op).
 *
 * # Safety
 * `s` must be NULL or a string returned by this library, not yet freed.
 */
void gcgts_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GCGTS_H */
