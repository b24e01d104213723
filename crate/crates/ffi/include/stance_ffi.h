#ifndef STANCE_FFI_H
#define STANCE_FFI_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

#define STANCE_OK 0

#define STANCE_ERR_NULL 1

#define STANCE_ERR_ARGUMENT 2

#define STANCE_ERR_DATA 3

#define STANCE_ERR_MODEL 4

#define STANCE_ERR_PANIC 5

/**
 * Opaque handle to a loaded model.
 */
typedef struct StanceModel StanceModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or null. The
 * pointer stays valid until the next call on the same thread.
 */
const char *stance_last_error(void);

/**
 * Loads a model file written by `stance train`.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
int32_t stance_model_load(const char *path, StanceModel **out);

/**
 * Releases a model. Null is ignored.
 *
 * # Safety
 * `model` must come from [`stance_model_load`] and not be used afterwards.
 */
void stance_model_free(StanceModel *model);

/**
 * Input dimension of the model, 0 for null.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
uintptr_t stance_model_input_dim(const StanceModel *model);

/**
 * Predicts one dense feature row of length `len`. Writes four class
 * probabilities to `probs` and the decided stance index to `stance`.
 *
 * # Safety
 * `features` must hold `len` doubles, `probs` room for 4.
 */
int32_t stance_model_predict(const StanceModel *model,
                             const double *features,
                             uintptr_t len,
                             double *probs,
                             int32_t *stance);

/**
 * FNC grade and maximum grade of `n` (truth, predicted) stance pairs.
 *
 * # Safety
 * `truth` and `predicted` must hold `n` ints each.
 */
int32_t stance_fnc_score(const int32_t *truth,
                         const int32_t *predicted,
                         uintptr_t n,
                         double *grade,
                         double *max_grade);

/**
 * 4x4 confusion counts, row = true stance, column = predicted, written
 * row-major into `counts` (16 entries).
 *
 * # Safety
 * `truth` and `predicted` must hold `n` ints each, `counts` room for 16.
 */
int32_t stance_confusion(const int32_t *truth,
                         const int32_t *predicted,
                         uintptr_t n,
                         uint64_t *counts);

/**
 * Mutual information in bits between term presence and a binary class.
 *
 * # Safety
 * `out` must be writable.
 */
int32_t stance_mutual_information(uint64_t n11,
                                  uint64_t n10,
                                  uint64_t n01,
                                  uint64_t n00,
                                  double *out);

/**
 * Averages `n_members` probability vectors (4 doubles each, contiguous)
 * and writes the fused vector and decided stance.
 *
 * # Safety
 * `members` must hold `4 * n_members` doubles, `probs` room for 4.
 */
int32_t stance_fuse_summation(const double *members,
                              uintptr_t n_members,
                              double *probs,
                              int32_t *stance);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STANCE_FFI_H */
