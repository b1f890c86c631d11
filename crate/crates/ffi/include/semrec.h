#ifndef SEMREC_H
#define SEMREC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum SemrecStatus {
  SEMREC_STATUS_OK = 0,
  SEMREC_STATUS_NULL_POINTER = 1,
  // Bad argument, malformed input, unknown entity, out-of-range weight.
  SEMREC_STATUS_INVALID = 2,
  SEMREC_STATUS_IO = 3,
  SEMREC_STATUS_NOT_CONVERGED = 4,
  SEMREC_STATUS_STALE = 5,
  SEMREC_STATUS_MISSING_ARTIFACT = 6,
  // A Rust panic was caught at the boundary.
  SEMREC_STATUS_INTERNAL = 7,
} SemrecStatus;

// A loaded dataset.
typedef struct SemrecDataset SemrecDataset;

typedef struct SemrecIndex SemrecIndex;

// A latent model plus C copies of its entity names.
typedef struct SemrecModel SemrecModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer
// stays valid until the next semrec call on this thread.
const char *semrec_last_error_message(void);

// Library version as a static string.
const char *semrec_version(void);

// Loads a schema file and an edge file.
//
// # Safety
// Paths must be valid NUL-terminated strings; `out` must be writable.
enum SemrecStatus semrec_dataset_load(const char *schema_path,
                                      const char *data_path,
                                      struct SemrecDataset **out);

// # Safety
// `dataset` must come from `semrec_dataset_load` and not be used afterwards.
void semrec_dataset_free(struct SemrecDataset *dataset);

// Builds a rank-`k` model with default normalization, unit weights, star
// reduction and the truncated kernel.
//
// # Safety
// `dataset` must be a live handle; `out` must be writable.
enum SemrecStatus semrec_model_build(const struct SemrecDataset *dataset,
                                     size_t k,
                                     uint64_t seed,
                                     struct SemrecModel **out);

// # Safety
// `path` must be a valid string; `out` must be writable.
enum SemrecStatus semrec_model_load(const char *path, struct SemrecModel **out);

// # Safety
// `model` must be a live handle and `path` a valid string.
enum SemrecStatus semrec_model_save(const struct SemrecModel *model, const char *path);

// # Safety
// `model` must come from this library and not be used afterwards.
void semrec_model_free(struct SemrecModel *model);

// Number of latent dimensions; 0 for a null handle.
//
// # Safety
// `model` must be null or a live handle.
size_t semrec_model_k(const struct SemrecModel *model);

// Number of entities (rows); 0 for a null handle.
//
// # Safety
// `model` must be null or a live handle.
size_t semrec_model_n(const struct SemrecModel *model);

// Type and id of entity `row`. The strings belong to the model handle.
//
// # Safety
// `model` must be a live handle; the out pointers must be writable.
enum SemrecStatus semrec_model_entity(const struct SemrecModel *model,
                                      size_t row,
                                      const char **out_type,
                                      const char **out_id);

// Predicted score between two entities on the normalized scale.
//
// # Safety
// `model` must be a live handle, the strings valid, `out` writable.
enum SemrecStatus semrec_model_predict(const struct SemrecModel *model,
                                       const char *type_a,
                                       const char *id_a,
                                       const char *type_b,
                                       const char *id_b,
                                       double *out);

// Indexes every non-auxiliary entity of `model`.
//
// # Safety
// `model` must be a live handle; `out` must be writable.
enum SemrecStatus semrec_index_build(const struct SemrecModel *model,
                                     size_t branching,
                                     size_t capacity,
                                     uint64_t seed,
                                     struct SemrecIndex **out);

// # Safety
// `index` must come from `semrec_index_build` and not be used afterwards.
void semrec_index_free(struct SemrecIndex *index);

// Top-`k` entities for the source entity, which is itself excluded.
// Writes up to `k` rows and scores, best first, and the count to
// `out_len`; `out_truncated` is set when fewer than `k` were available.
//
// # Safety
// `index` must have been built from `model`; `out_rows` and `out_scores`
// must hold `k` elements; the other out pointers must be writable.
enum SemrecStatus semrec_index_query(const struct SemrecIndex *index,
                                     const struct SemrecModel *model,
                                     const char *source_type,
                                     const char *source_id,
                                     size_t k,
                                     size_t budget,
                                     size_t *out_rows,
                                     double *out_scores,
                                     size_t *out_len,
                                     bool *out_truncated);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SEMREC_H */
