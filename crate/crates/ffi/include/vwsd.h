#ifndef VWSD_H
#define VWSD_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

// Result codes.
typedef enum VwsdStatus {
  VWSD_STATUS_OK = 0,
  VWSD_STATUS_NULL_POINTER = 1,
  VWSD_STATUS_INVALID_UTF8 = 2,
  VWSD_STATUS_CONFIG = 3,
  VWSD_STATUS_IO = 4,
  VWSD_STATUS_DATASET = 5,
  VWSD_STATUS_IMAGE = 6,
  VWSD_STATUS_CANDIDATE_COUNT = 7,
  VWSD_STATUS_NUMERIC = 8,
  VWSD_STATUS_RUNTIME = 9,
  VWSD_STATUS_PANIC = 10,
} VwsdStatus;

// A configured backend plus its resources. Opaque to C.
typedef struct VwsdPipeline VwsdPipeline;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Creates a pipeline from a config file, or from defaults when
// `config_path` is null.
//
// # Safety
// `config_path` must be null or a NUL-terminated string; `out` must be a
// valid pointer.
enum VwsdStatus vwsd_pipeline_new(const char *config_path, struct VwsdPipeline **out);

// Creates a pipeline from an in-memory TOML config. Relative paths resolve
// against the working directory.
//
// # Safety
// `toml` must be a NUL-terminated string; `out` must be a valid pointer.
enum VwsdStatus vwsd_pipeline_new_from_toml(const char *toml, struct VwsdPipeline **out);

// Releases a pipeline. Null is ignored.
//
// # Safety
// `pipeline` must come from a `vwsd_pipeline_new*` call and not be used
// afterwards.
void vwsd_pipeline_free(struct VwsdPipeline *pipeline);

// Ranks ten candidate images for `word` in `phrase`.
//
// `scores_out` receives the cosine score of each candidate in input order
// and `order_out` the candidate indices by descending score. Both must
// hold `n_images` elements; `n_images` must be 10.
//
// # Safety
// All pointers must be valid; `image_paths` must hold `n_images`
// NUL-terminated strings.
enum VwsdStatus vwsd_predict(const struct VwsdPipeline *pipeline,
                             const char *word,
                             const char *phrase,
                             const char *const *image_paths,
                             size_t n_images,
                             double *scores_out,
                             size_t *order_out);

// Evaluates a dataset and returns the JSON report through `json_out`.
// `gold` is required; `images` may be null to use the data file's
// directory.
//
// # Safety
// String arguments must be null (where allowed) or NUL-terminated;
// `json_out` must be valid. Free the result with `vwsd_string_free`.
enum VwsdStatus vwsd_evaluate_json(const struct VwsdPipeline *pipeline,
                                   const char *data,
                                   const char *gold,
                                   const char *images,
                                   char **json_out);

// Mean reciprocal rank of `n` 1-based ranks.
//
// # Safety
// `ranks` must point to `n` values and `out` must be valid.
enum VwsdStatus vwsd_compute_mrr(const size_t *ranks, size_t n, double *out);

// Fraction of `n` 1-based ranks equal to 1.
//
// # Safety
// `ranks` must point to `n` values and `out` must be valid.
enum VwsdStatus vwsd_compute_hit_rate(const size_t *ranks, size_t n, double *out);

// Message of the last failed call on this thread, or null. The pointer
// stays valid until the next call on the same thread.
const char *vwsd_last_error_message(void);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not be used afterwards.
void vwsd_string_free(char *s);

// Number of candidate images per query.
size_t vwsd_candidate_count(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VWSD_H */
