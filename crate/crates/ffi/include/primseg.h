#ifndef PRIMSEG_H
#define PRIMSEG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call. Values match the CLI exit codes.
 */
typedef enum PsStatus {
  PS_STATUS_OK = 0,
  PS_STATUS_IO = 2,
  PS_STATUS_PLY = 3,
  PS_STATUS_MISSING_FRAME = 4,
  PS_STATUS_DIMENSION = 5,
  PS_STATUS_CONFIG = 6,
  PS_STATUS_RASTER = 7,
  PS_STATUS_BOXES = 8,
  PS_STATUS_LABELS = 9,
  PS_STATUS_SCENE = 10,
  PS_STATUS_INVALID = 11,
  PS_STATUS_NULL_POINTER = 12,
  PS_STATUS_UTF8 = 13,
  PS_STATUS_PANIC = 14,
} PsStatus;

/**
 * Opaque point cloud.
 */
typedef struct PsCloud PsCloud;

/**
 * Opaque per-point label array.
 */
typedef struct PsLabels PsLabels;

/**
 * Scores returned by `ps_evaluate`.
 */
typedef struct PsEvalSummary {
  double map;
  double ap50;
  double ap25;
  size_t num_predictions;
  size_t num_ground_truth;
} PsEvalSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *ps_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ps_version(void);

/**
 * Load a PLY point cloud.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum PsStatus ps_cloud_load_ply(const char *path, struct PsCloud **out);

/**
 * Build a cloud from `n` interleaved xyz positions and rgb colors in [0, 1].
 *
 * # Safety
 * `xyz` and `rgb` must each point to `3 * n` doubles; `out` must be valid.
 */
enum PsStatus ps_cloud_from_arrays(const double *xyz,
                                   const double *rgb,
                                   size_t n,
                                   struct PsCloud **out);

/**
 * Number of points, 0 for a null handle.
 *
 * # Safety
 * `cloud` must be null or a handle from this library.
 */
size_t ps_cloud_len(const struct PsCloud *cloud);

/**
 * Release a cloud. Null is ignored.
 *
 * # Safety
 * `cloud` must be null or a handle from this library not yet freed.
 */
void ps_cloud_free(struct PsCloud *cloud);

/**
 * Over-segment a cloud into primitives. `config_json` may be null.
 *
 * # Safety
 * `cloud` must be a live handle, `config_json` null or NUL-terminated,
 * `out` valid.
 */
enum PsStatus ps_primitives(const struct PsCloud *cloud,
                            const char *config_json,
                            struct PsLabels **out);

/**
 * Run the full pipeline. `boxes_path` and `config_json` may be null;
 * without boxes no refinement is done.
 *
 * # Safety
 * `cloud` must be a live handle, string arguments null (where allowed) or
 * NUL-terminated, `out` valid.
 */
enum PsStatus ps_segment(const struct PsCloud *cloud,
                         const char *frames_dir,
                         const char *boxes_path,
                         const char *config_json,
                         struct PsLabels **out);

/**
 * Number of labels, 0 for a null handle.
 *
 * # Safety
 * `labels` must be null or a live handle.
 */
size_t ps_labels_len(const struct PsLabels *labels);

/**
 * Number of distinct labels (instances or primitives).
 *
 * # Safety
 * `labels` must be null or a live handle.
 */
size_t ps_labels_count(const struct PsLabels *labels);

/**
 * Pointer to `ps_labels_len` labels, valid while the handle lives.
 *
 * # Safety
 * `labels` must be null or a live handle.
 */
const int64_t *ps_labels_data(const struct PsLabels *labels);

/**
 * Release a label array. Null is ignored.
 *
 * # Safety
 * `labels` must be null or a handle from this library not yet freed.
 */
void ps_labels_free(struct PsLabels *labels);

/**
 * Score `n` predicted labels against `n` ground-truth labels (-1 = unlabeled).
 *
 * # Safety
 * `pred` and `gt` must point to `n` values each; `out` must be valid.
 */
enum PsStatus ps_evaluate(const int64_t *pred,
                          const int64_t *gt,
                          size_t n,
                          struct PsEvalSummary *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PRIMSEG_H */
