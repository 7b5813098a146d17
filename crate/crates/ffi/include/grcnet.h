#ifndef GRCNET_H
#define GRCNET_H

/* Generated by cbindgen from crates/ffi/src. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. Values 2 to 7 match the CLI exit codes.
 */
typedef enum GrcnetStatus {
  GRCNET_STATUS_OK = 0,
  GRCNET_STATUS_NULL_POINTER = 1,
  GRCNET_STATUS_INVALID_ARGUMENT = 2,
  GRCNET_STATUS_DATASET = 3,
  GRCNET_STATUS_IO = 4,
  GRCNET_STATUS_FORMAT = 5,
  GRCNET_STATUS_DIVERGENCE = 6,
  GRCNET_STATUS_NUMERIC = 7,
  GRCNET_STATUS_PANIC = 8,
} GrcnetStatus;

/**
 * Loaded image archive.
 */
typedef struct GrcnetArchive GrcnetArchive;

/**
 * Loaded model checkpoint.
 */
typedef struct GrcnetModel GrcnetModel;

/**
 * Headline metrics of a 5x5 confusion matrix.
 */
typedef struct GrcnetMetrics {
  double accuracy;
  double macro_recall;
  double macro_precision;
  double macro_f1;
} GrcnetMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *grcnet_last_error_message(void);

/**
 * Encodes one window as a `paa_target x paa_target` GASF image.
 *
 * # Safety
 * `window` must point to `len` readable doubles and `out` to
 * `paa_target * paa_target` writable doubles.
 */
enum GrcnetStatus grcnet_encode_gasf(const double *window,
                                     size_t len,
                                     size_t paa_target,
                                     double *out);

/**
 * `x*y - sqrt(1-x^2)*sqrt(1-y^2)` for `x, y` in `[-1, 1]`.
 *
 * # Safety
 * `out` must point to one writable double.
 */
enum GrcnetStatus grcnet_penalized_inner(double x, double y, double *out);

/**
 * Loads a checkpoint. On success `*out` owns a handle for
 * [`grcnet_model_free`].
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum GrcnetStatus grcnet_model_load(const char *path, struct GrcnetModel **out);

/**
 * # Safety
 * `model` must come from [`grcnet_model_load`] and not be freed twice.
 */
void grcnet_model_free(struct GrcnetModel *model);

/**
 * Side of the square images the model accepts, or 0 for NULL.
 *
 * # Safety
 * `model` must be NULL or a live handle.
 */
size_t grcnet_model_input_size(const struct GrcnetModel *model);

/**
 * Predicts class indices (0 = Z ... 4 = S) for `count` row-major images.
 *
 * # Safety
 * `images` must point to `count * n * n` doubles, where `n` is
 * [`grcnet_model_input_size`], and `labels` to `count` writable bytes.
 */
enum GrcnetStatus grcnet_model_predict(const struct GrcnetModel *model,
                                       const double *images,
                                       size_t count,
                                       uint8_t *labels);

/**
 * Opens an image archive. On success `*out` owns a handle for
 * [`grcnet_archive_free`].
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum GrcnetStatus grcnet_archive_open(const char *path, struct GrcnetArchive **out);

/**
 * # Safety
 * `archive` must come from [`grcnet_archive_open`] and not be freed twice.
 */
void grcnet_archive_free(struct GrcnetArchive *archive);

/**
 * Number of images, or 0 for NULL.
 *
 * # Safety
 * `archive` must be NULL or a live handle.
 */
size_t grcnet_archive_len(const struct GrcnetArchive *archive);

/**
 * Image side, or 0 for NULL.
 *
 * # Safety
 * `archive` must be NULL or a live handle.
 */
size_t grcnet_archive_image_size(const struct GrcnetArchive *archive);

/**
 * Copies image `index` into `pixels` (`n * n` floats) and its class into
 * `label`.
 *
 * # Safety
 * `archive` must be a live handle, `pixels` must have room for `n * n`
 * floats and `label` must be writable.
 */
enum GrcnetStatus grcnet_archive_get(const struct GrcnetArchive *archive,
                                     size_t index,
                                     float *pixels,
                                     uint8_t *label);

/**
 * Metrics of a row-major 5x5 confusion matrix (rows are true classes).
 *
 * # Safety
 * `confusion` must point to 25 readable counts and `out` be writable.
 */
enum GrcnetStatus grcnet_compute_metrics(const uint64_t *confusion, struct GrcnetMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GRCNET_H */
