/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef NRIQA_H
#define NRIQA_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define NRIQA_SPACE_RGB 0

#define NRIQA_SPACE_YUV 1

#define NRIQA_SPACE_LAB 2

/**
 * Result code of every fallible call.
 */
typedef enum NriqaStatus {
  NRIQA_STATUS_OK = 0,
  NRIQA_STATUS_NULL_POINTER = 1,
  NRIQA_STATUS_INVALID_ARGUMENT = 2,
  NRIQA_STATUS_IO = 3,
  NRIQA_STATUS_DECODE = 4,
  NRIQA_STATUS_MODEL = 5,
  NRIQA_STATUS_COMPUTE = 6,
  NRIQA_STATUS_PANIC = 7,
} NriqaStatus;

/**
 * A loaded model. Scoring does not mutate it, so one handle may be shared
 * across threads for concurrent `nriqa_score_*` calls.
 */
typedef struct NriqaModel NriqaModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Loads weights from `weights_path`. `config_path` may be null, in which
 * case the `.cfg` file next to the weights is used. On success `*out`
 * receives a new handle.
 *
 * # Safety
 * Strings must be NUL-terminated; `out` must be writable.
 */
enum NriqaStatus nriqa_model_load(const char *weights_path,
                                  const char *config_path,
                                  struct NriqaModel **out);

/**
 * Seeded randomly initialized model with Tiny encoders, for wiring tests.
 *
 * # Safety
 * `out` must be writable.
 */
enum NriqaStatus nriqa_model_new_tiny(uint64_t seed, struct NriqaModel **out);

/**
 * Saves weights to `weights_path` and the config next to them.
 *
 * # Safety
 * `model` must come from this library; the string must be NUL-terminated.
 */
enum NriqaStatus nriqa_model_save(const struct NriqaModel *model, const char *weights_path);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `model` must come from this library and not be used afterwards.
 */
void nriqa_model_free(struct NriqaModel *model);

/**
 * Scores a PNG or PPM file. `space` is one of `NRIQA_SPACE_*`.
 *
 * # Safety
 * `model` must be a live handle, `path` NUL-terminated, `out_score` writable.
 */
enum NriqaStatus nriqa_score_file(const struct NriqaModel *model,
                                  const char *path,
                                  uint32_t space,
                                  double *out_score);

/**
 * Scores an interleaved 8-bit RGB raster. `stride` is the byte distance
 * between rows (at least `3 * width`).
 *
 * # Safety
 * `pixels` must hold `stride * height` readable bytes; `out_score` writable.
 */
enum NriqaStatus nriqa_score_rgb8(const struct NriqaModel *model,
                                  const uint8_t *pixels,
                                  size_t width,
                                  size_t height,
                                  size_t stride,
                                  uint32_t space,
                                  double *out_score);

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *nriqa_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *nriqa_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NRIQA_H */
