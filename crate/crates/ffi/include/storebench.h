#ifndef STOREBENCH_H
#define STOREBENCH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SbStatus {
  SB_STATUS_OK = 0,
  SB_STATUS_NULL_POINTER = 1,
  SB_STATUS_INVALID_UTF8 = 2,
  /**
   * Malformed or out-of-range input.
   */
  SB_STATUS_INVALID_INPUT = 3,
  /**
   * A well-formed request that could not be completed.
   */
  SB_STATUS_FAILED = 4,
  /**
   * Internal bug; the call had no effect.
   */
  SB_STATUS_PANIC = 5,
} SbStatus;

/**
 * A featurized scene built from one detections document.
 */
typedef struct SbScene SbScene;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Builds a featurized scene from a detections JSON document using the
 * default anchor vocabulary and feature settings.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum SbStatus sb_scene_from_json(const char *json, struct SbScene **out);

/**
 * # Safety
 * `scene` must come from [`sb_scene_from_json`] and not be used afterwards.
 */
void sb_scene_free(struct SbScene *scene);

/**
 * # Safety
 * `scene` must be a live handle; `out` must be writable.
 */
enum SbStatus sb_scene_container_count(const struct SbScene *scene, size_t *out);

/**
 * Container descriptions, one per line, in container order.
 *
 * # Safety
 * `scene` must be a live handle; `out` must be writable. Free the result
 * with [`sb_string_free`].
 */
enum SbStatus sb_scene_describe(const struct SbScene *scene, char **out);

/**
 * System and user text of the structured prompt for `item`.
 *
 * # Safety
 * `scene` must be a live handle, `item` a NUL-terminated string, and both
 * outputs writable. Free both results with [`sb_string_free`].
 */
enum SbStatus sb_prompt_structured(const struct SbScene *scene,
                                   const char *item,
                                   char **out_system,
                                   char **out_user);

/**
 * Pulls a container id out of free model text. `out_id` receives the id or
 * -1 for "none". `out_parse` receives 0 when the answer followed the
 * requested format, 1 when it was recovered from a stray number, 2 when
 * nothing was found.
 *
 * # Safety
 * `text` must be a NUL-terminated string; outputs must be writable.
 */
enum SbStatus sb_extract_container_choice(const char *text, int64_t *out_id, int32_t *out_parse);

/**
 * IoU of two boxes given as `[x_min, y_min, x_max, y_max]`.
 *
 * # Safety
 * `a` and `b` must each point at 4 doubles; `out` must be writable.
 */
enum SbStatus sb_iou_bbox(const double *a, const double *b, double *out);

/**
 * IoU of two simple polygons, each given as `n` interleaved x,y pairs.
 * Rasterized on a 512x512 grid over both shapes.
 *
 * # Safety
 * `a_xy` must point at `2 * a_n` doubles and `b_xy` at `2 * b_n`; `out`
 * must be writable.
 */
enum SbStatus sb_iou_polygons(const double *a_xy,
                              size_t a_n,
                              const double *b_xy,
                              size_t b_n,
                              double *out);

/**
 * Fleiss' kappa over a row-major `subjects x categories` count matrix.
 *
 * # Safety
 * `counts` must point at `subjects * categories` values; `out` must be
 * writable.
 */
enum SbStatus sb_fleiss_kappa(const uint32_t *counts,
                              size_t subjects,
                              size_t categories,
                              double *out);

/**
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void sb_string_free(char *s);

/**
 * Message for the last failed call on this thread, or NULL. The pointer
 * stays valid until the next call into this library on the same thread.
 */
const char *sb_last_error_message(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STOREBENCH_H */
