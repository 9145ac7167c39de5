#ifndef SEGCRITIC_H
#define SEGCRITIC_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SegcStatus {
  SEGC_STATUS_OK = 0,
  SEGC_STATUS_NULL_POINTER = 1,
  SEGC_STATUS_INVALID_ARGUMENT = 2,
  SEGC_STATUS_NOT_FOUND = 3,
  SEGC_STATUS_CONFLICT = 4,
  SEGC_STATUS_FORMAT = 5,
  SEGC_STATUS_IO = 6,
  SEGC_STATUS_INTERNAL = 7,
  SEGC_STATUS_PANIC = 8,
} SegcStatus;

/**
 * Opaque mask handle.
 */
typedef struct SegcMask SegcMask;

/**
 * Opaque selection handle.
 */
typedef struct SegcSelection SegcSelection;

/**
 * Opaque store handle.
 */
typedef struct SegcStore SegcStore;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *segc_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *segc_version(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library.
 */
void segc_string_free(char *s);

/**
 * # Safety
 * `data`/`len` must be null/0 or a buffer returned by this library.
 */
void segc_bytes_free(uint8_t *data, uintptr_t len);

/**
 * Builds a mask from `width * height` row-major labels.
 *
 * # Safety
 * `labels` must point to `width * height` bytes; `out` must be writable.
 */
enum SegcStatus segc_mask_new(const uint8_t *labels,
                              uint32_t width,
                              uint32_t height,
                              struct SegcMask **out);

/**
 * # Safety
 * `mask` must be null or a handle from this library, freed once.
 */
void segc_mask_free(struct SegcMask *mask);

/**
 * # Safety
 * `mask` must be a live handle.
 */
uint32_t segc_mask_width(const struct SegcMask *mask);

/**
 * # Safety
 * `mask` must be a live handle.
 */
uint32_t segc_mask_height(const struct SegcMask *mask);

/**
 * Pointer to the row-major labels, valid while the handle lives.
 *
 * # Safety
 * `mask` must be a live handle.
 */
const uint8_t *segc_mask_labels(const struct SegcMask *mask);

/**
 * Encodes a mask in the SEGB format. Free the buffer with `segc_bytes_free`.
 *
 * # Safety
 * `mask` must be a live handle; `out` and `out_len` must be writable.
 */
enum SegcStatus segc_mask_encode_bin(const struct SegcMask *mask,
                                     uint8_t **out,
                                     uintptr_t *out_len);

/**
 * # Safety
 * `data` must point to `len` bytes; `out` must be writable.
 */
enum SegcStatus segc_mask_decode_bin(const uint8_t *data, uintptr_t len, struct SegcMask **out);

/**
 * Magic-wand selection on a row-major RGB image (`3 * width * height`
 * bytes). `connectivity` is 4 or 8.
 *
 * # Safety
 * `rgb` must point to `3 * width * height` bytes; `out` must be writable.
 */
enum SegcStatus segc_wand_select(const uint8_t *rgb,
                                 uint32_t width,
                                 uint32_t height,
                                 uint32_t x,
                                 uint32_t y,
                                 double tolerance,
                                 uint32_t connectivity_code,
                                 struct SegcSelection **out);

/**
 * # Safety
 * `sel` must be null or a handle from this library, freed once.
 */
void segc_selection_free(struct SegcSelection *sel);

/**
 * # Safety
 * `sel` must be a live handle.
 */
uintptr_t segc_selection_count(const struct SegcSelection *sel);

/**
 * # Safety
 * `sel` must be a live handle.
 */
bool segc_selection_contains(const struct SegcSelection *sel, uint32_t x, uint32_t y);

/**
 * Writes the selection as a `width * height` byte mask of 0/1 into `out`.
 *
 * # Safety
 * `sel` must be a live handle; `out` must hold `len` bytes.
 */
enum SegcStatus segc_selection_to_bytes(const struct SegcSelection *sel,
                                        uint8_t *out,
                                        uintptr_t len);

/**
 * Mean IoU over classes present in either mask.
 *
 * # Safety
 * Both masks must be live handles; `out` must be writable.
 */
enum SegcStatus segc_miou(const struct SegcMask *pred, const struct SegcMask *gt, double *out);

/**
 * Boundary IoU of `class` with band width `d`. Writes NaN when both bands
 * are empty.
 *
 * # Safety
 * Both masks must be live handles; `out` must be writable.
 */
enum SegcStatus segc_boundary_iou(const struct SegcMask *pred,
                                  const struct SegcMask *gt,
                                  uint8_t class_,
                                  uint32_t d,
                                  double *out);

/**
 * Opens an initialized store directory.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum SegcStatus segc_store_open(const char *path, struct SegcStore **out);

/**
 * # Safety
 * `store` must be null or a handle from this library, freed once.
 */
void segc_store_free(struct SegcStore *store);

/**
 * Working mask of a face: its latest version, else its prediction.
 *
 * # Safety
 * `store` must be a live handle; strings NUL-terminated; `out` writable.
 */
enum SegcStatus segc_store_current_mask(const struct SegcStore *store,
                                        const char *site,
                                        const char *face_name,
                                        struct SegcMask **out);

/**
 * Applies a human correction and appends it to the log. The new record id
 * is written to `out_record_id`; free it with `segc_string_free`.
 * `intervention_code` is 0 feature suppression, 1 boundary refinement,
 * 2 context reweighting.
 *
 * # Safety
 * Handles must be live; strings NUL-terminated; `out_record_id` writable.
 */
enum SegcStatus segc_store_submit_correction(struct SegcStore *store,
                                             const char *site,
                                             const char *face_name,
                                             const struct SegcSelection *sel,
                                             uint8_t class_,
                                             uint32_t intervention_code,
                                             uint32_t interactions,
                                             double elapsed_s,
                                             char **out_record_id);

/**
 * Undoes a live record. Only the latest edit on its image can be undone.
 *
 * # Safety
 * `store` must be a live handle; `record_id` NUL-terminated.
 */
enum SegcStatus segc_store_undo(struct SegcStore *store, const char *record_id);

/**
 * Propagates a human record; writes the number of auto-applied records and
 * review items produced.
 *
 * # Safety
 * `store` must be a live handle; `record_id` NUL-terminated; outputs
 * writable.
 */
enum SegcStatus segc_store_propagate(struct SegcStore *store,
                                     const char *record_id,
                                     uint32_t *out_auto,
                                     uint32_t *out_review);

/**
 * Accepts (`accept != 0`) or rejects a review item.
 *
 * # Safety
 * `store` must be a live handle; `item_id` NUL-terminated.
 */
enum SegcStatus segc_store_review(struct SegcStore *store, const char *item_id, bool accept);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SEGCRITIC_H */
