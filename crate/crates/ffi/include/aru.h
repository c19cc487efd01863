#ifndef ARU_H
#define ARU_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible call.
 */
typedef enum AruStatus {
  ARU_STATUS_OK = 0,
  ARU_STATUS_NULL_POINTER = 1,
  ARU_STATUS_INVALID_ARGUMENT = 2,
  ARU_STATUS_SHAPE_MISMATCH = 3,
  ARU_STATUS_NUMERICAL = 4,
  ARU_STATUS_IO = 5,
  ARU_STATUS_FORMAT = 6,
  ARU_STATUS_BUFFER_TOO_SMALL = 7,
  ARU_STATUS_PANIC = 8,
} AruStatus;

/**
 * Opaque trained forecaster.
 */
typedef struct AruModel AruModel;

/**
 * Opaque streaming ARU state.
 */
typedef struct AruState AruState;

/**
 * Window shape and head of a model.
 */
typedef struct AruModelInfo {
  size_t encoder_len;
  size_t horizon;
  /**
   * Categorical inputs per step.
   */
  size_t n_cat;
  /**
   * Continuous inputs per step.
   */
  size_t n_cont;
  /**
   * 0 baseline, 1 aru, 2 aru-direct.
   */
  uint32_t head;
  /**
   * Width `H` a compatible `AruState` needs (0 for the baseline head).
   */
  size_t feature_dim;
  /**
   * Banks a compatible `AruState` needs (0 for the baseline head).
   */
  size_t banks;
} AruModelInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *aru_last_error(void);

/**
 * Static, NUL-terminated name of a status code; "unknown status" for
 * values outside `AruStatus`.
 */
const char *aru_status_name(int32_t status);

/**
 * Create a zero state for feature width `feature_dim`, one statistics bank
 * per aging factor in `aging[0..banks]`, and ridge `ridge`.
 *
 * # Safety
 * `aging` must be valid for `banks` reads and `out` for one write.
 */
enum AruStatus aru_state_new(size_t feature_dim,
                             const double *aging,
                             size_t banks,
                             double ridge,
                             struct AruState **out);

/**
 * Release a state. Null is ignored.
 *
 * # Safety
 * `state` must be null or a handle not yet freed.
 */
void aru_state_free(struct AruState *state);

/**
 * Deep copy of a state.
 *
 * # Safety
 * `state` must be a live handle and `out` valid for one write.
 */
enum AruStatus aru_state_clone(const struct AruState *state, struct AruState **out);

/**
 * Feature width `H` of a state (0 for null).
 *
 * # Safety
 * `state` must be null or a live handle.
 */
size_t aru_state_feature_dim(const struct AruState *state);

/**
 * Number of statistics banks `J` of a state (0 for null).
 *
 * # Safety
 * `state` must be null or a live handle.
 */
size_t aru_state_banks(const struct AruState *state);

/**
 * Number of updates applied so far (0 for null).
 *
 * # Safety
 * `state` must be null or a live handle.
 */
uint64_t aru_state_steps(const struct AruState *state);

/**
 * Absorb one observation `y` with features `h[0..h_len]`.
 *
 * # Safety
 * `state` must be a live handle and `h` valid for `h_len` reads.
 */
enum AruStatus aru_state_update(struct AruState *state, const double *h, size_t h_len, double y);

/**
 * Local prediction at features `h`: per-bank means into `m` and variances
 * into `a`, each of capacity `cap >= banks`.
 *
 * # Safety
 * `state` must be a live handle, `h` valid for `h_len` reads, `m` and `a`
 * valid for `cap` writes.
 */
enum AruStatus aru_state_predict(const struct AruState *state,
                                 const double *h,
                                 size_t h_len,
                                 double *m,
                                 double *a,
                                 size_t cap);

/**
 * Local parameters of bank `bank`: the mean coefficients `[w, bias]` into
 * `theta_mu` (capacity `cap >= feature_dim + 1`) and the variance into
 * `theta_sigma`.
 *
 * # Safety
 * `state` must be a live handle, `theta_mu` valid for `cap` writes and
 * `theta_sigma` for one write.
 */
enum AruStatus aru_state_local_params(const struct AruState *state,
                                      size_t bank,
                                      double *theta_mu,
                                      size_t cap,
                                      double *theta_sigma);

/**
 * Serialize a state. Call with `buf` null to learn the size through
 * `written`; otherwise `cap` must be at least that size.
 *
 * # Safety
 * `state` must be a live handle, `buf` null or valid for `cap` writes, and
 * `written` valid for one write.
 */
enum AruStatus aru_state_to_bytes(const struct AruState *state,
                                  uint8_t *buf,
                                  size_t cap,
                                  size_t *written);

/**
 * Restore a state from bytes written by `aru_state_to_bytes`.
 *
 * # Safety
 * `buf` must be valid for `len` reads and `out` for one write.
 */
enum AruStatus aru_state_from_bytes(const uint8_t *buf, size_t len, struct AruState **out);

/**
 * Load a model checkpoint written by `aru train`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` valid for one write.
 */
enum AruStatus aru_model_load(const char *path, struct AruModel **out);

/**
 * Release a model. Null is ignored.
 *
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void aru_model_free(struct AruModel *model);

/**
 * # Safety
 * `model` must be a live handle and `info` valid for one write.
 */
enum AruStatus aru_model_info(const struct AruModel *model, struct AruModelInfo *info);

/**
 * Fresh zero state matching an ARU-head model.
 *
 * # Safety
 * `model` must be a live handle and `out` valid for one write.
 */
enum AruStatus aru_model_new_state(const struct AruModel *model, struct AruState **out);

/**
 * Forecast one window in scaled units.
 *
 * Inputs cover all `encoder_len + horizon` steps row-major: `cat` holds
 * `n_cat` category indices per step and `cont` `n_cont` scaled continuous
 * values per step. `y_encoder` holds the `encoder_len` scaled targets.
 * `state` is the series state at the window origin, or null to start from
 * zero; it is only read. Means and standard deviations go to `mu` and
 * `sigma`, each of capacity `cap >= horizon`.
 *
 * # Safety
 * `model` must be a live handle, `state` null or a live handle, each input
 * valid for its length, and `mu`, `sigma` valid for `cap` writes.
 */
enum AruStatus aru_model_forecast(const struct AruModel *model,
                                  const struct AruState *state,
                                  const uint32_t *cat,
                                  size_t cat_len,
                                  const double *cont,
                                  size_t cont_len,
                                  const double *y_encoder,
                                  size_t y_len,
                                  double *mu,
                                  double *sigma,
                                  size_t cap);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ARU_H */
