#ifndef ODP_H
#define ODP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. The first four match the exit codes of the `odp` binary.
 */
typedef enum OdpStatus {
  ODP_STATUS_OK = 0,
  ODP_STATUS_CONFIG = 1,
  ODP_STATUS_INPUT = 2,
  ODP_STATUS_INCOMPATIBLE = 3,
  ODP_STATUS_COMPUTE = 4,
  ODP_STATUS_NULL_POINTER = 5,
  ODP_STATUS_INVALID_ARGUMENT = 6,
  ODP_STATUS_PANIC = 7,
} OdpStatus;

typedef enum OdpHaMode {
  /**
   * Tendency, periodicity and both periodic neighbors, with repeats.
   */
  ODP_HA_MODE_PLUS = 0,
  ODP_HA_MODE_TENDENCY = 1,
  ODP_HA_MODE_PERIODICITY = 2,
} OdpHaMode;

/**
 * A model with its checkpoint and the workspace it predicts for.
 */
typedef struct OdpPredictor OdpPredictor;

/**
 * A loaded preprocessing workspace.
 */
typedef struct OdpWorkspace OdpWorkspace;

/**
 * Error metrics over entries whose truth is at least the threshold.
 * When no entry qualifies `defined` is false and the values are NaN.
 */
typedef struct OdpMetrics {
  double rmse;
  double mape;
  double mae;
  size_t count;
  bool defined;
} OdpMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *odp_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *odp_version(void);

/**
 * Great-circle distance in kilometers.
 */
double odp_haversine_km(double lat1, double lng1, double lat2, double lng2);

/**
 * RMSE, MAPE and MAE of `pred` against `truth` (both `len` values).
 *
 * # Safety
 * `pred` and `truth` must point to `len` readable doubles and `out` to a
 * writable `OdpMetrics`.
 */
enum OdpStatus odp_metrics(const double *pred,
                           const double *truth,
                           size_t len,
                           double threshold,
                           struct OdpMetrics *out);

/**
 * Historical-average reference for slot `target`.
 *
 * `history` holds `slots` rows of `width` values, row-major, where row
 * `s - 1` is slot `s`. `l` is slots per day and `p` the history depth.
 * Writes `width` values to `out`.
 *
 * # Safety
 * `history` must point to `slots * width` readable doubles and `out` to
 * `width` writable doubles.
 */
enum OdpStatus odp_ha_baseline(const double *history,
                               size_t slots,
                               size_t width,
                               size_t target,
                               size_t l,
                               size_t p,
                               enum OdpHaMode mode,
                               double *out);

/**
 * Loads a workspace directory written by `odp prep`.
 *
 * # Safety
 * `dir` must be a NUL-terminated path and `out` a writable pointer slot.
 */
enum OdpStatus odp_workspace_open(const char *dir, struct OdpWorkspace **out);

/**
 * Number of grids, or 0 for a null handle.
 *
 * # Safety
 * `ws` must be null or a live handle.
 */
size_t odp_workspace_grids(const struct OdpWorkspace *ws);

/**
 * Number of slots, or 0 for a null handle.
 *
 * # Safety
 * `ws` must be null or a live handle.
 */
size_t odp_workspace_slots(const struct OdpWorkspace *ws);

/**
 * Observed OD counts of a 1-based slot as a row-major `n × n` matrix.
 *
 * # Safety
 * `ws` must be a live handle and `out` must hold `len` writable doubles.
 */
enum OdpStatus odp_workspace_od(const struct OdpWorkspace *ws,
                                size_t slot,
                                double *out,
                                size_t len);

/**
 * Releases a workspace handle. Null is ignored.
 *
 * # Safety
 * `ws` must be null or a handle not freed before.
 */
void odp_workspace_free(struct OdpWorkspace *ws);

/**
 * Opens a predictor from a configuration file (the same format `odp`
 * reads). The workspace and checkpoint paths come from that file.
 *
 * # Safety
 * `config` must be a NUL-terminated path and `out` a writable pointer slot.
 */
enum OdpStatus odp_predictor_open(const char *config, struct OdpPredictor **out);

/**
 * # Safety
 * `p` must be null or a live handle.
 */
size_t odp_predictor_grids(const struct OdpPredictor *p);

/**
 * # Safety
 * `p` must be null or a live handle.
 */
size_t odp_predictor_slots(const struct OdpPredictor *p);

/**
 * Predicts slot `target` (0 means the slot after the last observed one).
 * Values are clamped at zero. `demand` receives `n` values and `od` the
 * row-major `n × n` matrix; either may be null when its length is 0.
 *
 * # Safety
 * `p` must be a live handle and the buffers must hold the stated lengths.
 */
enum OdpStatus odp_predictor_predict(const struct OdpPredictor *p,
                                     size_t target,
                                     double *demand,
                                     size_t demand_len,
                                     double *od,
                                     size_t od_len);

/**
 * Releases a predictor handle. Null is ignored.
 *
 * # Safety
 * `p` must be null or a handle not freed before.
 */
void odp_predictor_free(struct OdpPredictor *p);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ODP_H */
