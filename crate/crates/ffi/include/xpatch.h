#ifndef XPATCH_H
#define XPATCH_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum XpatchStatus {
  XPATCH_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  XPATCH_STATUS_NULL_POINTER = 1,
  /**
   * Usage, parameter or configuration error.
   */
  XPATCH_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Malformed or insufficient input data.
   */
  XPATCH_STATUS_DATA = 3,
  /**
   * Incompatible array lengths or shapes.
   */
  XPATCH_STATUS_DIMENSION = 4,
  /**
   * Non-finite or ill-conditioned computation.
   */
  XPATCH_STATUS_NUMERICAL = 5,
  /**
   * File could not be read or written.
   */
  XPATCH_STATUS_IO = 6,
  /**
   * Caller-provided output buffer is too small.
   */
  XPATCH_STATUS_BUFFER_TOO_SMALL = 7,
  /**
   * An internal panic was caught at the boundary.
   */
  XPATCH_STATUS_INTERNAL = 8,
} XpatchStatus;

/**
 * Learning-rate schedule selector for [`xpatch_learning_rate`].
 */
typedef enum XpatchSchedule {
  XPATCH_SCHEDULE_STANDARD = 0,
  XPATCH_SCHEDULE_PATCH_TST = 1,
  XPATCH_SCHEDULE_COSINE_WARMUP = 2,
  XPATCH_SCHEDULE_SIGMOID = 3,
} XpatchSchedule;

/**
 * Opaque trained model, optionally with the scaler it was trained under.
 */
typedef struct XpatchModel XpatchModel;

/**
 * Outcome of [`xpatch_adf`].
 */
typedef struct XpatchAdfResult {
  double t_stat;
  double p_value;
  size_t lags_used;
  /**
   * Observations in the regression.
   */
  size_t nobs;
  double critical_1pct;
  double critical_5pct;
  double critical_10pct;
  bool stationary_at_5pct;
} XpatchAdfResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *xpatch_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *xpatch_version(void);

/**
 * EMA decomposition of `x[0..n]` into `trend` and `seasonal` (each `n` long).
 *
 * # Safety
 * `x` must hold `n` values; `trend` and `seasonal` must each have room for `n`.
 */
enum XpatchStatus xpatch_ema_decompose(const double *x,
                                       size_t n,
                                       double alpha,
                                       double *trend,
                                       double *seasonal);

/**
 * Centered moving-average decomposition with an odd `kernel`.
 *
 * # Safety
 * Same contract as [`xpatch_ema_decompose`].
 */
enum XpatchStatus xpatch_sma_decompose(const double *x,
                                       size_t n,
                                       size_t kernel,
                                       double *trend,
                                       double *seasonal);

/**
 * Arctangent loss coefficient for horizon step `i` (from 1) with scale `m`.
 */
double xpatch_rho_arctan(size_t i, double m);

/**
 * `i^(-1/2)` loss coefficient.
 */
double xpatch_rho_card(size_t i);

/**
 * Learning rate at `epoch`. `w` is the warm-up coefficient (epochs for the
 * cosine schedule); `k` and `s` only affect the sigmoid schedule.
 */
double xpatch_learning_rate(enum XpatchSchedule schedule,
                            size_t epoch,
                            double alpha0,
                            double k,
                            double s,
                            double w,
                            size_t total_epochs);

/**
 * Augmented Dickey-Fuller test with a constant. A negative `max_lags`
 * selects the Schwert rule.
 *
 * # Safety
 * `x` must hold `n` values and `out` must be writable.
 */
enum XpatchStatus xpatch_adf(const double *x,
                             size_t n,
                             int64_t max_lags,
                             struct XpatchAdfResult *out);

/**
 * Loads the checkpoint `<stem>.json` / `<stem>.bin` into a new handle.
 *
 * # Safety
 * `stem` must be a NUL-terminated UTF-8 path and `out` writable.
 */
enum XpatchStatus xpatch_model_load(const char *stem, struct XpatchModel **out);

/**
 * Releases a handle from [`xpatch_model_load`]; null is ignored.
 *
 * # Safety
 * `model` must be null or a live handle not yet freed.
 */
void xpatch_model_free(struct XpatchModel *model);

/**
 * Writes lookback, horizon and variable count; any pointer may be null.
 *
 * # Safety
 * `model` must be a live handle; non-null outputs must be writable.
 */
enum XpatchStatus xpatch_model_dims(const struct XpatchModel *model,
                                    size_t *lookback,
                                    size_t *horizon,
                                    size_t *channels);

/**
 * Forecasts `rows` univariate rows: `input` is `rows x lookback`, `output`
 * receives `rows x horizon`, both row-major and in standardized units.
 * `rows` must be a multiple of the variable count.
 *
 * # Safety
 * `input` must hold `input_len` values and `output` have room for `output_len`.
 */
enum XpatchStatus xpatch_model_predict(const struct XpatchModel *model,
                                       const double *input_rows,
                                       size_t rows,
                                       size_t input_len,
                                       double *output_rows,
                                       size_t output_len);

/**
 * Forecasts from raw observations. `values` is time-major `n_rows x channels`
 * in original units; its last `lookback` rows form the window. `output`
 * receives `horizon x channels` values in original units. Requires a
 * checkpoint saved with its scaler.
 *
 * # Safety
 * `values` must hold `n_rows * channels` values and `output` have room for `output_len`.
 */
enum XpatchStatus xpatch_model_forecast(const struct XpatchModel *model,
                                        const double *values,
                                        size_t n_rows,
                                        double *output_rows,
                                        size_t output_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* XPATCH_H */
