#ifndef WAVEMIX_H
#define WAVEMIX_H

/* Generated by cbindgen from crates/ffi; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every call.
 */
typedef enum WmStatus {
  WM_STATUS_OK = 0,
  WM_STATUS_NULL_POINTER = 1,
  WM_STATUS_INVALID_LENGTH = 2,
  WM_STATUS_NON_FINITE = 3,
  WM_STATUS_STRUCTURE = 4,
  WM_STATUS_DOMAIN = 5,
  WM_STATUS_INVALID_CONFIG = 6,
  WM_STATUS_INSUFFICIENT_REPLICATES = 7,
  WM_STATUS_CALIBRATION = 8,
  WM_STATUS_INPUT = 9,
  WM_STATUS_IO = 10,
  WM_STATUS_BUFFER_TOO_SMALL = 11,
  WM_STATUS_PANIC = 12,
} WmStatus;

typedef enum WmFilter {
  WM_FILTER_D1 = 1,
  WM_FILTER_D2 = 2,
  WM_FILTER_D5 = 5,
  WM_FILTER_D7 = 7,
} WmFilter;

typedef enum WmRule {
  WM_RULE_HARD = 0,
  WM_RULE_SOFT = 1,
  WM_RULE_SCAD = 2,
} WmRule;

typedef enum WmSelector {
  WM_SELECTOR_UNIVERSAL = 0,
  WM_SELECTOR_SURE = 1,
  WM_SELECTOR_HYBRID = 2,
} WmSelector;

typedef enum WmVariance {
  WM_VARIANCE_HET = 0,
  WM_VARIANCE_MAD = 1,
} WmVariance;

typedef enum WmStrategy {
  WM_STRATEGY_AVERAGE_THEN_SHRINK = 0,
  WM_STRATEGY_SHRINK_THEN_AVERAGE = 1,
  WM_STRATEGY_POINTWISE_AVERAGE = 2,
} WmStrategy;

/**
 * Output of [`wm_estimate`].
 */
typedef struct WmEstimate WmEstimate;

/**
 * Replicate curves, one row per curve.
 */
typedef struct WmPanel WmPanel;

/**
 * Estimator settings. Fill with [`wm_policy_default`] and adjust.
 *
 * `filter`, `rule`, `selector`, `variance` and `strategy` hold values of
 * the matching `Wm*` enumerations.
 */
typedef struct WmPolicy {
  int32_t filter;
  int32_t rule;
  double scad_a;
  int32_t selector;
  size_t j0;
  double scale;
  /**
   * Nonzero: thresholds use the per-sample standard deviation instead of
   * the standard error of the mean.
   */
  int32_t per_sample_noise;
  int32_t variance;
  int32_t strategy;
} WmPolicy;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the most recent failed call on this thread, or an empty
 * string. The pointer stays valid until the next call on the same thread.
 */
const char *wm_last_error(void);

/**
 * Library version as a NUL-terminated string with static lifetime.
 */
const char *wm_version(void);

/**
 * Writes the default settings: D2 filter, SCAD with a = 3.7, universal
 * thresholds from level 3, heteroscedastic variances, average then shrink.
 */
enum WmStatus wm_policy_default(struct WmPolicy *out);

/**
 * Copies `n_curves * n_points` row-major values into a new panel.
 * `n_points` must be a power of two >= 2.
 */
enum WmStatus wm_panel_new(const double *data,
                           size_t n_curves,
                           size_t n_points,
                           struct WmPanel **out);

void wm_panel_free(struct WmPanel *panel);

size_t wm_panel_curves(const struct WmPanel *panel);

size_t wm_panel_points(const struct WmPanel *panel);

/**
 * Estimates the mean curve. `policy` may be null for the defaults.
 */
enum WmStatus wm_estimate(const struct WmPanel *panel,
                          const struct WmPolicy *policy,
                          struct WmEstimate **out);

void wm_estimate_free(struct WmEstimate *estimate);

/**
 * Number of points in the estimated curve.
 */
size_t wm_estimate_len(const struct WmEstimate *estimate);

/**
 * Copies the estimated curve into `out`, which holds `len` values.
 */
enum WmStatus wm_estimate_curve(const struct WmEstimate *estimate, double *out, size_t len);

/**
 * Copies the shrunk coefficients in flat tree layout.
 */
enum WmStatus wm_estimate_coefficients(const struct WmEstimate *estimate, double *out, size_t len);

/**
 * Copies the per-sample coefficient variances in flat tree layout. Fails
 * with `WM_STATUS_INVALID_CONFIG` when the strategy produced none.
 */
enum WmStatus wm_estimate_variances(const struct WmEstimate *estimate, double *out, size_t len);

/**
 * Orthonormal periodized forward transform of `len` values into `out`
 * (flat tree layout, same length).
 */
enum WmStatus wm_dwt_forward(const double *signal, size_t len, int32_t filter, double *out);

/**
 * Inverse of [`wm_dwt_forward`].
 */
enum WmStatus wm_dwt_inverse(const double *coeffs, size_t len, int32_t filter, double *out);

/**
 * Applies a scalar shrinkage rule. `scad_a` is ignored unless `rule` is SCAD.
 */
enum WmStatus wm_shrink(int32_t rule, double scad_a, double d, double lambda, double *out);

/**
 * Samples a test function (0 blocks, 1 bumps, 2 heavisine, 3 doppler) at
 * `(i + 0.5) / m`.
 */
enum WmStatus wm_test_function(int32_t function, size_t m, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WAVEMIX_H */
