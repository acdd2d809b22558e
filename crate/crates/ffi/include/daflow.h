#ifndef DAFLOW_H
#define DAFLOW_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Which measurement update a filter step uses.
 */
typedef enum DafMethod {
  /**
   * Combined prediction and flow polynomial map.
   */
  DAF_METHOD_DA = 0,
  /**
   * Per-particle integration of dynamics and flow.
   */
  DAF_METHOD_ODE = 1,
} DafMethod;

typedef enum DafStatus {
  DAF_STATUS_OK = 0,
  DAF_STATUS_NULL_POINTER = 1,
  DAF_STATUS_INVALID_ARGUMENT = 2,
  DAF_STATUS_CONFIG = 3,
  DAF_STATUS_NUMERICAL = 4,
  DAF_STATUS_IO = 5,
  DAF_STATUS_BUFFER_TOO_SMALL = 6,
  DAF_STATUS_PANIC = 7,
} DafStatus;

/**
 * Parsed and validated experiment configuration.
 */
typedef struct DafConfig DafConfig;

/**
 * Attitude particle filter with its ensemble.
 */
typedef struct DafFilter DafFilter;

/**
 * Polynomial map from deviations to states.
 */
typedef struct DafMap DafMap;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * NUL-terminated version string with static lifetime.
 */
const char *daf_version(void);

/**
 * Byte length of the calling thread's last error message, without the NUL.
 */
size_t daf_last_error_length(void);

/**
 * Copies the last error message into `buf` (NUL-terminated). Fails with
 * `DAF_STATUS_BUFFER_TOO_SMALL` when `buf_len <= daf_last_error_length()`.
 *
 * # Safety
 * `buf` must point to `buf_len` writable bytes.
 */
enum DafStatus daf_last_error_message(char *buf, size_t buf_len);

/**
 * Reads and validates a JSON configuration file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` a valid pointer.
 */
enum DafStatus daf_config_load(const char *path, struct DafConfig **out);

/**
 * Parses and validates a JSON configuration held in memory.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` a valid pointer.
 */
enum DafStatus daf_config_from_json(const char *json, struct DafConfig **out);

/**
 * Total particle count implied by the configuration (0 for a null handle).
 *
 * # Safety
 * `cfg` must be null or a live handle.
 */
size_t daf_config_n_particles(const struct DafConfig *cfg);

/**
 * # Safety
 * `cfg` must be null or a handle not yet freed.
 */
void daf_config_free(struct DafConfig *cfg);

/**
 * Runs the range-measurement example and writes its CSV files into `out_dir`.
 *
 * # Safety
 * `cfg` must be a live handle and `out_dir` a NUL-terminated string.
 */
enum DafStatus daf_run_toy(const struct DafConfig *cfg, const char *out_dir);

/**
 * Runs the attitude Monte Carlo campaign and writes its CSV files into `out_dir`.
 *
 * # Safety
 * `cfg` must be a live handle and `out_dir` a NUL-terminated string.
 */
enum DafStatus daf_run_attitude(const struct DafConfig *cfg, const char *out_dir);

/**
 * Builds the order-`order` flow map of a 2-D Gaussian prior under a scalar
 * range measurement `y = ‖x‖ + v`, `v ~ N(0, noise_var)`.
 *
 * # Safety
 * `mean` must point to 2 values, `cov` to 4 (row-major); `out` a valid pointer.
 */
enum DafStatus daf_range_flow_map(const double *mean,
                                  const double *cov,
                                  double noise_var,
                                  double y,
                                  size_t order,
                                  struct DafMap **out);

/**
 * Number of deviation variables (0 for a null handle).
 *
 * # Safety
 * `map` must be null or a live handle.
 */
size_t daf_map_n_vars(const struct DafMap *map);

/**
 * Number of output components (0 for a null handle).
 *
 * # Safety
 * `map` must be null or a live handle.
 */
size_t daf_map_len(const struct DafMap *map);

/**
 * Writes the expansion point (`daf_map_n_vars` values) into `out`.
 *
 * # Safety
 * `out` must point to `len` writable doubles.
 */
enum DafStatus daf_map_center(const struct DafMap *map, double *out, size_t len);

/**
 * Evaluates the map at `count` deviations stored back to back.
 *
 * # Safety
 * `deviations` must hold `count * n_vars` doubles and `out` `count * daf_map_len` doubles.
 */
enum DafStatus daf_map_evaluate(const struct DafMap *map,
                                const double *deviations,
                                size_t n_vars,
                                size_t count,
                                double *out,
                                size_t out_len);

/**
 * Writes the text dump (one `component, coefficient, exponents` line per
 * monomial, NUL-terminated) into `buf`. `needed` receives the buffer size
 * required including the NUL, also when the buffer is too small.
 *
 * # Safety
 * `buf` must point to `buf_len` writable bytes (or be null with `buf_len` 0).
 */
enum DafStatus daf_map_dump(const struct DafMap *map, char *buf, size_t buf_len, size_t *needed);

/**
 * # Safety
 * `map` must be null or a handle not yet freed.
 */
void daf_map_free(struct DafMap *map);

/**
 * Creates an attitude filter from an attitude configuration. The ensemble
 * (`daf_config_n_particles` particles) is drawn from `N(mean, cov)` with
 * the given seed; `mean` has 10 entries `[q (scalar last), ω, b]` and `cov` 100.
 *
 * # Safety
 * `cfg` must be a live handle, `mean`/`cov` readable arrays, `out` a valid pointer.
 */
enum DafStatus daf_filter_new_attitude(const struct DafConfig *cfg,
                                       const double *mean,
                                       const double *cov,
                                       uint64_t seed,
                                       struct DafFilter **out);

/**
 * Advances the filter to `t_meas` and assimilates the 9 measurements
 * `[star 1 (3), star 2 (3), gyro (3)]`. `seconds`, when not null, receives
 * the wall-clock time of the step.
 *
 * # Safety
 * `filter` must be a live handle, `y` must hold `y_len` doubles.
 */
enum DafStatus daf_filter_step(struct DafFilter *filter,
                               const double *y,
                               size_t y_len,
                               double t_meas,
                               enum DafMethod method,
                               double *seconds);

/**
 * Time of the last assimilated measurement (NaN for a null handle).
 *
 * # Safety
 * `filter` must be null or a live handle.
 */
double daf_filter_time(const struct DafFilter *filter);

/**
 * Copies the ensemble mean (10 values) into `out`.
 *
 * # Safety
 * `out` must point to `len` writable doubles.
 */
enum DafStatus daf_filter_mean(const struct DafFilter *filter, double *out, size_t len);

/**
 * Copies the ensemble covariance (100 values, row-major) into `out`.
 *
 * # Safety
 * `out` must point to `len` writable doubles.
 */
enum DafStatus daf_filter_covariance(const struct DafFilter *filter, double *out, size_t len);

/**
 * # Safety
 * `filter` must be null or a handle not yet freed.
 */
void daf_filter_free(struct DafFilter *filter);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DAFLOW_H */
