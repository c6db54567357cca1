#ifndef FTS_TELEOP_H
#define FTS_TELEOP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum FtsStatus {
  FTS_STATUS_OK = 0,
  FTS_STATUS_NULL_POINTER = 1,
  FTS_STATUS_INVALID_ARGUMENT = 2,
  FTS_STATUS_IO = 3,
  FTS_STATUS_PARSE = 4,
  FTS_STATUS_INVALID_CONFIG = 5,
  FTS_STATUS_UNSTABLE = 6,
  /**
   * The trace never settles below the tolerance.
   */
  FTS_STATUS_NOT_REACHED = 7,
  FTS_STATUS_PANIC = 8,
} FtsStatus;

/**
 * A validated scenario.
 */
typedef struct FtsScenario FtsScenario;

/**
 * A recorded simulation trace.
 */
typedef struct FtsTrace FtsTrace;

/**
 * Scalar signals of one trace sample.
 */
typedef struct FtsSample {
  double t;
  /**
   * `‖q_l - q_r‖`, rad.
   */
  double err_norm;
  /**
   * Closed-loop energy `H`, J.
   */
  double energy;
} FtsSample;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null if none.
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *fts_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *fts_version(void);

/**
 * Loads and validates a scenario file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum FtsStatus fts_scenario_load(const char *path, struct FtsScenario **out);

/**
 * Releases a scenario. Null is ignored.
 *
 * # Safety
 * `scenario` must come from [`fts_scenario_load`] and not be freed twice.
 */
void fts_scenario_free(struct FtsScenario *scenario);

/**
 * Overrides the integration step.
 *
 * # Safety
 * `scenario` must be a live handle.
 */
enum FtsStatus fts_scenario_set_dt(struct FtsScenario *scenario, double dt);

/**
 * Joint count of the scenario's robots.
 *
 * # Safety
 * `scenario` must be a live handle; `out` must be writable.
 */
enum FtsStatus fts_scenario_dof(const struct FtsScenario *scenario, size_t *out);

/**
 * Settling tolerance configured in the scenario, rad.
 *
 * # Safety
 * `scenario` must be a live handle; `out` must be writable.
 */
enum FtsStatus fts_scenario_tolerance(const struct FtsScenario *scenario, double *out);

/**
 * Runs the scenario and returns a new trace.
 *
 * # Safety
 * `scenario` must be a live handle; `out` must be writable.
 */
enum FtsStatus fts_scenario_simulate(const struct FtsScenario *scenario, struct FtsTrace **out);

/**
 * Releases a trace. Null is ignored.
 *
 * # Safety
 * `trace` must come from [`fts_scenario_simulate`] and not be freed twice.
 */
void fts_trace_free(struct FtsTrace *trace);

/**
 * Number of recorded samples.
 *
 * # Safety
 * `trace` must be a live handle; `out` must be writable.
 */
enum FtsStatus fts_trace_len(const struct FtsTrace *trace, size_t *out);

/**
 * Scalar signals of sample `index`.
 *
 * # Safety
 * `trace` must be a live handle; `out` must be writable.
 */
enum FtsStatus fts_trace_get(const struct FtsTrace *trace, size_t index, struct FtsSample *out);

/**
 * Copies the joint positions of sample `index` into two arrays of
 * length `len`, which must equal the joint count.
 *
 * # Safety
 * `trace` must be a live handle; both arrays must hold `len` doubles.
 */
enum FtsStatus fts_trace_positions(const struct FtsTrace *trace,
                                   size_t index,
                                   double *q_local,
                                   double *q_remote,
                                   size_t len);

/**
 * First time after which the error stays below `tol`. Returns
 * `NotReached` when the trace never settles.
 *
 * # Safety
 * `trace` must be a live handle; `out` must be writable.
 */
enum FtsStatus fts_trace_convergence_time(const struct FtsTrace *trace, double tol, double *out);

/**
 * Writes the trace as CSV.
 *
 * # Safety
 * `trace` must be a live handle; `path` a NUL-terminated string.
 */
enum FtsStatus fts_trace_write_csv(const struct FtsTrace *trace, const char *path);

/**
 * `⌈x⌋^p`.
 *
 * # Safety
 * `out` must be writable.
 */
enum FtsStatus fts_signed_pow(double x, double p, double *out);

/**
 * `(p, δ)`-saturated signed power.
 *
 * # Safety
 * `out` must be writable.
 */
enum FtsStatus fts_sat_pow(double x, double p, double delta, double *out);

/**
 * Integral of the saturated signed power from 0 to `x`.
 *
 * # Safety
 * `out` must be writable.
 */
enum FtsStatus fts_s_integral(double x, double delta, double p, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FTS_TELEOP_H */
