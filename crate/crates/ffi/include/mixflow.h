#ifndef MIXFLOW_H
#define MIXFLOW_H

/* Generated by cbindgen from the mixflow-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call in this ABI.
typedef enum MixflowStatus {
  // The call succeeded.
  MIXFLOW_STATUS_OK = 0,
  // A required pointer argument was null.
  MIXFLOW_STATUS_NULL_ARGUMENT = 1,
  // A string argument was not valid UTF-8.
  MIXFLOW_STATUS_INVALID_UTF8 = 2,
  // A configuration file failed to load or parse.
  MIXFLOW_STATUS_CONFIG = 3,
  // The scenario or an argument failed validation.
  MIXFLOW_STATUS_INVALID = 4,
  // The simulation aborted (safety invariant or internal failure).
  MIXFLOW_STATUS_ENGINE = 5,
  // The requested quantity has no value for this run (e.g. no estimate).
  MIXFLOW_STATUS_NO_VALUE = 6,
  // An index was out of range.
  MIXFLOW_STATUS_OUT_OF_RANGE = 7,
  // The caller's buffer is too small for the requested string.
  MIXFLOW_STATUS_BUFFER_TOO_SMALL = 8,
} MixflowStatus;

// A finished replication reduced to lane-group and intersection summaries
// (opaque).
typedef struct MixflowRunResult MixflowRunResult;

// An intersection scenario under construction (opaque).
typedef struct MixflowScenario MixflowScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string; never null, never freed.
const char *mixflow_version(void);

// Copy the thread's last error message into `buf` (NUL-terminated) and
// return the full length including the NUL. When `buf` is null or `cap` is
// too small, nothing is copied and the required length is still returned.
//
// # Safety
// `buf`, when non-null, must point to at least `cap` writable bytes.
size_t mixflow_last_error_message(char *buf, size_t cap);

// New scenario with the built-in four-approach testbed geometry, demands,
// and signal plan. Free with [`mixflow_scenario_free`].
struct MixflowScenario *mixflow_scenario_default(void);

// Load a scenario file (TOML; omitted fields keep their testbed defaults)
// and store the new handle in `*out`.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer; on
// success the caller owns `*out` and must free it with
// [`mixflow_scenario_free`].
enum MixflowStatus mixflow_scenario_from_toml(const char *path, struct MixflowScenario **out);

// Replace the scenario's fleet shares; the four values must be nonnegative
// and sum to 1.
//
// # Safety
// `sc` must be a live handle from this library.
enum MixflowStatus mixflow_scenario_set_shares(struct MixflowScenario *sc,
                                               double hv,
                                               double cv,
                                               double av,
                                               double cav);

// Set the warmup and measured durations, in seconds.
//
// # Safety
// `sc` must be a live handle from this library.
enum MixflowStatus mixflow_scenario_set_horizon(struct MixflowScenario *sc,
                                                double warmup,
                                                double duration);

// Release a scenario handle. Null is a no-op.
//
// # Safety
// `sc` must be null or a handle not freed before.
void mixflow_scenario_free(struct MixflowScenario *sc);

// Simulate one replication with the built-in driver profiles and store the
// result handle in `*out`.
//
// # Safety
// `sc` must be a live handle and `out` a valid pointer; on success the
// caller owns `*out` and must free it with [`mixflow_result_free`].
enum MixflowStatus mixflow_run(const struct MixflowScenario *sc,
                               uint64_t seed,
                               struct MixflowRunResult **out);

// Like [`mixflow_run`], but first loads per-fleet driver-profile overrides
// from a TOML file (e.g. calibrated CC0/CC1 values).
//
// # Safety
// Pointer requirements of [`mixflow_run`] plus `profiles_path` must be a
// NUL-terminated string.
enum MixflowStatus mixflow_run_with_profile_file(const struct MixflowScenario *sc,
                                                 const char *profiles_path,
                                                 uint64_t seed,
                                                 struct MixflowRunResult **out);

// Number of measured lane groups in a result; 0 when the handle is null.
//
// # Safety
// `res` must be null or a live handle from this library.
size_t mixflow_result_group_count(const struct MixflowRunResult *res);

// Copy the lane-group identifier (e.g. "eb_excl_through") into `buf`.
//
// # Safety
// `res` must be a live handle; `buf` must point to `cap` writable bytes.
enum MixflowStatus mixflow_result_group_id(const struct MixflowRunResult *res,
                                           size_t index,
                                           char *buf,
                                           size_t cap);

// Saturation headway (s) of one lane group; `NoValue` when the run produced
// no estimate for it.
//
// # Safety
// `res` must be a live handle and `out` a valid pointer.
enum MixflowStatus mixflow_result_group_headway(const struct MixflowRunResult *res,
                                                size_t index,
                                                double *out);

// Hourly bar-crossing throughput (veh/h) of one lane group.
//
// # Safety
// `res` must be a live handle and `out` a valid pointer.
enum MixflowStatus mixflow_result_group_throughput(const struct MixflowRunResult *res,
                                                   size_t index,
                                                   double *out);

// Volume-weighted intersection saturation headway (s).
//
// # Safety
// `res` must be a live handle and `out` a valid pointer.
enum MixflowStatus mixflow_result_intersection_headway(const struct MixflowRunResult *res,
                                                       double *out);

// Total intersection throughput (veh/h).
//
// # Safety
// `res` must be a live handle and `out` a valid pointer.
enum MixflowStatus mixflow_result_intersection_throughput(const struct MixflowRunResult *res,
                                                          double *out);

// Release a result handle. Null is a no-op.
//
// # Safety
// `res` must be null or a handle not freed before.
void mixflow_result_free(struct MixflowRunResult *res);

// Lane capacity (veh/h) from a saturation headway (s) and a green ratio
// `green / cycle` (s/s).
//
// # Safety
// `out` must be a valid pointer.
enum MixflowStatus mixflow_capacity(double h_s, double green, double cycle, double *out);

// Through-lane capacity adjustment factor for a fleet mix, given fitted
// model coefficients (base intercept and the three share effects).
//
// # Safety
// `out` must be a valid pointer.
enum MixflowStatus mixflow_caf_through(double intercept,
                                       double beta_cv,
                                       double beta_av,
                                       double beta_cav,
                                       double cv,
                                       double av,
                                       double cav,
                                       double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MIXFLOW_H */
