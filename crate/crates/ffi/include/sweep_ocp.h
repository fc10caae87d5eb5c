#ifndef SWEEP_OCP_H
#define SWEEP_OCP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SweepStatus {
  SWEEP_STATUS_OK = 0,
  SWEEP_STATUS_NULL_POINTER = 1,
  SWEEP_STATUS_INVALID_ARGUMENT = 2,
  SWEEP_STATUS_INVALID_SCENARIO = 3,
  SWEEP_STATUS_SIMULATION = 4,
  SWEEP_STATUS_NO_FEASIBLE_POINT = 5,
  SWEEP_STATUS_BUDGET_EXHAUSTED = 6,
  SWEEP_STATUS_NO_CERTIFICATE = 7,
  SWEEP_STATUS_IO = 8,
  SWEEP_STATUS_PANIC = 9,
} SweepStatus;

// A validated scenario and its discrete problem.
typedef struct SweepScenario SweepScenario;

// A discrete arc together with the controls that produced it.
typedef struct SweepTrajectory SweepTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer
// stays valid until the next call on this thread.
const char *sweep_last_error(void);

// Library version as a static string.
const char *sweep_version(void);

// Parses a scenario from a NUL-terminated JSON document.
//
// # Safety
// `json` must be a valid C string and `out` a valid pointer.
enum SweepStatus sweep_scenario_from_json(const char *json, struct SweepScenario **out);

// The built-in two-vehicle scenario.
//
// # Safety
// `out` must be a valid pointer.
enum SweepStatus sweep_scenario_builtin(struct SweepScenario **out);

// Releases a scenario. Null is ignored.
//
// # Safety
// `scenario` must come from this library and not be used afterwards.
void sweep_scenario_free(struct SweepScenario *scenario);

// State dimension, control dimension, face count and step count.
//
// # Safety
// All pointers must be valid.
enum SweepStatus sweep_scenario_dims(const struct SweepScenario *scenario,
                                     size_t *n,
                                     size_t *d,
                                     size_t *s,
                                     size_t *k);

// Simulates on `[0, final_time]`. `controls` holds either one control
// (`d` values) or one per step (`k * d` values, row by row).
//
// # Safety
// `controls` must point to `len` doubles; other pointers must be valid.
enum SweepStatus sweep_simulate(const struct SweepScenario *scenario,
                                const double *controls,
                                size_t len,
                                double final_time,
                                struct SweepTrajectory **out);

// Searches constant controls and the final time. On success `out` holds
// the best arc and `cost` its objective value. A best-found arc is also
// returned with `BUDGET_EXHAUSTED`.
//
// # Safety
// All pointers must be valid.
enum SweepStatus sweep_solve_constant(const struct SweepScenario *scenario,
                                      struct SweepTrajectory **out,
                                      double *cost);

// Releases a trajectory. Null is ignored.
//
// # Safety
// `traj` must come from this library and not be used afterwards.
void sweep_trajectory_free(struct SweepTrajectory *traj);

// Number of steps `k`; zero for null.
//
// # Safety
// `traj` must be null or valid.
size_t sweep_trajectory_steps(const struct SweepTrajectory *traj);

// Final time; NaN for null.
//
// # Safety
// `traj` must be null or valid.
double sweep_trajectory_final_time(const struct SweepTrajectory *traj);

// Copies state `index` (`0..=k`) into `buf`, which holds `len` doubles.
//
// # Safety
// `buf` must point to `len` writable doubles.
enum SweepStatus sweep_trajectory_state(const struct SweepTrajectory *traj,
                                        size_t index,
                                        double *buf,
                                        size_t len);

// Copies the control of step `index` (`0..k`) into `buf`.
//
// # Safety
// `buf` must point to `len` writable doubles.
enum SweepStatus sweep_trajectory_control(const struct SweepTrajectory *traj,
                                          size_t index,
                                          double *buf,
                                          size_t len);

// Writes the arc as CSV to `path`.
//
// # Safety
// `path` must be a valid C string.
enum SweepStatus sweep_trajectory_write_csv(const struct SweepTrajectory *traj, const char *path);

// Searches for optimality multipliers for `traj` under the scenario.
// `exact_tracking` nonzero evaluates the tracking terms against the
// scenario's reference. Writes `μ₀` on success; returns `NO_CERTIFICATE`
// when no bundle passes.
//
// # Safety
// All pointers must be valid.
enum SweepStatus sweep_verify_recover(const struct SweepScenario *scenario,
                                      const struct SweepTrajectory *traj,
                                      int exact_tracking,
                                      double tol,
                                      double *mu0);

// Runs the built-in end-to-end comparison with `k` steps and returns the
// JSON report through `json` (free with [`sweep_string_free`]). `passed`
// receives 1 when every compared quantity is within tolerance.
//
// # Safety
// All pointers must be valid.
enum SweepStatus sweep_reproduce(size_t k, char **json, int *passed);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not be used afterwards.
void sweep_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SWEEP_OCP_H */
