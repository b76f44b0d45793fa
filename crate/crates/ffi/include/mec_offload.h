#ifndef MEC_OFFLOAD_H
#define MEC_OFFLOAD_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MecStatus {
  MEC_STATUS_OK = 0,
  MEC_STATUS_NULL_POINTER = 1,
  MEC_STATUS_INVALID_UTF8 = 2,
  MEC_STATUS_INVALID_CONFIG = 3,
  /**
   * A device index, server index or buffer length is out of range.
   */
  MEC_STATUS_OUT_OF_RANGE = 4,
  /**
   * The profile or subproblem admits no feasible strategy.
   */
  MEC_STATUS_INFEASIBLE = 5,
  /**
   * A server would be at or above full utilization.
   */
  MEC_STATUS_UNSTABLE = 6,
  MEC_STATUS_NO_CONVERGENCE = 7,
  MEC_STATUS_PANIC = 8,
  MEC_STATUS_INTERNAL = 9,
} MecStatus;

/**
 * Result of iterated best response.
 */
typedef struct MecEquilibrium MecEquilibrium;

/**
 * A validated scenario together with the game settings from its file.
 */
typedef struct MecScenario MecScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Parses an experiment file and builds its scenario, solving transmit powers.
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out` a valid pointer.
 */
enum MecStatus mec_scenario_from_toml(const char *toml, struct MecScenario **out);

/**
 * # Safety
 * `scenario` must come from [`mec_scenario_from_toml`] and not be freed yet;
 * null is ignored.
 */
void mec_scenario_free(struct MecScenario *scenario);

/**
 * Number of devices; 0 for a null handle.
 *
 * # Safety
 * `scenario` must be null or a live handle.
 */
size_t mec_scenario_num_devices(const struct MecScenario *scenario);

/**
 * Number of servers; 0 for a null handle.
 *
 * # Safety
 * `scenario` must be null or a live handle.
 */
size_t mec_scenario_num_servers(const struct MecScenario *scenario);

/**
 * Runs iterated best response from the file's initial profile with its game
 * settings. A run that stops at the iteration cap still returns `MEC_OK`;
 * check [`mec_equilibrium_converged`].
 *
 * # Safety
 * `scenario` must be a live handle and `out` a valid pointer.
 */
enum MecStatus mec_solve(const struct MecScenario *scenario, struct MecEquilibrium **out);

/**
 * # Safety
 * `eq` must come from [`mec_solve`] and not be freed yet; null is ignored.
 */
void mec_equilibrium_free(struct MecEquilibrium *eq);

/**
 * # Safety
 * `eq` must be null or a live handle.
 */
bool mec_equilibrium_converged(const struct MecEquilibrium *eq);

/**
 * Best-response sweeps performed.
 *
 * # Safety
 * `eq` must be null or a live handle.
 */
size_t mec_equilibrium_sweeps(const struct MecEquilibrium *eq);

/**
 * Largest response-time gain any device could still get by deviating; NaN
 * for a null handle.
 *
 * # Safety
 * `eq` must be null or a live handle.
 */
double mec_equilibrium_residual(const struct MecEquilibrium *eq);

/**
 * Copies the final profile, row-major, into `rates` of length `len`.
 *
 * # Safety
 * `eq` must be a live handle and `rates` valid for `len` writes.
 */
enum MecStatus mec_equilibrium_profile(const struct MecEquilibrium *eq, double *rates, size_t len);

/**
 * Mean response time of `device` at the final profile.
 *
 * # Safety
 * `eq` must be a live handle and `out` a valid pointer.
 */
enum MecStatus mec_equilibrium_response_time(const struct MecEquilibrium *eq,
                                             size_t device,
                                             double *out);

/**
 * Mean response time of `device` under the row-major profile `rates`.
 *
 * # Safety
 * `scenario` must be a live handle, `rates` valid for `len` reads and `out` a
 * valid pointer.
 */
enum MecStatus mec_response_time(const struct MecScenario *scenario,
                                 const double *rates,
                                 size_t len,
                                 size_t device,
                                 double *out);

/**
 * Best response of `device` to the row-major profile `rates`: writes its
 * `servers` offload rates to `strategy` and the resulting response time to
 * `response_time`.
 *
 * # Safety
 * `scenario` must be a live handle, `rates` valid for `len` reads, `strategy`
 * valid for `strategy_len` writes and `response_time` a valid pointer.
 */
enum MecStatus mec_best_response(const struct MecScenario *scenario,
                                 const double *rates,
                                 size_t len,
                                 size_t device,
                                 double *strategy,
                                 size_t strategy_len,
                                 double *response_time);

/**
 * Message of the last error on this thread, or null if none. Free it with
 * [`mec_string_free`].
 */
char *mec_last_error_message(void);

/**
 * # Safety
 * `s` must come from [`mec_last_error_message`] and not be freed yet; null is
 * ignored.
 */
void mec_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MEC_OFFLOAD_H */
