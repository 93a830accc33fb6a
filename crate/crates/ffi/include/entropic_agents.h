/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef ENTROPIC_AGENTS_H
#define ENTROPIC_AGENTS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result codes.
 */
typedef enum EaStatus {
  EA_STATUS_OK = 0,
  EA_STATUS_NULL_POINTER = 1,
  EA_STATUS_INVALID_UTF8 = 2,
  /*
   Rejected scenario or arguments.
   */
  EA_STATUS_CONFIG = 3,
  /*
   An invariant or a-priori bound failed during a run.
   */
  EA_STATUS_INVARIANT = 4,
  EA_STATUS_IO = 5,
  EA_STATUS_PANIC = 6,
} EaStatus;

/*
 A parsed scenario together with its resolved system.
 */
typedef struct EaScenario EaScenario;

/*
 A finished particle-system run.
 */
typedef struct EaTrajectory EaTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Parses a scenario JSON document and resolves its box bounds.

 # Safety
 `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum EaStatus ea_scenario_from_json(const char *json, struct EaScenario **out);

/*
 # Safety
 `scenario` must come from [`ea_scenario_from_json`] or be null.
 */
void ea_scenario_free(struct EaScenario *scenario);

/*
 Writes `r_ε`, `R_ε` and the step bound `θ_ε`.

 # Safety
 All pointers must be valid.
 */
enum EaStatus ea_box_bounds(const struct EaScenario *scenario,
                            double *r_eps,
                            double *upper_eps,
                            double *theta_eps);

/*
 Integrates the scenario's particle system and audits the run.

 # Safety
 `scenario` and `out` must be valid pointers.
 */
enum EaStatus ea_simulate(const struct EaScenario *scenario, struct EaTrajectory **out);

/*
 Number of recorded snapshots.

 # Safety
 Pointers must be valid.
 */
enum EaStatus ea_trajectory_len(const struct EaTrajectory *trajectory, size_t *snapshots);

/*
 Writes the trajectory in long CSV format.

 # Safety
 `trajectory` must be valid and `path` NUL-terminated.
 */
enum EaStatus ea_trajectory_write_csv(const struct EaTrajectory *trajectory, const char *path);

/*
 # Safety
 `trajectory` must come from [`ea_simulate`] or be null.
 */
void ea_trajectory_free(struct EaTrajectory *trajectory);

/*
 `W₁` between two uniform point clouds in `R^dim`, row-major.

 # Safety
 `a` holds `n1 * dim` values, `b` holds `n2 * dim`, `out` is valid.
 */
enum EaStatus ea_w1_spatial(const double *a,
                            size_t n1,
                            const double *b,
                            size_t n2,
                            size_t dim,
                            double *out);

/*
 `I(ℓ) = ∫ ℓ log ℓ` for `ℓ` sampled on the uniform midpoint grid with `m` nodes.

 # Safety
 `values` holds `m` entries and `out` is valid.
 */
enum EaStatus ea_negative_entropy(const double *values, size_t m, double *out);

/*
 Copies the last error message of this thread into `buffer` (NUL-terminated,
 truncated to `len - 1` bytes) and returns the full message length.

 # Safety
 `buffer` must hold `len` bytes, or be null with `len == 0`.
 */
size_t ea_last_error_message(char *buffer, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ENTROPIC_AGENTS_H */
