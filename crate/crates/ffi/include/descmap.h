#ifndef DESCMAP_H
#define DESCMAP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DmStatus {
  DM_STATUS_OK = 0,
  DM_STATUS_NULL_POINTER = 1,
  DM_STATUS_INVALID_ARGUMENT = 2,
  DM_STATUS_DIMENSION = 3,
  DM_STATUS_SINGULAR_TRANSFORM = 4,
  DM_STATUS_ILL_CONDITIONED = 5,
  DM_STATUS_MODEL_REJECTED = 6,
  DM_STATUS_NOT_PSD = 7,
  DM_STATUS_SINGULAR_WEIGHT = 8,
  DM_STATUS_UNESTIMABLE = 9,
  DM_STATUS_INFEASIBLE = 10,
  DM_STATUS_LOSS_OF_INFORMATION = 11,
  DM_STATUS_PANIC = 12,
} DmStatus;

typedef enum DmMethod {
  DM_METHOD_BATCH = 0,
  DM_METHOD_RECURSIVE = 1,
  DM_METHOD_ML = 2,
  DM_METHOD_CONSTRAINED = 3,
  DM_METHOD_TRANSFORMED = 4,
  DM_METHOD_DENSE_ORACLE = 5,
} DmMethod;

/**
 * Opaque MAP estimate.
 */
typedef struct DmEstimate DmEstimate;

/**
 * Opaque stochastic descriptor model.
 */
typedef struct DmModel DmModel;

/**
 * Opaque simulated trajectory.
 */
typedef struct DmTrajectory DmTrajectory;

/**
 * Validation findings of a model.
 */
typedef struct DmValidation {
  bool well_posed;
  bool row_rank_ok;
  bool estimable_global;
  bool estimable_u_blocks;
  bool f_full_col_rank;
  bool causal;
  bool overdetermined_blocks_present;
  bool p0_definite;
  size_t index;
} DmValidation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the last failure on this thread; empty after a success.
 * The pointer stays valid until the next call into this library on the same thread.
 */
const char *dm_last_error_message(void);

/**
 * Static name of a status code.
 */
const char *dm_status_name(enum DmStatus status);

const char *dm_version(void);

double dm_default_tol(void);

/**
 * Build a model `E x_{k+1} = A x_k + B u_k + F w_k`, `y_k = H x_k + v_k`.
 *
 * Sizes: `E`, `A` are `n_eq × n`; `B` is `n_eq × j`; `F` is `n_eq × p`; `H` is
 * `m × n`; `R` is `m × m`; `P0` is `n_eq × n_eq`; `r0bar` has `n_eq` entries.
 *
 * # Safety
 * Each pointer must reference the stated number of doubles (or be null when
 * that number is zero); `out` must be a valid pointer.
 */
enum DmStatus dm_model_new(size_t n_eq,
                           size_t n,
                           size_t j,
                           size_t p,
                           size_t m,
                           const double *e,
                           const double *a,
                           const double *b,
                           const double *f,
                           const double *h,
                           const double *r,
                           const double *r0bar,
                           const double *p0,
                           struct DmModel **out);

/**
 * Parse a model from the JSON model-file format.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be a valid pointer.
 */
enum DmStatus dm_model_from_json(const char *json, struct DmModel **out);

/**
 * # Safety
 * `model` must be null or a handle from this library not yet freed.
 */
void dm_model_free(struct DmModel *model);

/**
 * # Safety
 * `model` must be a live handle; each output pointer may be null.
 */
enum DmStatus dm_model_dims(const struct DmModel *model,
                            size_t *n_eq,
                            size_t *n,
                            size_t *j,
                            size_t *p,
                            size_t *m);

/**
 * # Safety
 * `model` must be a live handle and `out` a valid pointer.
 */
enum DmStatus dm_validate(const struct DmModel *model, double tol, struct DmValidation *out);

/**
 * Full validation report as JSON; release with [`dm_string_free`].
 *
 * # Safety
 * `model` must be a live handle and `out` a valid pointer.
 */
enum DmStatus dm_validate_json(const struct DmModel *model, double tol, char **out);

/**
 * # Safety
 * `s` must be null or a string returned by this library not yet freed.
 */
void dm_string_free(char *s);

/**
 * Simulate `horizon` steps. `u` holds `(horizon + 1) × j` row-major inputs, or is
 * null for zero input. Free states are drawn from `N(0, free_q²)`.
 *
 * # Safety
 * `model` must be a live handle, `u` null or sized as stated, `out` valid.
 */
enum DmStatus dm_simulate(const struct DmModel *model,
                          size_t horizon,
                          const double *u,
                          uint64_t seed,
                          double free_q,
                          struct DmTrajectory **out);

/**
 * # Safety
 * `traj` must be null or a handle from this library not yet freed.
 */
void dm_trajectory_free(struct DmTrajectory *traj);

/**
 * # Safety
 * `traj` must be a live handle.
 */
size_t dm_trajectory_horizon(const struct DmTrajectory *traj);

/**
 * Copy `x_0..x_T` (row-major, `(T+1) × n`) into `out` of capacity `len`.
 *
 * # Safety
 * `traj` must be a live handle and `out` point to `len` doubles.
 */
enum DmStatus dm_trajectory_states(const struct DmTrajectory *traj, double *out, size_t len);

/**
 * Copy `y_0..y_T` (row-major, `(T+1) × m`) into `out` of capacity `len`.
 *
 * # Safety
 * `traj` must be a live handle and `out` point to `len` doubles.
 */
enum DmStatus dm_trajectory_measurements(const struct DmTrajectory *traj, double *out, size_t len);

/**
 * MAP estimate from `horizon + 1` measurements `y` (row-major `(T+1) × m`) and
 * inputs `u` (row-major `(T+1) × j`, null when `j = 0`). `q` is used by the
 * transformed method only.
 *
 * # Safety
 * `model` must be a live handle, `y`/`u` sized as stated, `out` valid.
 */
enum DmStatus dm_estimate(const struct DmModel *model,
                          size_t horizon,
                          const double *y,
                          const double *u,
                          enum DmMethod method,
                          double q,
                          double tol,
                          struct DmEstimate **out);

/**
 * # Safety
 * `est` must be null or a handle from this library not yet freed.
 */
void dm_estimate_free(struct DmEstimate *est);

/**
 * # Safety
 * `est` must be a live handle.
 */
size_t dm_estimate_horizon(const struct DmEstimate *est);

/**
 * Objective value at the estimate; NaN for a null handle.
 *
 * # Safety
 * `est` must be a live handle or null.
 */
double dm_estimate_objective(const struct DmEstimate *est);

/**
 * Copy `x̂_0..x̂_T` (row-major, `(T+1) × n`) into `out` of capacity `len`.
 *
 * # Safety
 * `est` must be a live handle and `out` point to `len` doubles.
 */
enum DmStatus dm_estimate_states(const struct DmEstimate *est, double *out, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DESCMAP_H */
