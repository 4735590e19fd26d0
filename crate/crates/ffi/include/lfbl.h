#ifndef LFBL_H
#define LFBL_H

/* Generated by cbindgen from crates/ffi/src. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LfblStatus {
  LFBL_STATUS_OK = 0,
  LFBL_STATUS_NULL_POINTER = 1,
  LFBL_STATUS_INVALID_ARGUMENT = 2,
  LFBL_STATUS_DIMENSION = 3,
  LFBL_STATUS_SINGULAR = 4,
  LFBL_STATUS_NO_STABILIZING_SOLUTION = 5,
  LFBL_STATUS_INFEASIBLE = 6,
  LFBL_STATUS_MAX_ITERATIONS = 7,
  LFBL_STATUS_NON_FINITE = 8,
  LFBL_STATUS_SPEED_TOO_LOW = 9,
  LFBL_STATUS_DIVERGED = 10,
  LFBL_STATUS_IO = 11,
  LFBL_STATUS_MODEL_FILE = 12,
  LFBL_STATUS_PANIC = 13,
} LfblStatus;

typedef enum LfblDrift {
  LFBL_DRIFT_EXACT = 0,
  LFBL_DRIFT_AS_PRINTED = 1,
} LfblDrift;

// Opaque experiment configuration.
typedef struct LfblConfig LfblConfig;

// Opaque reference plan.
typedef struct LfblPlan LfblPlan;

// Opaque correction policy.
typedef struct LfblPolicy LfblPolicy;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Static description of a status code.
const char *lfbl_status_name(enum LfblStatus status);

// Copies the calling thread's last error message into `buf` (always
// NUL-terminated when `cap > 0`) and returns the full message length.
//
// # Safety
// `buf` must be null or point to `cap` writable bytes.
uintptr_t lfbl_last_error(char *buf, uintptr_t cap);

// # Safety
// `out` must be a valid pointer to a handle slot.
enum LfblStatus lfbl_config_default(struct LfblConfig **out);

// Parses a TOML experiment config.
//
// # Safety
// `toml` must be a NUL-terminated string and `out` a valid handle slot.
enum LfblStatus lfbl_config_from_toml(const char *toml, struct LfblConfig **out);

// # Safety
// `cfg` must be a live handle from `lfbl_config_*`.
enum LfblStatus lfbl_config_set_seed(struct LfblConfig *cfg, uint64_t seed);

// # Safety
// `cfg` must be null or a handle not yet freed.
void lfbl_config_free(struct LfblConfig *cfg);

// Plans the configured scenario.
//
// # Safety
// `cfg` must be a live config handle and `out` a valid handle slot.
enum LfblStatus lfbl_plan_create(const struct LfblConfig *cfg, struct LfblPlan **out);

// Number of planned states, or 0 for a null handle.
//
// # Safety
// `plan` must be null or a live plan handle.
uintptr_t lfbl_plan_len(const struct LfblPlan *plan);

// Writes planned state `k` as `(x, ẋ, y, ẏ)` into `out[4]`.
//
// # Safety
// `plan` must be a live plan handle and `out` point to 4 doubles.
enum LfblStatus lfbl_plan_state(const struct LfblPlan *plan, uintptr_t k, double *out);

// Writes planned input `k` into `out[2]`; valid for `k < len − 1`.
//
// # Safety
// `plan` must be a live plan handle and `out` point to 2 doubles.
enum LfblStatus lfbl_plan_input(const struct LfblPlan *plan, uintptr_t k, double *out);

// # Safety
// `plan` must be a live plan handle and `out` a valid pointer.
enum LfblStatus lfbl_plan_objective(const struct LfblPlan *plan, double *out);

// # Safety
// `plan` must be null or a handle not yet freed.
void lfbl_plan_free(struct LfblPlan *plan);

// Stabilizing solution of `AᵀP + PA − PBR⁻¹BᵀP + Q = 0`; `a` is n×n,
// `b` n×m, `q` n×n, `r` m×m and `p_out` receives n×n.
//
// # Safety
// Every pointer must reference arrays of the stated sizes.
enum LfblStatus lfbl_solve_care(const double *a,
                                const double *b,
                                const double *q,
                                const double *r,
                                uintptr_t n,
                                uintptr_t m,
                                double *p_out);

// LQR gain `F = R⁻¹BᵀP` (m×n) for the same inputs as [`lfbl_solve_care`].
//
// # Safety
// Every pointer must reference arrays of the stated sizes.
enum LfblStatus lfbl_lqr_gain(const double *a,
                              const double *b,
                              const double *q,
                              const double *r,
                              uintptr_t n,
                              uintptr_t m,
                              double *f_out);

// One RK4 step of the bicycle. `state` is `(x, y, ψ, V, β)`, `control`
// is `(a, b)`.
//
// # Safety
// `state` and `out` must point to 5 doubles, `control` to 2.
enum LfblStatus lfbl_vehicle_step(const double *state,
                                  const double *control,
                                  double l_r,
                                  double l_f,
                                  double dt,
                                  double *out);

// Nominal linearizing control `u = A⁻¹(v − b)` into `out[2]`.
//
// # Safety
// `state` must point to 5 doubles, `v` and `out` to 2.
enum LfblStatus lfbl_nominal_control(const double *state,
                                     const double *v,
                                     double l_r,
                                     double l_f,
                                     enum LfblDrift drift,
                                     double eps_v,
                                     double *out);

// Loads a policy written by the CLI's `train` command.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid handle slot.
enum LfblStatus lfbl_policy_load(const char *path, struct LfblPolicy **out);

// Writes `(Δβ₁, Δβ₂, Δα₁₁, Δα₁₂, Δα₂₁, Δα₂₂)` at `state` into `out[6]`.
//
// # Safety
// `policy` must be a live handle, `state` point to 5 doubles and `out` to 6.
enum LfblStatus lfbl_policy_corrections(const struct LfblPolicy *policy,
                                        const double *state,
                                        double *out);

// # Safety
// `policy` must be null or a handle not yet freed.
void lfbl_policy_free(struct LfblPolicy *policy);

// Noise-free episode return of `policy` on the configured scenario; a
// null policy runs the nominal controller (the baseline).
//
// # Safety
// `cfg` must be a live config handle, `policy` null or a live policy
// handle and `out` a valid pointer.
enum LfblStatus lfbl_episode_return(const struct LfblConfig *cfg,
                                    const struct LfblPolicy *policy,
                                    double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LFBL_H */
