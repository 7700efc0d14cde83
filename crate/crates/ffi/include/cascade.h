#ifndef CASCADE_H
#define CASCADE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define CASCADE_OK 0

#define CASCADE_ERR_NULL 1

#define CASCADE_ERR_DOMAIN 2

#define CASCADE_ERR_DEGENERATE 3

#define CASCADE_ERR_NONCONVERGENCE 4

#define CASCADE_ERR_CONFIG 5

#define CASCADE_ERR_OTHER 6

#define CASCADE_ERR_PANIC 7

#define CASCADE_VARIANT_SINGLE_THRESHOLD 0

#define CASCADE_VARIANT_VISIT_SYMMETRIC 1

/**
 * Opaque validated model.
 */
typedef struct CascadeModel CascadeModel;

/**
 * Opaque continuation-welfare solution.
 */
typedef struct CascadeWelfare CascadeWelfare;

/**
 * Model primitives, mirroring the fields of the Rust `ModelParams`.
 */
typedef struct CascadeParams {
  double q;
  double kappa;
  double lambda_rate;
  double delta_gap;
  double v_low;
  double first_visit_prob;
  double p_a;
  double p_b;
  double p_max;
  double review_mu;
  double review_r;
  double calvo_hazard;
  double eta0;
} CascadeParams;

typedef struct CascadeBounds {
  double eta_bar;
  double eta_under;
  double llr_bar;
  double llr_under;
} CascadeBounds;

typedef struct CascadeAbsorption {
  double p_wrong;
  double p_wrong_se;
  double p_up;
  double mean_arrivals;
  double mean_time;
  double welfare;
  double welfare_se;
  uint64_t n_runs;
  uint64_t n_censored;
} CascadeAbsorption;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Version string, static and NUL-terminated.
 */
const char *cascade_version(void);

/**
 * Copies the calling thread's last error message into `buf` (truncated,
 * always NUL-terminated). Returns the full message length in bytes.
 *
 * # Safety
 * `buf` must be valid for `len` bytes or null.
 */
size_t cascade_last_error(char *buf, size_t len);

/**
 * Fills `out` with the baseline parameters.
 *
 * # Safety
 * `out` must be a valid pointer or null.
 */
int cascade_params_default(struct CascadeParams *out);

/**
 * Validates `params` and returns a model handle in `out`.
 *
 * # Safety
 * `params` and `out` must be valid pointers or null.
 */
int cascade_model_new(const struct CascadeParams *params, struct CascadeModel **out);

/**
 * # Safety
 * `model` must come from `cascade_model_new` and not be used afterwards.
 */
void cascade_model_free(struct CascadeModel *model);

/**
 * Cascade bounds for `variant` (one of the CASCADE_VARIANT_* constants).
 *
 * # Safety
 * `model` and `out` must be valid pointers or null.
 */
int cascade_model_bounds(const struct CascadeModel *model, int variant, struct CascadeBounds *out);

/**
 * Monte Carlo absorption statistics over `runs` runs.
 *
 * # Safety
 * `model` and `out` must be valid pointers or null.
 */
int cascade_estimate_absorption(const struct CascadeModel *model,
                                uint64_t runs,
                                uint64_t seed,
                                struct CascadeAbsorption *out);

/**
 * Solves continuation welfare on a grid of `grid_points` beliefs.
 *
 * # Safety
 * `model` and `out` must be valid pointers or null.
 */
int cascade_welfare_solve(const struct CascadeModel *model,
                          uint64_t grid_points,
                          double tol,
                          uint64_t max_iters,
                          struct CascadeWelfare **out);

/**
 * W at belief `eta`.
 *
 * # Safety
 * `welfare` and `out` must be valid pointers or null.
 */
int cascade_welfare_at(const struct CascadeWelfare *welfare, double eta, double *out);

/**
 * # Safety
 * `welfare` must come from `cascade_welfare_solve` and not be used afterwards.
 */
void cascade_welfare_free(struct CascadeWelfare *welfare);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CASCADE_H */
