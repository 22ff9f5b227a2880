#ifndef LOWRANK_PHASES_H
#define LOWRANK_PHASES_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code returned by every fallible function.
 */
typedef enum LrpStatus {
  LRP_STATUS_OK = 0,
  LRP_STATUS_NULL_POINTER = 1,
  LRP_STATUS_INVALID_ARGUMENT = 2,
  LRP_STATUS_DIMENSION_MISMATCH = 3,
  LRP_STATUS_NOT_SYMMETRIC = 4,
  LRP_STATUS_DIVERGED = 5,
  LRP_STATUS_PANIC = 6,
  LRP_STATUS_INTERNAL = 7,
} LrpStatus;

typedef enum LrpStopReason {
  LRP_STOP_REASON_MAX_ITERS = 0,
  LRP_STOP_REASON_LOSS_THRESHOLD = 1,
  LRP_STOP_REASON_TEST_ERROR_THRESHOLD = 2,
  LRP_STOP_REASON_DIVERGED = 3,
} LrpStopReason;

/**
 * Opaque problem instance: planted factor, operator and measurements.
 */
typedef struct LrpInstance LrpInstance;

/**
 * Opaque measurement operator.
 */
typedef struct LrpOperator LrpOperator;

/**
 * Opaque result of a gradient descent run.
 */
typedef struct LrpTrajectory LrpTrajectory;

/**
 * Gradient descent settings. A threshold that is NaN or not positive is
 * disabled.
 */
typedef struct LrpSolverOptions {
  size_t r;
  double mu;
  double alpha;
  size_t max_iters;
  size_t record_stride;
  double stop_loss;
  double stop_test_error;
  uint64_t seed;
  /**
   * Haar orthogonal start instead of iid Gaussian; needs `r == n`.
   */
  bool orthonormal_init;
} LrpSolverOptions;

/**
 * One recorded iterate; the fields follow the trajectory CSV columns.
 */
typedef struct LrpTrajectoryRow {
  size_t t;
  double loss;
  double test_error;
  double test_error_rel;
  double sigma_rstar;
  double sigma_rstar_plus1;
  double spec_norm;
  double angle_l_lt;
  double angle_x_lt;
  double signal_sigma_min;
  double noise_spec;
  double angle_x_signal;
  double sigma_min_vxu;
} LrpTrajectoryRow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *lrp_version(void);

/**
 * Why the most recent call on this thread failed; empty after a success.
 * The pointer stays valid until the next call into the library on the
 * same thread.
 */
const char *lrp_last_error(void);

/**
 * Draws `m` symmetrized Gaussian measurement matrices of size `n x n`.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum LrpStatus lrp_operator_new(size_t n, size_t m, uint64_t seed, struct LrpOperator **out);

/**
 * # Safety
 * `op` must be NULL or a handle from [`lrp_operator_new`] not yet freed.
 */
void lrp_operator_free(struct LrpOperator *op);

/**
 * Writes `n` and `m` of the operator.
 *
 * # Safety
 * `op` must be a live handle; `n` and `m` must be writable.
 */
enum LrpStatus lrp_operator_dims(const struct LrpOperator *op, size_t *n, size_t *m);

/**
 * `y = A(Z)` for a symmetric `n x n` matrix `Z` (`z_len = n*n`, `y_len = m`).
 *
 * # Safety
 * `z` must hold `z_len` readable doubles and `y` `y_len` writable doubles.
 */
enum LrpStatus lrp_operator_apply(const struct LrpOperator *op,
                                  const double *z,
                                  size_t z_len,
                                  double *y,
                                  size_t y_len);

/**
 * `Z = A*(y)` (`y_len = m`, `z_len = n*n`).
 *
 * # Safety
 * `y` must hold `y_len` readable doubles and `z` `z_len` writable doubles.
 */
enum LrpStatus lrp_operator_adjoint(const struct LrpOperator *op,
                                    const double *y,
                                    size_t y_len,
                                    double *z,
                                    size_t z_len);

/**
 * Sampled lower bound on the rank-`rank` restricted-isometry constant.
 *
 * # Safety
 * `op` must be a live handle and `delta` writable.
 */
enum LrpStatus lrp_operator_estimate_rip(const struct LrpOperator *op,
                                         size_t rank,
                                         size_t trials,
                                         uint64_t seed,
                                         double *delta);

/**
 * Builds an instance with a planted `n x r_star` factor and `m`
 * measurements. `kappa == 1` plants an orthonormal factor; larger values
 * give singular values geometric from 1 to `1/kappa`.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum LrpStatus lrp_instance_new(size_t n,
                                size_t r_star,
                                size_t m,
                                uint64_t truth_seed,
                                uint64_t operator_seed,
                                double kappa,
                                struct LrpInstance **out);

/**
 * # Safety
 * `inst` must be NULL or a handle from [`lrp_instance_new`] not yet freed.
 */
void lrp_instance_free(struct LrpInstance *inst);

/**
 * Copies the planted factor `X` (`x_len = n * r_star`).
 *
 * # Safety
 * `x` must hold `x_len` writable doubles.
 */
enum LrpStatus lrp_instance_truth(const struct LrpInstance *inst, double *x, size_t x_len);

/**
 * `f(U) = 1/4 ||A(U U^T) - y||^2` for an `n x r` factor.
 *
 * # Safety
 * `u` must hold `u_len = n*r` readable doubles and `loss` be writable.
 */
enum LrpStatus lrp_instance_loss(const struct LrpInstance *inst,
                                 const double *u,
                                 size_t u_len,
                                 size_t r,
                                 double *loss);

/**
 * Gradient of the loss at an `n x r` factor, written to `grad` (`n*r`).
 *
 * # Safety
 * `u` must hold `u_len` readable doubles and `grad` `u_len` writable ones.
 */
enum LrpStatus lrp_instance_gradient(const struct LrpInstance *inst,
                                     const double *u,
                                     size_t u_len,
                                     size_t r,
                                     double *grad,
                                     size_t grad_len);

/**
 * `||U U^T - X X^T||_F` for an `n x r` factor.
 *
 * # Safety
 * `u` must hold `u_len = n*r` readable doubles and `err` be writable.
 */
enum LrpStatus lrp_instance_test_error(const struct LrpInstance *inst,
                                       const double *u,
                                       size_t u_len,
                                       size_t r,
                                       double *err);

/**
 * Defaults: `r = 1`, `mu = 0.25`, `alpha = 1e-6`, 1000 iterations, every
 * iterate recorded, no stopping thresholds, seed 0.
 */
struct LrpSolverOptions lrp_solver_options_default(void);

/**
 * Runs gradient descent. A run that hits a non-finite iterate still
 * returns `LRP_STATUS_OK` with a trajectory whose stop reason is
 * `LRP_STOP_REASON_DIVERGED`.
 *
 * # Safety
 * `inst` and `opts` must be valid; `out` must be writable.
 */
enum LrpStatus lrp_run_gd(const struct LrpInstance *inst,
                          const struct LrpSolverOptions *opts,
                          struct LrpTrajectory **out);

/**
 * # Safety
 * `traj` must be NULL or a handle from [`lrp_run_gd`] not yet freed.
 */
void lrp_trajectory_free(struct LrpTrajectory *traj);

/**
 * Number of recorded rows, or 0 for a NULL handle.
 *
 * # Safety
 * `traj` must be NULL or a live handle.
 */
size_t lrp_trajectory_len(const struct LrpTrajectory *traj);

/**
 * Number of gradient steps taken, or 0 for a NULL handle.
 *
 * # Safety
 * `traj` must be NULL or a live handle.
 */
size_t lrp_trajectory_iterations(const struct LrpTrajectory *traj);

/**
 * # Safety
 * `traj` must be a live handle and `row` writable.
 */
enum LrpStatus lrp_trajectory_row(const struct LrpTrajectory *traj,
                                  size_t index,
                                  struct LrpTrajectoryRow *row);

/**
 * # Safety
 * `traj` must be a live handle and `reason` writable.
 */
enum LrpStatus lrp_trajectory_stop_reason(const struct LrpTrajectory *traj,
                                          enum LrpStopReason *reason);

/**
 * Copies the last finite iterate (`u_len = n*r`).
 *
 * # Safety
 * `u` must hold `u_len` writable doubles.
 */
enum LrpStatus lrp_trajectory_final_factor(const struct LrpTrajectory *traj,
                                           double *u,
                                           size_t u_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LOWRANK_PHASES_H */
