#ifndef HJPDHG_H
#define HJPDHG_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/*
 Status codes returned by every function.
 */
typedef enum HjStatus {
  HJ_STATUS_OK = 0,
  HJ_STATUS_NULL_POINTER = 1,
  HJ_STATUS_INVALID_ARGUMENT = 2,
  HJ_STATUS_CONFIG = 3,
  HJ_STATUS_IO = 4,
  /*
   The solver stopped at its iteration limit; the solution is still
   returned.
   */
  HJ_STATUS_NOT_CONVERGED = 5,
  HJ_STATUS_PANIC = 6,
} HjStatus;

/*
 A validated run configuration and the problem it describes.
 */
typedef struct HjProblem HjProblem;

/*
 Solver output bound to the problem it was computed for.
 */
typedef struct HjSolution HjSolution;

typedef struct HjTrajectory HjTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or null if none failed.
 The pointer stays valid until the next failing call on the same thread.
 */
const char *hj_last_error_message(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *hj_version(void);

/*
 Parses a JSON run configuration (the format read by `hjpdhg solve`).

 # Safety
 `json` must be a NUL-terminated string and `out` a writable pointer.
 */
enum HjStatus hj_problem_from_json(const char *json, struct HjProblem **out);

/*
 # Safety
 `problem` must come from [`hj_problem_from_json`] and not be freed twice.
 */
void hj_problem_free(struct HjProblem *problem);

/*
 Grid shape `(n_t, n_x, n_y)`; `n_y` is 1 for one-dimensional problems.
 Field buffers hold `n_t * n_x * n_y` values in time-major order.

 # Safety
 All pointers must be valid.
 */
enum HjStatus hj_problem_shape(const struct HjProblem *problem,
                               size_t *n_t,
                               size_t *n_x,
                               size_t *n_y);

/*
 Samples the numerical Hamiltonian: largest consistency deviation and the
 number of monotonicity violations.

 # Safety
 All pointers must be valid.
 */
enum HjStatus hj_problem_check(const struct HjProblem *problem,
                               size_t samples,
                               double *max_deviation,
                               size_t *violations);

/*
 Runs the solver with the configuration's settings. Returns
 `NotConverged` with a valid solution when the iteration limit is reached.

 # Safety
 `problem` must be valid and `out` writable.
 */
enum HjStatus hj_solve(const struct HjProblem *problem, struct HjSolution **out);

/*
 # Safety
 `solution` must come from [`hj_solve`] and not be freed twice.
 */
void hj_solution_free(struct HjSolution *solution);

/*
 Outer iterations taken, convergence flag and final residuals.

 # Safety
 All pointers must be valid.
 */
enum HjStatus hj_solution_summary(const struct HjSolution *solution,
                                  size_t *iterations,
                                  bool *converged,
                                  double *residuals);

/*
 Copies the value function into `buf` (`len` values).

 # Safety
 `buf` must have room for `len` doubles.
 */
enum HjStatus hj_solution_phi(const struct HjSolution *solution, double *buf, size_t len);

/*
 Copies the multiplier into `buf` (`len` values).

 # Safety
 `buf` must have room for `len` doubles.
 */
enum HjStatus hj_solution_rho(const struct HjSolution *solution, double *buf, size_t len);

/*
 Copies the feedback control of dimension `dim` (up plus down slot).
 Fails for dimensions the control does not act on.

 # Safety
 `buf` must have room for `len` doubles.
 */
enum HjStatus hj_solution_control(const struct HjSolution *solution,
                                  size_t dim,
                                  double *buf,
                                  size_t len);

/*
 Writes fields and `metadata.json` to `dir`, as `hjpdhg solve` does.

 # Safety
 `dir` must be a NUL-terminated string.
 */
enum HjStatus hj_solution_write(const struct HjSolution *solution, const char *dir);

/*
 Integrates an optimal trajectory from `x0` (`dims` values) at time `t0`
 to the horizon in `steps` steps. With a non-null `seed` on a viscous
 problem the stochastic path is drawn; otherwise the ODE is integrated.

 # Safety
 `x0` must point to `dims` doubles, `seed` may be null, `out` writable.
 */
enum HjStatus hj_trajectory(const struct HjSolution *solution,
                            const double *x0,
                            size_t dims,
                            double t0,
                            size_t steps,
                            const uint64_t *seed,
                            struct HjTrajectory **out);

/*
 # Safety
 `trajectory` must come from [`hj_trajectory`] and not be freed twice.
 */
void hj_trajectory_free(struct HjTrajectory *trajectory);

/*
 Number of stored points (steps plus one).

 # Safety
 Pointers must be valid.
 */
enum HjStatus hj_trajectory_len(const struct HjTrajectory *trajectory, size_t *len);

/*
 Copies times (`len` values), states and controls (`len * dims` values each,
 point-major). Any of the three buffers may be null to skip it.

 # Safety
 Non-null buffers must have room for the stated number of doubles.
 */
enum HjStatus hj_trajectory_copy(const struct HjTrajectory *trajectory,
                                 double *times,
                                 double *states,
                                 double *controls,
                                 size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HJPDHG_H */
