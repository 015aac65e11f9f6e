#ifndef BREGOPT_H
#define BREGOPT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

typedef enum BregoptExitMode {
  BREGOPT_EXIT_MODE_ITERATE_RELATIVE = 0,
  BREGOPT_EXIT_MODE_OBJECTIVE_RELATIVE = 1,
} BregoptExitMode;

typedef enum BregoptStatus {
  BREGOPT_STATUS_OK = 0,
  BREGOPT_STATUS_NULL_POINTER = 1,
  BREGOPT_STATUS_INVALID_ARGUMENT = 2,
  BREGOPT_STATUS_DOMAIN = 3,
  BREGOPT_STATUS_NUMERICAL_FAILURE = 4,
  BREGOPT_STATUS_DIMENSION_MISMATCH = 5,
  BREGOPT_STATUS_INVALID_CONFIG = 6,
  BREGOPT_STATUS_IO = 7,
  BREGOPT_STATUS_PANIC = 8,
} BregoptStatus;

typedef enum BregoptProblemKind {
  BREGOPT_PROBLEM_KIND_PLIP = 0,
  BREGOPT_PROBLEM_KIND_QIP = 1,
} BregoptProblemKind;

typedef enum BregoptSolverKind {
  BREGOPT_SOLVER_KIND_BPG = 0,
  BREGOPT_SOLVER_KIND_BPGE = 1,
  BREGOPT_SOLVER_KIND_PG = 2,
  BREGOPT_SOLVER_KIND_PGE = 3,
} BregoptSolverKind;

typedef enum BregoptExitReason {
  BREGOPT_EXIT_REASON_TOLERANCE = 0,
  BREGOPT_EXIT_REASON_MAX_ITERATIONS = 1,
  BREGOPT_EXIT_REASON_NUMERICAL_FAILURE = 2,
} BregoptExitReason;

typedef enum BregoptKernelKind {
  BREGOPT_KERNEL_KIND_EUCLIDEAN = 0,
  BREGOPT_KERNEL_KIND_BURG = 1,
  BREGOPT_KERNEL_KIND_QUARTIC = 2,
} BregoptKernelKind;

/**
 * Opaque problem instance.
 */
typedef struct BregoptProblem BregoptProblem;

/**
 * Opaque solve result.
 */
typedef struct BregoptResult BregoptResult;

/**
 * Solver settings. A nonpositive `lambda` means `1 / L` for the problem.
 */
typedef struct BregoptSolverConfig {
  double lambda;
  double beta0;
  double eta;
  double rho;
  uint32_t max_shrinks;
  double tol;
  size_t k_max;
  enum BregoptExitMode exit_mode;
} BregoptSolverConfig;

typedef struct BregoptIterationRecord {
  size_t k;
  double psi;
  double dh_step;
  double lyapunov;
  double beta;
  uint32_t shrinks;
  /**
   * Nonzero when the line search gave up and used `beta = 0`.
   */
  uint8_t beta_fallback;
  double residual;
  double wall_time_s;
} BregoptIterationRecord;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call into this library on the
 * same thread.
 */
const char *bregopt_last_error_message(void);

/**
 * Defaults: `lambda = 1/L`, `beta0 = 0.99`, `eta = 0.5`, `rho = 0.99`,
 * 60 shrinks, `tol = 1e-6`, `k_max = 5000`, iterate-relative exit.
 */
struct BregoptSolverConfig bregopt_solver_config_default(void);

/**
 * Generates a seeded instance into `*out`. `theta` is the ℓ1 weight and is
 * ignored for PLIP.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum BregoptStatus bregopt_problem_generate(enum BregoptProblemKind kind,
                                            size_t m,
                                            size_t d,
                                            uint64_t seed,
                                            double theta,
                                            struct BregoptProblem **out);

/**
 * # Safety
 * `problem` must be null or a handle from [`bregopt_problem_generate`] not
 * yet freed.
 */
void bregopt_problem_free(struct BregoptProblem *problem);

/**
 * Dimension `d`, or 0 for a null handle.
 *
 * # Safety
 * `problem` must be null or a live handle.
 */
size_t bregopt_problem_dim(const struct BregoptProblem *problem);

/**
 * The smad constant `L`, or NaN for a null handle.
 *
 * # Safety
 * `problem` must be null or a live handle.
 */
double bregopt_problem_smad_constant(const struct BregoptProblem *problem);

/**
 * Copies the seeded starting point into `out[0..len]`.
 *
 * # Safety
 * `problem` must be a live handle and `out` must hold `len` doubles.
 */
enum BregoptStatus bregopt_problem_initial_point(const struct BregoptProblem *problem,
                                                 double *out,
                                                 size_t len);

/**
 * Objective value `Ψ(x)` into `*value`.
 *
 * # Safety
 * `problem` must be a live handle, `x` must hold `len` doubles and `value`
 * must be writable.
 */
enum BregoptStatus bregopt_problem_objective(const struct BregoptProblem *problem,
                                             const double *x,
                                             size_t len,
                                             double *value);

/**
 * Runs a solver. `x0` may be null to start from the seeded initial point.
 * A run that stops on a numerical failure still returns `Ok` and a result
 * whose exit reason says so.
 *
 * # Safety
 * `problem` must be a live handle, `config` must point to a config, `x0`
 * must be null or hold `len` doubles, and `out` must be writable.
 */
enum BregoptStatus bregopt_solve(const struct BregoptProblem *problem,
                                 enum BregoptSolverKind solver,
                                 const struct BregoptSolverConfig *config,
                                 const double *x0,
                                 size_t len,
                                 struct BregoptResult **out);

/**
 * # Safety
 * `result` must be null or a handle from [`bregopt_solve`] not yet freed.
 */
void bregopt_result_free(struct BregoptResult *result);

/**
 * # Safety
 * `result` must be null or a live handle.
 */
size_t bregopt_result_iterations(const struct BregoptResult *result);

/**
 * # Safety
 * `result` must be null or a live handle.
 */
double bregopt_result_psi_final(const struct BregoptResult *result);

/**
 * # Safety
 * `result` must be null or a live handle.
 */
enum BregoptExitReason bregopt_result_exit_reason(const struct BregoptResult *result);

/**
 * Copies the last iterate into `out[0..len]`.
 *
 * # Safety
 * `result` must be a live handle and `out` must hold `len` doubles.
 */
enum BregoptStatus bregopt_result_x_final(const struct BregoptResult *result,
                                          double *out,
                                          size_t len);

/**
 * # Safety
 * `result` must be null or a live handle.
 */
size_t bregopt_result_trace_len(const struct BregoptResult *result);

/**
 * Copies trace entry `index` (0-based; entry `i` describes iteration
 * `i + 1`) into `*out`.
 *
 * # Safety
 * `result` must be a live handle and `out` must be writable.
 */
enum BregoptStatus bregopt_result_trace_record(const struct BregoptResult *result,
                                               size_t index,
                                               struct BregoptIterationRecord *out);

/**
 * Bregman distance `D_h(x, y)` of the chosen kernel into `*value`.
 *
 * # Safety
 * `x` and `y` must hold `len` doubles and `value` must be writable.
 */
enum BregoptStatus bregopt_bregman(enum BregoptKernelKind kernel,
                                   const double *x,
                                   const double *y,
                                   size_t len,
                                   double *value);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BREGOPT_H */
