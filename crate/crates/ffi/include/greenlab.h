#ifndef GREENLAB_H
#define GREENLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

/**
 * Result codes shared by every entry point.
 */
typedef enum {
  GREENLAB_STATUS_OK = 0,
  /**
   * Null pointer, wrong buffer length or malformed string.
   */
  GREENLAB_STATUS_INVALID_ARGUMENT = 1,
  GREENLAB_STATUS_CONFIG = 2,
  GREENLAB_STATUS_SOLVER = 3,
  GREENLAB_STATUS_INVARIANT = 4,
  GREENLAB_STATUS_PRECONDITION = 5,
  GREENLAB_STATUS_IO = 6,
  /**
   * A Rust panic was caught at the boundary.
   */
  GREENLAB_STATUS_PANIC = 7,
} GreenlabStatus;

/**
 * Opaque problem handle.
 */
typedef struct GreenlabProblem GreenlabProblem;

/**
 * Statistics of the last solve.
 */
typedef struct {
  size_t iterations;
  double final_relative_residual;
  double wall_time;
} GreenlabSolveStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next call on the same thread.
 */
const char *greenlab_last_error(void);

/**
 * Static, nul-terminated version string.
 */
const char *greenlab_version(void);

/**
 * Builds a problem from config text (TOML or JSON). Only the `grid`,
 * `domain`, `coefficients` and `solver` blocks are used.
 *
 * # Safety
 * `config` must be a nul-terminated string; `out` must be writable.
 */
GreenlabStatus greenlab_problem_new(const char *config, GreenlabProblem **out);

/**
 * Releases a problem; null is ignored.
 *
 * # Safety
 * `p` must come from [`greenlab_problem_new`] and not be used afterwards.
 */
void greenlab_problem_free(GreenlabProblem *p);

/**
 * Spatial dimension, cells in the grid and interior (pressure) cells.
 *
 * # Safety
 * Pointers must be valid; outputs may be null to skip them.
 */
GreenlabStatus greenlab_problem_shape(const GreenlabProblem *p,
                                      size_t *dim,
                                      size_t *grid_cells,
                                      size_t *interior_cells);

/**
 * Unknown counts of the saddle system (assembles it on first use).
 *
 * # Safety
 * Pointers must be valid.
 */
GreenlabStatus greenlab_problem_dofs(const GreenlabProblem *p, size_t *velocity, size_t *pressure);

/**
 * Effective ellipticity bounds of the coefficient field.
 *
 * # Safety
 * Pointers must be valid.
 */
GreenlabStatus greenlab_problem_ellipticity(const GreenlabProblem *p,
                                            double *lambda,
                                            double *upper);

/**
 * Cell containing the physical point `x[0..dim]`.
 *
 * # Safety
 * `x` must hold `dim` values.
 */
GreenlabStatus greenlab_locate_cell(const GreenlabProblem *p,
                                    const double *x,
                                    size_t dim,
                                    size_t *cell);

/**
 * Solves the Stokes system. Data live on interior cells in pressure order:
 * `f` has `dim` values per cell, `f_alpha` has `dim²` (slot `i·dim + α`),
 * `g` one value (mean zero). Null inputs with zero length are zero fields.
 *
 * # Safety
 * Buffers must hold the stated lengths.
 */
GreenlabStatus greenlab_solve(const GreenlabProblem *p,
                              const double *f,
                              size_t f_len,
                              const double *f_alpha,
                              size_t f_alpha_len,
                              const double *g,
                              size_t g_len,
                              double *u_out,
                              size_t u_len,
                              double *p_out,
                              size_t p_len,
                              GreenlabSolveStats *stats);

/**
 * `dim × dim` averaged Green matrix between cells `x` and `y`, row-major in
 * `(i, k)`. Columns are cached per handle.
 *
 * # Safety
 * `out` must hold `out_len == dim²` values.
 */
GreenlabStatus greenlab_green_matrix(const GreenlabProblem *p,
                                     size_t x_cell,
                                     size_t y_cell,
                                     double epsilon,
                                     double *out,
                                     size_t out_len);

/**
 * Relative defect of `G_ε(x, y) = G*_ε(y, x)ᵀ`.
 *
 * # Safety
 * `defect` must be writable.
 */
GreenlabStatus greenlab_symmetry_defect(const GreenlabProblem *p,
                                        size_t x_cell,
                                        size_t y_cell,
                                        double epsilon,
                                        double *defect);

/**
 * Discrete inf-sup constant of the domain.
 *
 * # Safety
 * `beta` must be writable.
 */
GreenlabStatus greenlab_infsup(const GreenlabProblem *p, double *beta);

/**
 * Runs an experiment like the command-line tool and stores its exit code
 * (0 pass, 1 invariant failure, 2 config error, 3 solver failure).
 *
 * # Safety
 * Strings must be nul-terminated; `exit_code` must be writable.
 */
GreenlabStatus greenlab_run_experiment(const char *experiment,
                                       const char *config_path,
                                       const char *out_dir,
                                       int *exit_code);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GREENLAB_H */
