#ifndef JGAP_H
#define JGAP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result code of every fallible call.
 */
typedef enum JgapStatus {
  JGAP_STATUS_OK = 0,
  JGAP_STATUS_NULL_POINTER = 1,
  JGAP_STATUS_INVALID_INPUT = 2,
  JGAP_STATUS_UNKNOWN = 3,
  JGAP_STATUS_UNSUPPORTED = 4,
  JGAP_STATUS_PRECONDITION = 5,
  JGAP_STATUS_GRID_MISMATCH = 6,
  JGAP_STATUS_NON_INTEGRABLE = 7,
  JGAP_STATUS_NON_FINITE = 8,
  JGAP_STATUS_NON_CONVERGENCE = 9,
  JGAP_STATUS_INFEASIBLE = 10,
  JGAP_STATUS_TOO_LARGE = 11,
  JGAP_STATUS_PARSE = 12,
  JGAP_STATUS_IO = 13,
  JGAP_STATUS_BUFFER_TOO_SMALL = 14,
  JGAP_STATUS_PANIC = 15,
} JgapStatus;

/*
 Classifier verdict.
 */
typedef enum JgapVerdict {
  JGAP_VERDICT_W12_CONSISTENT = 0,
  JGAP_VERDICT_SUB_W12 = 1,
  JGAP_VERDICT_INCONCLUSIVE = 2,
} JgapVerdict;

/*
 A function sampled on a uniform grid.
 */
typedef struct JgapGrid JgapGrid;

/*
 A validated mollifier or attraction kernel.
 */
typedef struct JgapKernel JgapKernel;

/*
 A bilayer minimizer together with the problem it solves.
 */
typedef struct JgapSolution JgapSolution;

/*
 Moment data of a kernel. `second_moment` is row-major; only the leading
 `dim * dim` entries are used.
 */
typedef struct JgapMoments {
  size_t dim;
  double mass;
  double second_moment[4];
  /*
   a(phi), NaN for non-radial kernels.
   */
  double radial_moment;
  /*
   max |A - a I|, NaN for non-radial kernels.
   */
  double radial_residual;
  double min_eigenvalue;
  /*
   Every mollifier assumption held within the tolerance.
   */
  bool assumptions_ok;
} JgapMoments;

/*
 Power-law fit of a gap ladder.
 */
typedef struct JgapLadderSummary {
  size_t rungs;
  size_t dropped;
  double exponent;
  double prefactor;
  double r_squared;
  double limit_estimate;
  /*
   Upper bound on the Dirichlet energy implied by the fit, NaN when unavailable.
   */
  double energy_bound;
  enum JgapVerdict verdict;
} JgapLadderSummary;

/*
 Scalar outcome of a bilayer solve.
 */
typedef struct JgapSolutionInfo {
  size_t cells;
  double spacing;
  double length;
  double energy;
  double mass_residual;
  double min_value;
  double pair_max;
  size_t iterations;
  double stationarity;
  bool converged;
} JgapSolutionInfo;

/*
 Outcome of the smoothing-comparison certificate.
 */
typedef struct JgapCertificateSummary {
  double exponent;
  double r_squared;
  double ratio_spread;
  bool minimal;
  bool accepted;
  enum JgapVerdict verdict;
} JgapCertificateSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or NULL. The pointer stays
 valid until the next failing call on the same thread.
 */
const char *jgap_last_error(void);

/*
 Parses a `shape:dim:radius` kernel spec.

 # Safety
 `spec` must be a NUL-terminated string; `out` must be writable.
 */
enum JgapStatus jgap_kernel_new(const char *spec, struct JgapKernel **out);

/*
 Releases a kernel. NULL is ignored.

 # Safety
 `k` must come from [`jgap_kernel_new`] and not be used afterwards.
 */
void jgap_kernel_free(struct JgapKernel *k);

/*
 Moments and assumption checks at tolerance `tol`.

 # Safety
 `k` must be a live kernel handle; `out` must be writable.
 */
enum JgapStatus jgap_kernel_moments(const struct JgapKernel *k,
                                    double tol,
                                    struct JgapMoments *out);

/*
 Samples a test function (`gaussian`, `tent`, `step`, `cusp:<alpha>`) on
 `[lo, hi]^dim` with spacing `dx`.

 # Safety
 `spec` must be a NUL-terminated string; `out` must be writable.
 */
enum JgapStatus jgap_grid_sample(const char *spec,
                                 size_t dim,
                                 double lo,
                                 double hi,
                                 double dx,
                                 struct JgapGrid **out);

/*
 Wraps caller-owned samples (copied). `nx` nodes along x; `ny` is 0 for a
 1-D grid, otherwise values are row-major with x fastest.

 # Safety
 `origin` must hold `dim` values and `values` `nx * max(ny, 1)` values.
 */
enum JgapStatus jgap_grid_from_values(const double *origin,
                                      double dx,
                                      size_t nx,
                                      size_t ny,
                                      const double *values,
                                      struct JgapGrid **out);

/*
 Number of samples in the grid (0 for NULL).

 # Safety
 `g` must be NULL or a live grid handle.
 */
size_t jgap_grid_len(const struct JgapGrid *g);

/*
 Copies the samples into `buf`, which must hold at least
 [`jgap_grid_len`] values.

 # Safety
 `g` must be a live grid handle; `buf` must be writable for `cap` values.
 */
enum JgapStatus jgap_grid_values(const struct JgapGrid *g, double *buf, size_t cap);

/*
 Releases a grid. NULL is ignored.

 # Safety
 `g` must come from a grid constructor and not be used afterwards.
 */
void jgap_grid_free(struct JgapGrid *g);

/*
 Jensen gap `int f(u) - f(u * phi_eps)` for integrand `square`, `entropy`
 or `logcosh`.

 # Safety
 Handles must be live; `integrand` NUL-terminated; `out` writable.
 */
enum JgapStatus jgap_gap(const struct JgapGrid *g,
                         const struct JgapKernel *k,
                         const char *integrand,
                         double eps,
                         double *out);

/*
 Small-eps limit `1/2 int f''(u) grad u . A grad u`.

 # Safety
 Handles must be live; `integrand` NUL-terminated; `out` writable.
 */
enum JgapStatus jgap_limit_functional(const struct JgapGrid *g,
                                      const struct JgapKernel *k,
                                      const char *integrand,
                                      double *out);

/*
 Gap ladder `eps_max * 2^-k`, `k < rungs`, with fit and verdict.

 # Safety
 Handles must be live; `integrand` NUL-terminated; `out` writable.
 */
enum JgapStatus jgap_ladder(const struct JgapGrid *g,
                            const struct JgapKernel *k,
                            const char *integrand,
                            double eps_max,
                            size_t rungs,
                            struct JgapLadderSummary *out);

/*
 Minimizes the bilayer energy. `config` holds `key = value` lines over the
 defaults (NULL for all defaults). A solve that hits the iteration cap still
 returns a handle, with status `NonConvergence`.

 # Safety
 `config` must be NULL or NUL-terminated; `out` writable.
 */
enum JgapStatus jgap_bilayer_solve(const char *config, struct JgapSolution **out);

/*
 Scalar summary of a solution.

 # Safety
 `s` must be a live solution handle; `out` writable.
 */
enum JgapStatus jgap_solution_info(const struct JgapSolution *s, struct JgapSolutionInfo *out);

/*
 Copies the cell values of the minimizer into `buf`.

 # Safety
 `s` must be a live solution handle; `buf` writable for `cap` values.
 */
enum JgapStatus jgap_solution_values(const struct JgapSolution *s, double *buf, size_t cap);

/*
 Runs the smoothing-comparison certificate with the mollifier and ladder of
 the solve's config. A refused certificate is not an error; check
 `accepted`.

 # Safety
 `s` must be a live solution handle; `out` writable.
 */
enum JgapStatus jgap_solution_certify(const struct JgapSolution *s,
                                      struct JgapCertificateSummary *out);

/*
 Releases a solution. NULL is ignored.

 # Safety
 `s` must come from [`jgap_bilayer_solve`] and not be used afterwards.
 */
void jgap_solution_free(struct JgapSolution *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* JGAP_H */
