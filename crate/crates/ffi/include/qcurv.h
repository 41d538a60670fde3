#ifndef QCURV_H
#define QCURV_H

/* Generated by build.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define QC_OK 0

/**
 * A required pointer argument was null.
 */
#define QC_ERR_NULL 1

/**
 * Input failed validation (range, dimension, separation, convention).
 */
#define QC_ERR_INVALID 2

/**
 * A numerical procedure failed (no convergence, resolution, overflow).
 */
#define QC_ERR_NUMERICAL 3

/**
 * Configuration JSON was malformed or not UTF-8.
 */
#define QC_ERR_CONFIG 4

/**
 * An index was out of range or a caller buffer was too small.
 */
#define QC_ERR_RANGE 5

/**
 * A Rust panic was caught at the boundary.
 */
#define QC_ERR_PANIC 6

/**
 * Critical points of the reduced functional.
 */
typedef struct QcCritList QcCritList;

/**
 * Model, K and reduced functional built from a JSON configuration.
 */
typedef struct QcProblem QcProblem;

/**
 * Scalar data of one critical configuration.
 */
typedef struct QcCritInfo {
  /**
   * Number of points in the configuration.
   */
  size_t npoints;
  double f;
  double gradnorm;
  uint32_t morse;
  double l_big;
  double l_small;
  int64_t i_inf;
  bool in_f_inf;
  bool degenerate;
} QcCritInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *qc_version(void);

/**
 * Copies the last error message of this thread into `buf` (truncated,
 * always NUL-terminated when `len > 0`) and returns the full length
 * including the terminator.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t qc_last_error(char *buf, size_t len);

/**
 * Leray–Schauder degree from the Morse data at infinity. `i_inf` holds
 * `len` entries; `ordered` selects the convention where the list holds
 * every ordering of every configuration.
 *
 * # Safety
 * `i_inf` must be valid for `len` reads; `out_d_m` must be writable.
 */
int32_t qc_degree(uint32_t m,
                  uint32_t mbar,
                  int64_t chi_m,
                  uint32_t n,
                  const int64_t *i_inf,
                  size_t len,
                  bool ordered,
                  int64_t *out_d_m);

/**
 * Builds a problem from a JSON configuration; null means all defaults.
 *
 * # Safety
 * `config_json` must be null or a NUL-terminated string; `out_problem`
 * must be writable. On success the caller owns `*out_problem`.
 */
int32_t qc_problem_new(const char *config_json, struct QcProblem **out_problem);

/**
 * # Safety
 * `p` must be null or a handle from `qc_problem_new`, freed once.
 */
void qc_problem_free(struct QcProblem *p);

/**
 * Dimension `n` and resonance integer `m`. Points are passed as `n + 1`
 * ambient coordinates; a configuration holds `m` of them.
 *
 * # Safety
 * `p` must be a live handle; out-pointers must be writable.
 */
int32_t qc_problem_dims(const struct QcProblem *p, uint32_t *out_n, uint32_t *out_m);

/**
 * Reduced functional at a configuration of `npoints` points
 * (`npoints * (n + 1)` coordinates, normalized to the sphere).
 *
 * # Safety
 * `coords` must be valid for `npoints * (n + 1)` reads.
 */
int32_t qc_problem_reduced_value(const struct QcProblem *p,
                                 const double *coords,
                                 size_t npoints,
                                 double *out_f);

/**
 * Tangential gradient of the reduced functional, written as
 * `npoints * (n + 1)` ambient coordinates.
 *
 * # Safety
 * `coords` and `out_grad` must be valid for `npoints * (n + 1)` elements.
 */
int32_t qc_problem_reduced_gradient(const struct QcProblem *p,
                                    const double *coords,
                                    size_t npoints,
                                    double *out_grad);

/**
 * Searches for critical points from the default seeds drawn with `seed`.
 *
 * # Safety
 * `p` must be a live handle; `out_list` must be writable. On success the
 * caller owns `*out_list`.
 */
int32_t qc_problem_critical_points(const struct QcProblem *p,
                                   uint64_t seed,
                                   struct QcCritList **out_list);

/**
 * # Safety
 * `l` must be null or a handle from `qc_problem_critical_points`, freed once.
 */
void qc_critlist_free(struct QcCritList *l);

/**
 * Number of critical configurations and of seeds that did not converge.
 *
 * # Safety
 * `l` must be a live handle; out-pointers must be writable.
 */
int32_t qc_critlist_len(const struct QcCritList *l, size_t *out_len, size_t *out_failed_seeds);

/**
 * # Safety
 * `l` must be a live handle; `out_info` must be writable.
 */
int32_t qc_critlist_get(const struct QcCritList *l, size_t idx, struct QcCritInfo *out_info);

/**
 * Copies the points of configuration `idx` into `buf` (`len` doubles);
 * `*out_needed` receives the required length even when `buf` is too small.
 *
 * # Safety
 * `buf` must be null or valid for `len` writes.
 */
int32_t qc_critlist_points(const struct QcCritList *l,
                           size_t idx,
                           double *buf,
                           size_t len,
                           size_t *out_needed);

/**
 * Degree of the problem from a critical list: the list must satisfy the
 * nondegeneracy predicates, and its members of F_∞ enter the sum.
 *
 * # Safety
 * `p` and `l` must be live handles; `out_d_m` must be writable.
 */
int32_t qc_problem_degree(const struct QcProblem *p, const struct QcCritList *l, int64_t *out_d_m);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QCURV_H */
