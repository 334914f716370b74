#ifndef FPRATIO_H
#define FPRATIO_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FprStatus {
  FPR_STATUS_OK = 0,
  FPR_STATUS_NULL_POINTER = 1,
  FPR_STATUS_INVALID_ARGUMENT = 2,
  FPR_STATUS_DOMAIN = 3,
  FPR_STATUS_SOLVER_FAILURE = 4,
  FPR_STATUS_SAMPLING_FAILURE = 5,
  FPR_STATUS_PANIC = 6,
  FPR_STATUS_OTHER = 7,
} FprStatus;

/**
 * Solved ratio field.
 */
typedef struct FprField FprField;

/**
 * One sampled path, written into caller buffers of length `points`.
 */
typedef struct FprPathBuffers {
  double *times;
  double *proposal;
  double *ratio;
  /**
   * 1 where the point was accepted.
   */
  uint8_t *accepted;
  /**
   * Bridge-infilled values; NaN after the last acceptance.
   */
  double *output;
} FprPathBuffers;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error of this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length, 0 when there is
 * no error.
 *
 * # Safety
 * `buf` must be valid for `len` bytes or null.
 */
size_t fpr_last_error_message(char *buf, size_t len);

/**
 * Closed-form O-U ratio at `(x, t)`, time measured from the start.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum FprStatus fpr_ou_exact_ratio(double beta,
                                  double sigma,
                                  double x0,
                                  double x,
                                  double t,
                                  double *out);

/**
 * Solves the O-U ratio equation on `[x_min, x_max] × [0, t_end]` with
 * `m` spatial and `n` time steps; the field is returned through `out`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum FprStatus fpr_solve_ou_ratio(double beta,
                                  double sigma,
                                  double x0,
                                  double x_min,
                                  double x_max,
                                  size_t m,
                                  double t_end,
                                  size_t n,
                                  struct FprField **out);

/**
 * Bilinear evaluation of a field.
 *
 * # Safety
 * `field` must come from this library and not be freed; `out` must be
 * valid.
 */
enum FprStatus fpr_field_eval(const struct FprField *field, double x, double t, double *out);

/**
 * Largest value of a field.
 *
 * # Safety
 * As for [`fpr_field_eval`].
 */
enum FprStatus fpr_field_max(const struct FprField *field, double *out);

/**
 * Releases a field. Null is ignored.
 *
 * # Safety
 * `field` must come from this library and be freed at most once.
 */
void fpr_field_free(struct FprField *field);

/**
 * Samples O-U path `index` of `seed` at `points` even times on
 * `(0, t_end]`, using the closed-form ratio and the analytic bound.
 *
 * # Safety
 * Every buffer must be valid for `points` elements.
 */
enum FprStatus fpr_sample_ou_path(double beta,
                                  double sigma,
                                  double x0,
                                  double t_end,
                                  size_t points,
                                  uint64_t seed,
                                  uint64_t index,
                                  struct FprPathBuffers bufs);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FPRATIO_H */
