#ifndef LOCAL_REGRET_H
#define LOCAL_REGRET_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum LrStatus {
  LR_STATUS_OK = 0,
  LR_STATUS_NULL_POINTER = 1,
  LR_STATUS_INVALID_ARGUMENT = 2,
  LR_STATUS_DIMENSION_MISMATCH = 3,
  LR_STATUS_NOT_POSITIVE_DEFINITE = 4,
  LR_STATUS_TOO_LARGE = 5,
  LR_STATUS_NON_FINITE = 6,
  LR_STATUS_INTERNAL = 7,
  LR_STATUS_PANIC = 8,
} LrStatus;

/**
 * An FTRL learner with its own sampling stream.
 */
typedef struct LrLearner LrLearner;

/**
 * A matrix on the pseudo-moment polytope (or a raw candidate).
 */
typedef struct LrMatrix LrMatrix;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *lr_version(void);

/**
 * Copy the calling thread's last error message into `buf` (truncated and
 * NUL-terminated). Returns the buffer size needed for the full message, or
 * 0 when there is none. `buf` may be null to query the size.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t lr_last_error_message(char *buf, size_t len);

/**
 * The uniform point of the polytope for `n` items and `l` labels.
 *
 * # Safety
 * `out` must be valid for writing one pointer.
 */
enum LrStatus lr_matrix_uniform(size_t n, size_t l, struct LrMatrix **out);

/**
 * Wrap a row-major `side * side` array without checking feasibility.
 *
 * # Safety
 * `entries` must be valid for `len` reads and `out` for one write.
 */
enum LrStatus lr_matrix_from_entries(size_t n,
                                     size_t l,
                                     const double *entries,
                                     size_t len,
                                     struct LrMatrix **out);

/**
 * Project a symmetric row-major matrix onto the polytope. `tol <= 0` and
 * `max_iters == 0` select the defaults. `converged` may be null.
 *
 * # Safety
 * `raw` must be valid for `len` reads, `out` for one write and `converged`
 * null or valid for one write.
 */
enum LrStatus lr_matrix_project(size_t n,
                                size_t l,
                                const double *raw,
                                size_t len,
                                double tol,
                                size_t max_iters,
                                struct LrMatrix **out,
                                bool *converged);

/**
 * Side length `n * L` of a matrix, 0 for null.
 *
 * # Safety
 * `m` must be null or a live handle.
 */
size_t lr_matrix_side(const struct LrMatrix *m);

/**
 * Copy entries out in row-major order.
 *
 * # Safety
 * `m` must be a live handle and `out` valid for `len` writes.
 */
enum LrStatus lr_matrix_entries(const struct LrMatrix *m, double *out, size_t len);

/**
 * Feasibility check at tolerance `tol` (`tol <= 0` selects the default).
 *
 * # Safety
 * `m` must be a live handle and `out` valid for one write.
 */
enum LrStatus lr_matrix_is_feasible(const struct LrMatrix *m, double tol, bool *out);

/**
 * `log det(I + L M)` and, when `gradient` is not null, its gradient.
 *
 * # Safety
 * `m` must be a live handle, `value` valid for one write and `gradient`
 * null or valid for `len` writes.
 */
enum LrStatus lr_regularizer_eval(const struct LrMatrix *m,
                                  double *value,
                                  double *gradient,
                                  size_t len);

/**
 * Inverse-Hessian quadratic form of an `L x L` row-major payoff placed on
 * block `(i, j)`.
 *
 * # Safety
 * `m` must be a live handle, `payoff` valid for `len` reads and `out` for
 * one write.
 */
enum LrStatus lr_inv_hessian_quadform(const struct LrMatrix *m,
                                      size_t i,
                                      size_t j,
                                      const double *payoff,
                                      size_t len,
                                      double *out);

/**
 * Release a matrix handle. Null is ignored.
 *
 * # Safety
 * `m` must be null or a handle not yet freed.
 */
void lr_matrix_free(struct LrMatrix *m);

/**
 * Default learning rate `sqrt(n L / (4 T))`.
 *
 * # Safety
 * `out` must be valid for one write.
 */
enum LrStatus lr_choose_nu(size_t n, size_t l, size_t rounds, double *out);

/**
 * New learner with learning rate `nu` and default inner-solver settings.
 * Predictions draw from a stream derived from `seed`.
 *
 * # Safety
 * `out` must be valid for one write.
 */
enum LrStatus lr_learner_new(size_t n, size_t l, double nu, uint64_t seed, struct LrLearner **out);

/**
 * Sample labels `(a, b)` for the queried pair from the current iterate.
 *
 * # Safety
 * `learner` must be a live handle, `a` and `b` valid for one write each.
 */
enum LrStatus lr_learner_predict(struct LrLearner *learner,
                                 size_t i,
                                 size_t j,
                                 size_t *a,
                                 size_t *b);

/**
 * Expected payoff of the current iterate for an `L x L` row-major block on
 * pair `(i, j)`.
 *
 * # Safety
 * `learner` must be a live handle, `block` valid for `len` reads and `out`
 * for one write.
 */
enum LrStatus lr_learner_expected_payoff(const struct LrLearner *learner,
                                         size_t i,
                                         size_t j,
                                         const double *block,
                                         size_t len,
                                         double *out);

/**
 * Add the revealed payoff and re-solve for the next iterate.
 *
 * # Safety
 * `learner` must be a live handle and `block` valid for `len` reads.
 */
enum LrStatus lr_learner_update(struct LrLearner *learner,
                                size_t i,
                                size_t j,
                                const double *block,
                                size_t len);

/**
 * Copy of the current iterate as a new matrix handle.
 *
 * # Safety
 * `learner` must be a live handle and `out` valid for one write.
 */
enum LrStatus lr_learner_copy_current(const struct LrLearner *learner, struct LrMatrix **out);

/**
 * Release a learner handle. Null is ignored.
 *
 * # Safety
 * `learner` must be null or a handle not yet freed.
 */
void lr_learner_free(struct LrLearner *learner);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LOCAL_REGRET_H */
