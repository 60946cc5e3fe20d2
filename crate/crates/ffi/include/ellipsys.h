#ifndef ELLIPSYS_H
#define ELLIPSYS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum ElStatus {
  EL_STATUS_OK = 0,
  EL_STATUS_NULL_POINTER = 1,
  EL_STATUS_INVALID_INPUT = 2,
  EL_STATUS_DIMENSION_MISMATCH = 3,
  EL_STATUS_ASYMMETRIC_TENSOR = 4,
  EL_STATUS_DEGENERATE_SYMBOL = 5,
  EL_STATUS_INFEASIBLE_CERTIFICATE = 6,
  EL_STATUS_DIVERGED = 7,
  EL_STATUS_NOT_CONVERGED = 8,
  EL_STATUS_NON_FINITE = 9,
  EL_STATUS_BUFFER_TOO_SMALL = 10,
  EL_STATUS_INTERNAL = 11,
  EL_STATUS_PANIC = 12,
} ElStatus;

typedef struct ElCertificate ElCertificate;

typedef struct ElField ElField;

typedef struct ElGrid ElGrid;

typedef struct ElOperator ElOperator;

typedef struct ElTensor ElTensor;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Releases a handle; null is ignored.
 *
 * # Safety
 * `h` must come from this library and not have been freed.
 */
void el_tensor_free(struct ElTensor *h);

/**
 * Releases a handle; null is ignored.
 *
 * # Safety
 * `h` must come from this library and not have been freed.
 */
void el_grid_free(struct ElGrid *h);

/**
 * Releases a handle; null is ignored.
 *
 * # Safety
 * `h` must come from this library and not have been freed.
 */
void el_field_free(struct ElField *h);

/**
 * Releases a handle; null is ignored.
 *
 * # Safety
 * `h` must come from this library and not have been freed.
 */
void el_operator_free(struct ElOperator *h);

/**
 * Releases a handle; null is ignored.
 *
 * # Safety
 * `h` must come from this library and not have been freed.
 */
void el_certificate_free(struct ElCertificate *h);

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length without the NUL.
 *
 * # Safety
 * `buf` must be valid for `len` bytes or null.
 */
size_t el_last_error_message(char *buf, size_t len);

/**
 * Static version string.
 */
const char *el_version(void);

/**
 * Tensor from `N*N*n*n` row-major entries indexed `(alpha, beta, i, j)`.
 *
 * # Safety
 * `entries` must hold `len` values; `out` must be writable.
 */
enum ElStatus el_tensor_new(size_t dim,
                            size_t components,
                            const double *entries,
                            size_t len,
                            struct ElTensor **out);

/**
 * # Safety
 * `out` must be writable.
 */
enum ElStatus el_tensor_identity(size_t dim, size_t components, struct ElTensor **out);

/**
 * The two-component example tensor with parameter `m >= 8` in `dim` dimensions.
 *
 * # Safety
 * `out` must be writable.
 */
enum ElStatus el_tensor_example2(double m, size_t dim, struct ElTensor **out);

/**
 * Ellipticity constant `nu(A)`.
 *
 * # Safety
 * Handles must be valid; `nu` must be writable.
 */
enum ElStatus el_tensor_ellipticity_constant(const struct ElTensor *t, double *nu);

/**
 * # Safety
 * `out` must be writable.
 */
enum ElStatus el_grid_new(size_t dim,
                          size_t components,
                          size_t points,
                          double period,
                          struct ElGrid **out);

/**
 * Number of values in a field on this grid, `N * M^n`.
 *
 * # Safety
 * `g` must be a valid handle or null (returns 0).
 */
size_t el_grid_field_len(const struct ElGrid *g);

/**
 * Field from component-major physical values.
 *
 * # Safety
 * `values` must hold `len` values.
 */
enum ElStatus el_field_from_values(const struct ElGrid *g,
                                   const double *values,
                                   size_t len,
                                   struct ElField **out);

/**
 * Zero-mean random field with frequencies `|k_i| <= band`.
 *
 * # Safety
 * Handles must be valid.
 */
enum ElStatus el_field_random(const struct ElGrid *g,
                              size_t band,
                              uint64_t seed,
                              struct ElField **out);

/**
 * Copies physical values into `buf`, which must hold exactly the field length.
 *
 * # Safety
 * `buf` must be writable for `len` values.
 */
enum ElStatus el_field_values(const struct ElField *f, double *buf, size_t len);

/**
 * `L2` norm over the torus.
 *
 * # Safety
 * `f` must be valid or null (returns NaN).
 */
double el_field_l2_norm(const struct ElField *f);

/**
 * Solves `A:D^2u = f`; `eps > 0` selects the regularised multiplier.
 *
 * # Safety
 * Handles must be valid.
 */
enum ElStatus el_solve_linear(const struct ElTensor *t,
                              const struct ElField *f,
                              double eps,
                              struct ElField **out);

/**
 * `F(x, X) = g^2(x) (A:X + G(X))` with `g^2 = mean + amplitude cos(2 pi x_1 / L)`
 * and a sine perturbation of Lipschitz constant `rho nu(A)` (`rho = 0` gives the
 * linear operator).
 *
 * # Safety
 * Handles must be valid.
 */
enum ElStatus el_operator_new(const struct ElTensor *t,
                              const struct ElGrid *g,
                              double rho,
                              double weight_mean,
                              double weight_amplitude,
                              struct ElOperator **out);

/**
 * `F(., D^2u)` pointwise.
 *
 * # Safety
 * Handles must be valid.
 */
enum ElStatus el_operator_apply(const struct ElOperator *op,
                                const struct ElField *u,
                                struct ElField **out);

/**
 * Fits a structure-condition certificate for `op` around the anchor `t`.
 *
 * # Safety
 * Handles must be valid.
 */
enum ElStatus el_certificate_fit(const struct ElOperator *op,
                                 const struct ElTensor *t,
                                 uint64_t seed,
                                 struct ElCertificate **out);

/**
 * Reads `(nu, beta, gamma)`; any output pointer may be null.
 *
 * # Safety
 * `c` must be valid.
 */
enum ElStatus el_certificate_constants(const struct ElCertificate *c,
                                       double *nu,
                                       double *beta,
                                       double *gamma);

/**
 * Solves `F(., D^2u) = f` by the near-operator iteration. On
 * `ElStatus::NotConverged` the last iterate is still returned in `out`.
 *
 * # Safety
 * Handles must be valid; `iterations` may be null.
 */
enum ElStatus el_solve(const struct ElTensor *t,
                       const struct ElOperator *op,
                       const struct ElCertificate *c,
                       const struct ElField *f,
                       double tol,
                       size_t max_iters,
                       struct ElField **out,
                       size_t *iterations);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ELLIPSYS_H */
