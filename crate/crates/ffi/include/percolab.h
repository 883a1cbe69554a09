#ifndef PERCOLAB_H
#define PERCOLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum {
  PERCOLAB_STATUS_OK = 0,
  /**
   * An inequality check failed (the call itself succeeded).
   */
  PERCOLAB_STATUS_VERIFICATION_FAILED = 1,
  /**
   * Invalid argument, including malformed instance text.
   */
  PERCOLAB_STATUS_USAGE = 2,
  /**
   * A size or resource limit was exceeded.
   */
  PERCOLAB_STATUS_CAPACITY = 3,
  /**
   * Too many explorations hit the site cap.
   */
  PERCOLAB_STATUS_CENSORED = 4,
  /**
   * The requested quantity is not defined for these parameters.
   */
  PERCOLAB_STATUS_UNDEFINED = 5,
  PERCOLAB_STATUS_INTERNAL = 6,
  PERCOLAB_STATUS_IO = 7,
  PERCOLAB_STATUS_NULL_POINTER = 8,
  PERCOLAB_STATUS_PANIC = 9,
} PercolabStatus;

/**
 * Opaque handle to a spread-out percolation model `(d, L, β)`.
 */
typedef struct PercolabModel PercolabModel;

/**
 * A Monte Carlo or exact value with its standard error.
 */
typedef struct {
  double value;
  double std_error;
  uint64_t n_samples;
  double censored_rate;
} PercolabEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *percolab_version(void);

/**
 * Message of the last failure on this thread, or null if none.
 */
const char *percolab_last_error_message(void);

/**
 * Forgets the stored error message of this thread.
 */
void percolab_clear_error(void);

/**
 * Creates a model handle. Release it with [`percolab_model_free`].
 *
 * # Safety
 * `out` must be valid for writing one pointer.
 */
PercolabStatus percolab_model_new(uint32_t d, int64_t range, double beta, PercolabModel **out);

/**
 * Releases a handle; null is ignored.
 *
 * # Safety
 * `model` must be null or a handle from [`percolab_model_new`] that has not
 * been freed.
 */
void percolab_model_free(PercolabModel *model);

/**
 * Edge probability `p_β = 1 - exp(-β c_L)`.
 *
 * # Safety
 * `model` must be a live handle and `out` valid for writes.
 */
PercolabStatus percolab_model_p_beta(const PercolabModel *model, double *out);

/**
 * `β_0(d, L)`, the point where `|Λ_L^*| p_β = 1`.
 *
 * # Safety
 * `out` must be valid for writes.
 */
PercolabStatus percolab_beta0(uint32_t d, int64_t range, double *out);

/**
 * Mean cluster size `χ(β)` from `n` explorations; `cap = 0` keeps the
 * default site cap.
 *
 * # Safety
 * `model` must be a live handle and `out` valid for writes.
 */
PercolabStatus percolab_susceptibility(const PercolabModel *model,
                                       uint64_t n,
                                       uint64_t seed,
                                       uint64_t cap,
                                       PercolabEstimate *out);

/**
 * `φ_β(Λ_k)`, the expected number of open exit pairs of the box of radius `k`.
 *
 * # Safety
 * `model` must be a live handle and `out` valid for writes.
 */
PercolabStatus percolab_phi_box(const PercolabModel *model,
                                int64_t k,
                                uint64_t n,
                                uint64_t seed,
                                uint64_t cap,
                                PercolabEstimate *out);

/**
 * Sharp length `L_β(ε)` searched up to `k_cap`. `bounded` is set to false
 * when no crossing was found (then `out_k == k_cap`).
 *
 * # Safety
 * `model` must be a live handle; `out_k` and `bounded` valid for writes.
 */
PercolabStatus percolab_sharp_length(const PercolabModel *model,
                                     double epsilon,
                                     uint32_t k_cap,
                                     uint64_t n,
                                     uint64_t seed,
                                     uint32_t *out_k,
                                     bool *bounded);

/**
 * Runs every exact check declared by an instance in the plain-text replay
 * format. Returns `PERCOLAB_STATUS_VERIFICATION_FAILED` if any check fails;
 * the counts are written in both cases.
 *
 * # Safety
 * `text` must be a NUL-terminated string; the out-pointers valid for writes.
 */
PercolabStatus percolab_verify_instance(const char *text, uint64_t *checks, uint64_t *failures);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PERCOLAB_H */
