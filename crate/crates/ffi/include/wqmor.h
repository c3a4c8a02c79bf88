#ifndef WQMOR_H
#define WQMOR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Reduction method.
 */
typedef enum WqMethod {
  WQ_METHOD_BT = 0,
  WQ_METHOD_POD = 1,
  WQ_METHOD_BPOD = 2,
  WQ_METHOD_SBPOD = 3,
} WqMethod;

/**
 * Result of every fallible call.
 */
typedef enum WqStatus {
  WQ_STATUS_OK = 0,
  WQ_STATUS_NULL_POINTER = 1,
  WQ_STATUS_INVALID_ARGUMENT = 2,
  WQ_STATUS_SYNTAX = 3,
  WQ_STATUS_SEMANTIC = 4,
  WQ_STATUS_CONFIG = 5,
  WQ_STATUS_DIMENSION = 6,
  WQ_STATUS_IO = 7,
  WQ_STATUS_NUMERICAL = 8,
  WQ_STATUS_INTRACTABLE = 9,
  WQ_STATUS_INFEASIBLE = 10,
  WQ_STATUS_PANIC = 11,
} WqStatus;

/**
 * Reduced-order model with its projections.
 */
typedef struct WqReduced WqReduced;

/**
 * Assembled full-order system (first hydraulic period).
 */
typedef struct WqSystem WqSystem;

/**
 * Options for [`wq_reduce`]. A zero `fixed_order` selects the order by
 * `energy`; a zero `snapshot_length` uses the computed lower bound.
 */
typedef struct WqReduceOptions {
  enum WqMethod method;
  size_t fixed_order;
  double energy;
  size_t snapshot_length;
  size_t dense_threshold;
} WqReduceOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version, a static NUL-terminated string.
 */
const char *wq_version(void);

/**
 * Message of the last failed call on this thread; empty after a success.
 * Valid until the next call on the same thread.
 */
const char *wq_last_error(void);

/**
 * Defaults: BT, order by 99.99 % energy, automatic snapshot length, dense
 * threshold 3000.
 */
struct WqReduceOptions wq_reduce_options_default(void);

/**
 * Loads a network file and assembles the system for the given boosters and
 * sensors (node ids). Only the first hydraulic period is kept.
 *
 * # Safety
 * String arguments must be valid NUL-terminated strings; `boosters` and
 * `sensors` must point to that many of them; `out` must be writable.
 */
enum WqStatus wq_system_load(const char *network_path,
                             const char *const *boosters,
                             size_t n_boosters,
                             const char *const *sensors,
                             size_t n_sensors,
                             size_t segments_per_pipe,
                             struct WqSystem **out);

/**
 * Builds a system from dense row-major matrices.
 *
 * # Safety
 * `a` must hold `n_x²` values, `b` `n_x·n_u`, `c` `n_y·n_x`, `d` `n_y·n_u`
 * (`d` may be null for zero); `out` must be writable.
 */
enum WqStatus wq_system_new_dense(size_t n_x,
                                  size_t n_u,
                                  size_t n_y,
                                  const double *a,
                                  const double *b,
                                  const double *c,
                                  const double *d,
                                  double dt,
                                  struct WqSystem **out);

/**
 * Releases a system; null is ignored.
 *
 * # Safety
 * `sys` must come from this library and not be used afterwards.
 */
void wq_system_free(struct WqSystem *sys);

/**
 * State, input and output dimensions.
 *
 * # Safety
 * `sys` must be a live handle; the out pointers must be writable.
 */
enum WqStatus wq_system_dims(const struct WqSystem *sys, size_t *n_x, size_t *n_u, size_t *n_y);

/**
 * Spectral radius of `A`.
 *
 * # Safety
 * `sys` must be a live handle; `rho` must be writable.
 */
enum WqStatus wq_system_spectral_radius(const struct WqSystem *sys, double *rho);

/**
 * Snapshot-length lower bounds. `travel` is 0 for systems built from
 * matrices, which carry no network.
 *
 * # Safety
 * `sys` must be a live handle; the out pointers must be writable.
 */
enum WqStatus wq_system_mbar(const struct WqSystem *sys, size_t *travel, size_t *settling);

/**
 * Output of a constant input held for `steps` samples from a zero state,
 * written row-major into `y` (`n_y × steps`).
 *
 * # Safety
 * `amplitudes` must hold `n_u` values and `y` room for `n_y·steps`.
 */
enum WqStatus wq_system_step_response(const struct WqSystem *sys,
                                      const double *amplitudes,
                                      size_t steps,
                                      double *y);

/**
 * Reduces `sys`. SBPOD runs in priori mode, using the travel-time bound
 * when the system came from a network file.
 *
 * # Safety
 * `sys` must be a live handle; `opts` readable; `out` writable.
 */
enum WqStatus wq_reduce(const struct WqSystem *sys,
                        const struct WqReduceOptions *opts,
                        struct WqReduced **out);

/**
 * Releases a reduced model; null is ignored.
 *
 * # Safety
 * `red` must come from this library and not be used afterwards.
 */
void wq_reduced_free(struct WqReduced *red);

/**
 * Reduced order, input and output counts.
 *
 * # Safety
 * `red` must be a live handle; the out pointers must be writable.
 */
enum WqStatus wq_reduced_dims(const struct WqReduced *red, size_t *n_r, size_t *n_u, size_t *n_y);

/**
 * Spectral radius of `A_r`.
 *
 * # Safety
 * `red` must be a live handle; `rho` must be writable.
 */
enum WqStatus wq_reduced_spectral_radius(const struct WqReduced *red, double *rho);

/**
 * Copies `A_r`, `B_r`, `C_r`, `D_r` row-major; any output may be null to skip it.
 *
 * # Safety
 * Non-null outputs must have room for `n_r²`, `n_r·n_u`, `n_y·n_r` and `n_y·n_u` values.
 */
enum WqStatus wq_reduced_matrices(const struct WqReduced *red,
                                  double *a,
                                  double *b,
                                  double *c,
                                  double *d);

/**
 * Step response of the reduced model; see [`wq_system_step_response`].
 *
 * # Safety
 * As for [`wq_system_step_response`].
 */
enum WqStatus wq_reduced_step_response(const struct WqReduced *red,
                                       const double *amplitudes,
                                       size_t steps,
                                       double *y);

/**
 * Replaces the `n × n` row-major matrix `a` by the nearest stabilized
 * matrix found by the posterior SDP and reports its spectral radius.
 *
 * # Safety
 * `a` must hold `n²` values; `rho` may be null.
 */
enum WqStatus wq_stabilize(size_t n, double *a, double *rho);

/**
 * Simulates `x(k+1) = A x(k)` from `x0` for `steps` samples; used to check
 * stabilized matrices. Writes the final state into `x0`.
 *
 * # Safety
 * `a` must hold `n²` values and `x0` `n`.
 */
enum WqStatus wq_free_response(size_t n, const double *a, double *x0, size_t steps);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WQMOR_H */
