#ifndef ERGOFLOW_H
#define ERGOFLOW_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define EF_OK 0

#define EF_NULL_POINTER 1

#define EF_INVALID_ARGUMENT 2

#define EF_UNSUPPORTED 3

#define EF_VALIDATION 4

#define EF_INTERNAL 5

#define EF_MODE_SPAN 0

#define EF_MODE_SEP 1

/**
 * Opaque flow handle.
 */
typedef struct EfFlow EfFlow;

/**
 * Opaque section pair handle.
 */
typedef struct EfPair EfPair;

typedef struct EfConstants {
  double eps;
  double delta;
  double theta;
  double rho;
  double eps0;
  uint64_t patches;
} EfConstants;

/**
 * Point of the unit-roof suspension over the torus.
 */
typedef struct EfSuspensionPoint {
  double x;
  double y;
  double height;
} EfSuspensionPoint;

typedef struct EfGrowthFit {
  double slope;
  double endpoint_rate;
  /**
   * 1 when slope and endpoint rate agree within tolerance.
   */
  int32_t stable;
} EfGrowthFit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Creates a flow from a system name such as "cat-suspension".
 *
 * # Safety
 * `system` must be a valid NUL-terminated string and `out` a valid pointer.
 */
int32_t ergoflow_flow_new(const char *system, struct EfFlow **out);

/**
 * # Safety
 * `flow` must come from `ergoflow_flow_new` and not be used afterwards.
 */
void ergoflow_flow_free(struct EfFlow *flow);

/**
 * Builds a validated section pair with patch diameter bound `delta`.
 *
 * # Safety
 * `flow` must be a live handle and `out` a valid pointer.
 */
int32_t ergoflow_pair_build(const struct EfFlow *flow, double delta, struct EfPair **out);

/**
 * # Safety
 * `pair` must come from `ergoflow_pair_build` and not be used afterwards.
 */
void ergoflow_pair_free(struct EfPair *pair);

/**
 * # Safety
 * `pair` must be a live handle and `out` a valid pointer.
 */
int32_t ergoflow_pair_constants(const struct EfPair *pair, struct EfConstants *out);

/**
 * Chain-metric distance on a torus suspension.
 *
 * # Safety
 * All pointers must be valid.
 */
int32_t ergoflow_suspension_distance(const struct EfFlow *flow,
                                     const struct EfSuspensionPoint *x,
                                     const struct EfSuspensionPoint *y,
                                     double *out);

/**
 * Greedy count relative to the pair on a lattice of `grid` points per side
 * in each patch (free symbols for the shift).
 *
 * # Safety
 * `pair` must be a live handle and `out` a valid pointer.
 */
int32_t ergoflow_section_count(const struct EfPair *pair,
                               uint32_t grid,
                               uint32_t n,
                               double gamma,
                               int32_t mode,
                               uint64_t *out);

/**
 * Least-squares growth rate of ln(count) against n.
 *
 * # Safety
 * `ns` and `counts` must point to `len` elements; `out` must be valid.
 */
int32_t ergoflow_fit_growth(const double *ns,
                            const uint64_t *counts,
                            size_t len,
                            struct EfGrowthFit *out);

/**
 * Message for the last failed call on this thread; empty after a success.
 * Valid until the next call into the library from the same thread.
 */
const char *ergoflow_last_error_message(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ERGOFLOW_H */
